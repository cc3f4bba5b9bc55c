#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace bastext::testing {

GradCheckFixture make_gradcheck_fixture(const GradCheckSetup& setup) {
    auto rng = CounterRng::keyed(setup.seed, 0x6763ULL);
    Vocabulary vocab;
    for (int w = 0; w < setup.vocabulary; ++w) vocab.add(fmt::format("w{}", w), 1);
    ModelConfig config;
    config.embeddingSize = setup.embeddingSize;
    config.encoder = setup.encoder;
    config.cnn.widths = {2, 3};
    config.cnn.filters = setup.filters;
    config.pretrained = setup.pretrained;
    config.fineTuneInputs = setup.pretrained;
    config.useBias = setup.useBias;
    config.dropout = 0.0;
    config.seed = setup.seed;
    Matrix<double> vectors;
    if (setup.pretrained) {
        vectors.resize(setup.vocabulary, 5);
        for (Eigen::Index i = 0; i < vectors.size(); ++i) vectors.data()[i] = rng.uniform(-1.0, 1.0);
    }
    GradCheckFixture f{init_model<double>(config, vocab, 0, setup.pretrained ? &vectors : nullptr), {}};
    // Larger-than-default weights keep activations away from zero.
    f.state.params.for_each_tensor(config, Parameters<double>::Set::trainable, [&](const std::string&, Matrix<double>& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    });
    for (int p = 0; p < setup.products; ++p) {
        std::vector<TokenId> t(1 + rng.below(5));
        for (auto& tok : t) tok = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(setup.vocabulary)));
        f.tokens.push_back(std::move(t));
    }
    return f;
}

ExampleBatch random_batch(std::size_t products, std::size_t groups, std::uint64_t seed) {
    auto rng = CounterRng::keyed(seed, 0x6261ULL);
    ExampleBatch batch;
    for (std::size_t g = 0; g < groups; ++g) {
        auto ids = all_products(products);
        shuffle(std::span(ids), rng);
        const std::size_t ctx = 1 + rng.below(3);
        std::vector<ProductId> context(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(ctx));
        std::sort(context.begin(), context.end());
        batch.begin_group(context);
        const std::size_t candidates = 1 + rng.below(3);
        for (std::size_t c = 0; c < candidates; ++c)
            batch.add_candidate(ids[ctx + c], rng.below(2) ? Label::positive : Label::negative);
    }
    return batch;
}

namespace {

/// Every discrete choice the forward pass makes: ReLU signs and argmaxes.
std::vector<std::int64_t> activation_pattern(const ModelState<double>& state,
                                             std::span<const std::vector<TokenId>> tokens) {
    std::vector<std::int64_t> pattern;
    const auto& p = state.params;
    auto record = [&](const EncoderParams<double>& enc, const WordInputTable<double>& table) {
        for (const auto& t : tokens) {
            EncoderCache<double> cache;
            encode(enc, table, std::span(t), &cache);
            if (enc.kind == EncoderKind::mov) {
                for (Eigen::Index k = 0; k < cache.mov.preActivation.size(); ++k) pattern.push_back(cache.mov.preActivation[k] > 0);
            } else {
                for (const auto& bank : cache.cnn.argmax) pattern.insert(pattern.end(), bank.begin(), bank.end());
                for (const auto& m : cache.cnn.maxActivation)
                    for (Eigen::Index k = 0; k < m.size(); ++k) pattern.push_back(m[k] > 0);
                for (Eigen::Index k = 0; k < cache.cnn.preActivation.size(); ++k) pattern.push_back(cache.cnn.preActivation[k] > 0);
            }
        }
    };
    record(p.embedding, p.embeddingInputs);
    record(p.context, p.contextInputs);
    return pattern;
}

} // namespace

GradCheckResult check_gradients(const GradCheckFixture& fixture, const ExampleBatch& batch, double epsilon) {
    GradCheckResult result;
    auto analytic = batch_loss(batch, fixture.state, fixture.tokens);
    const auto basePattern = activation_pattern(fixture.state, fixture.tokens);
    ModelState<double> probe = fixture.state;
    using Set = Parameters<double>::Set;
    std::vector<std::string> names;
    probe.params.for_each_tensor(probe.config, Set::trainable, [&](const std::string& n, Matrix<double>&) { names.push_back(n); });
    auto params = probe.params.tensors(probe.config, Set::trainable);
    auto grads = analytic.gradients.tensors(probe.config, Set::trainable);
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (Eigen::Index i = 0; i < params[k]->size(); ++i) {
            double& x = params[k]->data()[i];
            const double saved = x;
            x = saved + epsilon;
            const double up = batch_loss(batch, probe, fixture.tokens).meanLoss;
            const bool kinkUp = activation_pattern(probe, fixture.tokens) != basePattern;
            x = saved - epsilon;
            const double down = batch_loss(batch, probe, fixture.tokens).meanLoss;
            const bool kinkDown = activation_pattern(probe, fixture.tokens) != basePattern;
            x = saved;
            if (kinkUp || kinkDown) {
                ++result.skippedKinks;
                continue;
            }
            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = grads[k]->data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++result.checked;
            if (rel > result.maxRelativeError) {
                result.maxRelativeError = rel;
                result.worstTensor = fmt::format("{}[{}]", names[k], i);
            }
        }
    }
    return result;
}

} // namespace bastext::testing
