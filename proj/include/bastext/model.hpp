#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bastext/corpus.hpp"
#include "bastext/encoders.hpp"
#include "bastext/metrics.hpp"
#include "bastext/parallel.hpp"
#include "bastext/random.hpp"
#include "bastext/types.hpp"

namespace bastext {

struct ModelConfig {
    int embeddingSize = 64; // K
    int negatives = 8;      // n
    EncoderKind encoder = EncoderKind::mov;
    bool pretrained = false;
    bool fineTuneInputs = false;
    CnnShape cnn;
    std::size_t batchSize = 10000; // positives per optimizer step
    double learningRate = 1e-3;
    double adamBeta1 = 0.9;
    double adamBeta2 = 0.999;
    double adamEps = 1e-8;
    double dropout = 0.2;
    int epochs = 30;
    int patience = 3;
    std::uint64_t seed = 42;
    bool useBias = false;
    std::size_t validationCases = 2000;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Parameters: the two encoders, their word inputs and the optional bias.

template <typename Scalar>
struct Parameters {
    EncoderParams<Scalar> embedding; // f_E
    EncoderParams<Scalar> context;   // f_C
    WordInputTable<Scalar> embeddingInputs;
    WordInputTable<Scalar> contextInputs;
    Matrix<Scalar> bias = Matrix<Scalar>::Zero(1, 1);

    enum class Set { trainable, stored };

    /// Visits (name, tensor) in a fixed order. `trainable` is what Adam
    /// updates; `stored` is what the model file carries.
    template <typename Self, typename F>
    static void visit(Self& self, const ModelConfig& config, Set set, F&& f) {
        self.embedding.for_each_tensor([&](const std::string& name, auto& m) { f("embedding." + name, m); });
        self.context.for_each_tensor([&](const std::string& name, auto& m) { f("context." + name, m); });
        const bool inputs = config.pretrained && (set == Set::stored || config.fineTuneInputs);
        if (inputs) {
            f(std::string("embedding.inputs"), self.embeddingInputs.vectors);
            f(std::string("context.inputs"), self.contextInputs.vectors);
        }
        if (config.useBias) f(std::string("bias"), self.bias);
    }
    template <typename F>
    void for_each_tensor(const ModelConfig& config, Set set, F&& f) {
        visit(*this, config, set, f);
    }
    template <typename F>
    void for_each_tensor(const ModelConfig& config, Set set, F&& f) const {
        visit(*this, config, set, f);
    }

    std::vector<Matrix<Scalar>*> tensors(const ModelConfig& config, Set set) {
        std::vector<Matrix<Scalar>*> out;
        for_each_tensor(config, set, [&](const std::string&, Matrix<Scalar>& m) { out.push_back(&m); });
        return out;
    }

    Parameters zeros_like() const {
        Parameters z = *this;
        z.embedding = embedding.zeros_like();
        z.context = context.zeros_like();
        z.embeddingInputs.vectors.setZero();
        z.contextInputs.vectors.setZero();
        z.bias.setZero();
        return z;
    }

    template <typename To>
    Parameters<To> cast() const {
        Parameters<To> p;
        p.embedding = embedding.template cast<To>();
        p.context = context.template cast<To>();
        p.embeddingInputs = embeddingInputs.template cast<To>();
        p.contextInputs = contextInputs.template cast<To>();
        p.bias = bias.template cast<To>();
        return p;
    }
};

template <typename Scalar>
struct AdamMoments {
    Parameters<Scalar> first;
    Parameters<Scalar> second;
    std::uint64_t step = 0;
};

template <typename Scalar>
struct ModelState {
    ModelConfig config;
    Vocabulary vocabulary;
    std::uint64_t catalogFingerprint = 0;
    Parameters<Scalar> params;
    AdamMoments<Scalar> adam;
};

/// Fresh model over a vocabulary. `pretrained` supplies input vectors when
/// config.pretrained is set (rows follow the vocabulary).
template <typename Scalar>
ModelState<Scalar> init_model(const ModelConfig& config, const Vocabulary& vocabulary, std::uint64_t catalogFingerprint,
                              const Matrix<double>* pretrained = nullptr) {
    config.validate();
    ModelState<Scalar> state;
    state.config = config;
    state.vocabulary = vocabulary;
    state.catalogFingerprint = catalogFingerprint;
    WordInputTable<Scalar> inputs = WordInputTable<Scalar>::onehot(vocabulary.size());
    if (config.pretrained) {
        if (!pretrained || static_cast<std::size_t>(pretrained->rows()) != vocabulary.size())
            throw Error("pretrained model requested without vectors matching the vocabulary");
        inputs = WordInputTable<Scalar>::pretrained(pretrained->template cast<Scalar>());
    }
    auto rng = CounterRng::keyed(config.seed, 0x696e6974ULL /* init */);
    const Eigen::Index K = config.embeddingSize;
    state.params.embedding = init_encoder<Scalar>(config.encoder, inputs.dim(), K, config.cnn, rng);
    state.params.context = init_encoder<Scalar>(config.encoder, inputs.dim(), K, config.cnn, rng);
    state.params.embeddingInputs = inputs;
    state.params.contextInputs = inputs;
    state.adam.first = state.params.zeros_like();
    state.adam.second = state.params.zeros_like();
    return state;
}

// ---------------------------------------------------------------------------
// Scoring

template <typename Scalar>
struct ProductVectors {
    Matrix<Scalar> embedding; // M x K, rows h_i
    Matrix<Scalar> context;   // M x K, rows h'_i
    std::vector<char> degenerate;
};

/// Encodes every product with dropout disabled.
template <typename Scalar>
ProductVectors<Scalar> materialize_product_vectors(const Parameters<Scalar>& params,
                                                   std::span<const std::vector<TokenId>> productTokens,
                                                   int threads = 1) {
    const auto M = static_cast<Eigen::Index>(productTokens.size());
    const Eigen::Index K = params.embedding.outputSize();
    ProductVectors<Scalar> pv;
    pv.embedding.resize(M, K);
    pv.context.resize(M, K);
    pv.degenerate.assign(productTokens.size(), 0);
    parallel_for(productTokens.size(), threads, [&](std::size_t i) {
        const auto& tokens = productTokens[i];
        pv.embedding.row(static_cast<Eigen::Index>(i)) = encode(params.embedding, params.embeddingInputs, std::span(tokens)).transpose();
        pv.context.row(static_cast<Eigen::Index>(i)) = encode(params.context, params.contextInputs, std::span(tokens)).transpose();
        pv.degenerate[i] = tokens.empty();
    });
    return pv;
}

/// Mean of the context vectors of the context products.
template <typename Scalar>
Vector<Scalar> basket_vector(std::span<const ProductId> contextIds, const Matrix<Scalar>& contextVectors) {
    if (contextIds.empty()) throw Error("basket vector of an empty context");
    Vector<Scalar> sum = Vector<Scalar>::Zero(contextVectors.cols());
    for (ProductId j : contextIds) sum += contextVectors.row(j).transpose();
    return sum / static_cast<Scalar>(contextIds.size());
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar z) {
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
    const Scalar e = std::exp(z);
    return e / (Scalar(1) + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

template <typename Scalar>
Scalar logit(ProductId candidate, std::span<const ProductId> contextIds, const ProductVectors<Scalar>& vectors,
             Scalar bias = Scalar(0)) {
    return vectors.embedding.row(candidate).dot(basket_vector(contextIds, vectors.context)) + bias;
}

/// p(next = candidate | context) = sigmoid(h_i . mean h'_B)
template <typename Scalar>
Scalar score(ProductId candidate, std::span<const ProductId> contextIds, const ProductVectors<Scalar>& vectors,
             Scalar bias = Scalar(0)) {
    return stable_sigmoid(logit(candidate, contextIds, vectors, bias));
}

template <typename Scalar>
Scalar model_bias(const ModelState<Scalar>& state) {
    return state.config.useBias ? state.params.bias(0, 0) : Scalar(0);
}

// ---------------------------------------------------------------------------
// Loss and gradients

/// Examples grouped by shared context: group g owns
/// contextIds[contextOffsets[g] .. contextOffsets[g+1]) and
/// candidates[candidateOffsets[g] .. candidateOffsets[g+1]).
struct ExampleBatch {
    std::vector<ProductId> contextIds;
    std::vector<std::size_t> contextOffsets{0};
    std::vector<ProductId> candidates;
    std::vector<Label> labels;
    std::vector<std::size_t> candidateOffsets{0};

    std::size_t groups() const { return contextOffsets.size() - 1; }
    std::size_t examples() const { return candidates.size(); }

    void begin_group(std::span<const ProductId> context) {
        contextIds.insert(contextIds.end(), context.begin(), context.end());
        contextOffsets.push_back(contextIds.size());
        candidateOffsets.push_back(candidates.size());
    }
    void add_candidate(ProductId id, Label label) {
        candidates.push_back(id);
        labels.push_back(label);
        candidateOffsets.back() = candidates.size();
    }
    std::span<const ProductId> context(std::size_t g) const {
        return std::span(contextIds).subspan(contextOffsets[g], contextOffsets[g + 1] - contextOffsets[g]);
    }

    static ExampleBatch from_examples(std::span<const TrainingExample> examples) {
        ExampleBatch b;
        for (const auto& ex : examples) {
            b.begin_group(ex.contextIds);
            b.add_candidate(ex.candidateId, ex.label);
        }
        return b;
    }
};

/// Dropout masks are drawn per (step, encoder side, product), so every use
/// of a product inside one batch sees the same mask.
struct DropoutSchedule {
    double rate = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};

template <typename Scalar>
struct LossResult {
    double meanLoss = 0.0;
    std::size_t examples = 0;
    Parameters<Scalar> gradients;
};

namespace detail {

inline std::vector<ProductId> sorted_unique(std::vector<ProductId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

inline std::size_t slot_of(const std::vector<ProductId>& unique, ProductId id) {
    return static_cast<std::size_t>(std::lower_bound(unique.begin(), unique.end(), id) - unique.begin());
}

} // namespace detail

/// Mean binary cross-entropy over the batch and its exact gradient with
/// respect to every trainable tensor. Each distinct product is encoded once
/// per side; per-example work is then dot products over cached vectors.
template <typename Scalar>
LossResult<Scalar> batch_loss(const ExampleBatch& batch, const ModelState<Scalar>& state,
                              std::span<const std::vector<TokenId>> productTokens,
                              const std::optional<DropoutSchedule>& training = std::nullopt, int threads = 1) {
    const auto& params = state.params;
    const auto& config = state.config;
    const std::size_t N = batch.examples();
    if (N == 0) throw Error("batch loss of an empty batch");
    const Eigen::Index K = params.embedding.outputSize();

    const auto uniqueE = detail::sorted_unique(batch.candidates);
    const auto uniqueC = detail::sorted_unique(batch.contextIds);
    Matrix<Scalar> HE(static_cast<Eigen::Index>(uniqueE.size()), K);
    Matrix<Scalar> HC(static_cast<Eigen::Index>(uniqueC.size()), K);
    std::vector<EncoderCache<Scalar>> cacheE(uniqueE.size()), cacheC(uniqueC.size());

    auto forward = [&](const std::vector<ProductId>& unique, const EncoderParams<Scalar>& enc,
                       const WordInputTable<Scalar>& inputs, Matrix<Scalar>& H, std::vector<EncoderCache<Scalar>>& caches,
                       std::uint64_t side) {
        parallel_for(unique.size(), threads, [&](std::size_t u) {
            const ProductId id = unique[u];
            const auto& tokens = productTokens[static_cast<std::size_t>(id)];
            if (training && training->rate > 0.0) {
                auto rng = CounterRng::keyed(training->seed, 0x64726f70ULL, training->step, side, static_cast<std::uint64_t>(id));
                H.row(static_cast<Eigen::Index>(u)) = encode(enc, inputs, std::span(tokens), &caches[u], Dropout{training->rate, &rng}).transpose();
            } else {
                H.row(static_cast<Eigen::Index>(u)) = encode(enc, inputs, std::span(tokens), &caches[u]).transpose();
            }
        });
    };
    forward(uniqueE, params.embedding, params.embeddingInputs, HE, cacheE, 0);
    forward(uniqueC, params.context, params.contextInputs, HC, cacheC, 1);

    const Scalar bias = config.useBias ? params.bias(0, 0) : Scalar(0);
    const Scalar invN = Scalar(1) / static_cast<Scalar>(N);
    const std::size_t G = batch.groups();

    // Per group: the basket vector, and per candidate dLoss/dlogit.
    Matrix<Scalar> basketVectors(static_cast<Eigen::Index>(G), K);
    std::vector<Scalar> dLogit(N);
    std::vector<double> groupLoss(G, 0.0);
    std::vector<std::size_t> ctxSlots(batch.contextIds.size()), candSlots(N);
    for (std::size_t i = 0; i < batch.contextIds.size(); ++i) ctxSlots[i] = detail::slot_of(uniqueC, batch.contextIds[i]);
    for (std::size_t i = 0; i < N; ++i) candSlots[i] = detail::slot_of(uniqueE, batch.candidates[i]);

    parallel_for(G, threads, [&](std::size_t g) {
        const std::size_t c0 = batch.contextOffsets[g], c1 = batch.contextOffsets[g + 1];
        if (c0 == c1) throw Error("training example with an empty context");
        Vector<Scalar> c = Vector<Scalar>::Zero(K);
        for (std::size_t i = c0; i < c1; ++i) c += HC.row(static_cast<Eigen::Index>(ctxSlots[i])).transpose();
        c /= static_cast<Scalar>(c1 - c0);
        double loss = 0.0;
        for (std::size_t e = batch.candidateOffsets[g]; e < batch.candidateOffsets[g + 1]; ++e) {
            const Scalar z = HE.row(static_cast<Eigen::Index>(candSlots[e])).dot(c) + bias;
            const bool positive = batch.labels[e] == Label::positive;
            loss += positive ? softplus(-static_cast<double>(z)) : softplus(static_cast<double>(z));
            dLogit[e] = (stable_sigmoid(z) - (positive ? Scalar(1) : Scalar(0))) * invN;
        }
        basketVectors.row(static_cast<Eigen::Index>(g)) = c.transpose();
        groupLoss[g] = loss;
    });

    LossResult<Scalar> result;
    result.examples = N;
    double total = 0.0;
    for (double l : groupLoss) total += l;
    result.meanLoss = total / static_cast<double>(N);
    if (!std::isfinite(result.meanLoss))
        throw Error(fmt::format("non-finite loss {} (check learning rate and initialization)", result.meanLoss));

    // Scatter into per-product output gradients in group order.
    Matrix<Scalar> dHE = Matrix<Scalar>::Zero(HE.rows(), K);
    Matrix<Scalar> dHC = Matrix<Scalar>::Zero(HC.rows(), K);
    Scalar dBias = 0;
    Vector<Scalar> acc(K);
    for (std::size_t g = 0; g < G; ++g) {
        acc.setZero();
        for (std::size_t e = batch.candidateOffsets[g]; e < batch.candidateOffsets[g + 1]; ++e) {
            const auto slot = static_cast<Eigen::Index>(candSlots[e]);
            dHE.row(slot) += dLogit[e] * basketVectors.row(static_cast<Eigen::Index>(g));
            acc += dLogit[e] * HE.row(slot).transpose();
            dBias += dLogit[e];
        }
        const std::size_t c0 = batch.contextOffsets[g], c1 = batch.contextOffsets[g + 1];
        acc /= static_cast<Scalar>(c1 - c0);
        for (std::size_t i = c0; i < c1; ++i) dHC.row(static_cast<Eigen::Index>(ctxSlots[i])) += acc.transpose();
    }

    result.gradients = params.zeros_like();
    auto& grads = result.gradients;
    const bool inputGrads = config.pretrained && config.fineTuneInputs;
    Vector<Scalar> row(K);
    for (std::size_t u = 0; u < uniqueE.size(); ++u) {
        row = dHE.row(static_cast<Eigen::Index>(u)).transpose();
        encoder_backward(params.embedding, params.embeddingInputs, cacheE[u], row, grads.embedding,
                         inputGrads ? &grads.embeddingInputs.vectors : nullptr);
    }
    for (std::size_t u = 0; u < uniqueC.size(); ++u) {
        row = dHC.row(static_cast<Eigen::Index>(u)).transpose();
        encoder_backward(params.context, params.contextInputs, cacheC[u], row, grads.context,
                         inputGrads ? &grads.contextInputs.vectors : nullptr);
    }
    if (config.useBias) grads.bias(0, 0) = dBias;
    return result;
}

template <typename Scalar>
LossResult<Scalar> batch_loss(std::span<const TrainingExample> examples, const ModelState<Scalar>& state,
                              std::span<const std::vector<TokenId>> productTokens,
                              const std::optional<DropoutSchedule>& training = std::nullopt, int threads = 1) {
    return batch_loss(ExampleBatch::from_examples(examples), state, productTokens, training, threads);
}

/// Bias-corrected Adam over the trainable tensors; frozen inputs untouched.
template <typename Scalar>
void adam_step(ModelState<Scalar>& state, Parameters<Scalar>& gradients) {
    const auto& c = state.config;
    using Set = typename Parameters<Scalar>::Set;
    auto params = state.params.tensors(c, Set::trainable);
    auto grads = gradients.tensors(c, Set::trainable);
    auto m = state.adam.first.tensors(c, Set::trainable);
    auto v = state.adam.second.tensors(c, Set::trainable);
    const std::uint64_t t = ++state.adam.step;
    const auto b1 = static_cast<Scalar>(c.adamBeta1), b2 = static_cast<Scalar>(c.adamBeta2);
    const auto correction1 = static_cast<Scalar>(1.0 - std::pow(c.adamBeta1, static_cast<double>(t)));
    const auto correction2 = static_cast<Scalar>(1.0 - std::pow(c.adamBeta2, static_cast<double>(t)));
    const auto lr = static_cast<Scalar>(c.learningRate), eps = static_cast<Scalar>(c.adamEps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k]->rows() != params[k]->rows() || grads[k]->cols() != params[k]->cols())
            throw Error("Adam step: gradient shape mismatch");
        auto g = grads[k]->array();
        auto mk = m[k]->array();
        auto vk = v[k]->array();
        mk = b1 * mk + (Scalar(1) - b1) * g;
        vk = b2 * vk + (Scalar(1) - b2) * g.square();
        params[k]->array() -= lr * (mk / correction1) / ((vk / correction2).sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    int epoch = 0;
    double meanLoss = 0.0;
    double validationRecall = -1.0; // negative when there is no validation data
    double seconds = 0.0;
    std::size_t steps = 0;
};

struct TrainingLog {
    double initialLoss = 0.0;
    std::vector<EpochRecord> epochs;
    int bestEpoch = 0;
    std::size_t examplesPerStep = 0; // of the first step

    /// One machine-parsable line per epoch.
    static std::string format_line(const EpochRecord& r);
};

struct TrainOptions {
    int threads = 1;
    std::function<void(const EpochRecord&)> onEpoch;
    int validationN = 20;
};

/// Leave-one-out validation cases, capped deterministically.
struct ValidationCases {
    std::vector<std::vector<ProductId>> contexts; // sorted
    std::vector<ProductId> heldOut;
};
ValidationCases sample_validation_cases(std::span<const Basket> baskets, std::size_t cap, std::uint64_t seed);

/// Recall@n of the model on the cases; all products minus the context are
/// candidates.
template <typename Scalar>
double validation_recall(const ModelState<Scalar>& state, std::span<const std::vector<TokenId>> productTokens,
                         const ValidationCases& cases, Rank n, int threads) {
    if (cases.heldOut.empty()) return -1.0;
    const auto vectors = materialize_product_vectors(state.params, productTokens, threads);
    std::vector<Rank> ranks(cases.heldOut.size());
    const Scalar bias = model_bias(state);
    parallel_for(ranks.size(), threads, [&](std::size_t i) {
        const Vector<Scalar> c = basket_vector(std::span(cases.contexts[i]), vectors.context);
        const Vector<Scalar> logits = vectors.embedding * c;
        std::vector<double> scores(static_cast<std::size_t>(logits.size()));
        for (Eigen::Index j = 0; j < logits.size(); ++j) scores[static_cast<std::size_t>(j)] = static_cast<double>(logits[j] + bias);
        ranks[i] = rank_of(cases.heldOut[i], scores, cases.contexts[i]);
    });
    return recall_at_n(ranks, n);
}

/// Mini-batch Adam with fresh uniform negatives per positive at every step.
/// Keeps the parameters of the best validation epoch.
template <typename Scalar>
ModelState<Scalar> train(ModelState<Scalar> state, std::span<const Basket> trainBaskets,
                         std::span<const Basket> validationBaskets, std::span<const std::vector<TokenId>> productTokens,
                         TrainingLog& log, const TrainOptions& options = {}) {
    const auto& config = state.config;
    config.validate();
    struct Positive {
        std::uint32_t basket;
        std::uint32_t position;
    };
    std::vector<Positive> positives;
    for (std::size_t b = 0; b < trainBaskets.size(); ++b) {
        if (trainBaskets[b].size() < 2) continue;
        for (std::size_t k = 0; k < trainBaskets[b].size(); ++k)
            positives.push_back({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(k)});
    }
    if (positives.empty()) throw Error("no training examples");
    const auto pool = products_in(trainBaskets);
    const auto validation = sample_validation_cases(validationBaskets, config.validationCases, config.seed);

    auto buildBatch = [&](std::span<const Positive> slice, int epoch, std::size_t firstIndex) {
        ExampleBatch batch;
        std::vector<ProductId> context;
        for (std::size_t k = 0; k < slice.size(); ++k) {
            const auto& basket = trainBaskets[slice[k].basket];
            const ProductId candidate = basket.productIds[slice[k].position];
            context.clear();
            for (std::size_t j = 0; j < basket.size(); ++j)
                if (j != slice[k].position) context.push_back(basket.productIds[j]);
            batch.begin_group(context);
            batch.add_candidate(candidate, Label::positive);
            auto rng = CounterRng::keyed(config.seed, 0x6e6567ULL, static_cast<std::uint64_t>(epoch), firstIndex + k);
            for (int s = 0; s < config.negatives; ++s)
                batch.add_candidate(draw_excluding(pool, basket.productIds, rng), Label::negative);
        }
        return batch;
    };

    log = TrainingLog{};
    std::optional<Parameters<Scalar>> best;
    double bestRecall = -2.0;
    int sinceBest = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        auto shuffleRng = CounterRng::keyed(config.seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch));
        shuffle(std::span(positives), shuffleRng);
        double lossSum = 0.0;
        std::size_t exampleCount = 0, steps = 0;
        for (std::size_t start = 0; start < positives.size(); start += config.batchSize) {
            const std::size_t len = std::min(config.batchSize, positives.size() - start);
            const auto batch = buildBatch(std::span(positives).subspan(start, len), epoch, start);
            const DropoutSchedule dropout{config.dropout, config.seed, state.adam.step};
            auto result = batch_loss(batch, state, productTokens, dropout, options.threads);
            if (epoch == 1 && start == 0) {
                log.initialLoss = result.meanLoss;
                log.examplesPerStep = result.examples;
            }
            lossSum += result.meanLoss * static_cast<double>(result.examples);
            exampleCount += result.examples;
            adam_step(state, result.gradients);
            ++steps;
        }
        EpochRecord record;
        record.epoch = epoch;
        record.meanLoss = lossSum / static_cast<double>(exampleCount);
        record.steps = steps;
        record.validationRecall = validation_recall(state, productTokens, validation, static_cast<Rank>(options.validationN), options.threads);
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        log.epochs.push_back(record);
        if (options.onEpoch) options.onEpoch(record);
        if (record.validationRecall > bestRecall) {
            bestRecall = record.validationRecall;
            best = state.params;
            log.bestEpoch = epoch;
            sinceBest = 0;
        } else if (record.validationRecall >= 0 && ++sinceBest >= config.patience) {
            break;
        }
        if (record.validationRecall < 0) {
            best = state.params;
            log.bestEpoch = epoch;
        }
    }
    if (best) state.params = std::move(*best);
    return state;
}

// ---------------------------------------------------------------------------
// Model file: little-endian "BSTX" container, float32 tensors.

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const ModelState<float>& state, const std::filesystem::path& path);
ModelState<float> load_model(const std::filesystem::path& path);
std::string model_bytes(const ModelState<float>& state);
ModelState<float> parse_model(std::string_view bytes);

} // namespace bastext
