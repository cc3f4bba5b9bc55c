#include "bastext/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

namespace bastext {

PopModel build_pop(std::span<const Basket> trainBaskets, std::size_t productCount) {
    PopModel model;
    model.counts.assign(productCount, 0);
    for (const auto& b : trainBaskets)
        for (ProductId id : b.productIds) ++model.counts[static_cast<std::size_t>(id)];
    model.ranking = all_products(productCount);
    std::stable_sort(model.ranking.begin(), model.ranking.end(), [&](ProductId a, ProductId b) {
        return model.counts[static_cast<std::size_t>(a)] > model.counts[static_cast<std::size_t>(b)];
    });
    return model;
}

double pop_score(ProductId candidate, std::span<const ProductId>, const PopModel& model) {
    return static_cast<double>(model.counts[static_cast<std::size_t>(candidate)]);
}

void PopScorer::score_all(std::span<const ProductId>, std::span<double> out) const {
    for (std::size_t i = 0; i < model_.counts.size(); ++i) out[i] = static_cast<double>(model_.counts[i]);
}

ItemKnnModel build_itemknn(std::span<const Basket> trainBaskets, std::size_t productCount) {
    ItemKnnModel model;
    model.counts.assign(productCount, 0);
    std::vector<std::unordered_map<ProductId, std::uint32_t>> rows(productCount);
    for (const auto& b : trainBaskets) {
        for (std::size_t x = 0; x < b.size(); ++x) {
            const ProductId i = b.productIds[x];
            ++model.counts[static_cast<std::size_t>(i)];
            auto& row = rows[static_cast<std::size_t>(i)];
            for (std::size_t y = 0; y < b.size(); ++y)
                if (y != x) ++row[b.productIds[y]];
        }
    }
    model.cooccurrence.resize(productCount);
    for (std::size_t i = 0; i < productCount; ++i) {
        auto& dst = model.cooccurrence[i];
        dst.assign(rows[i].begin(), rows[i].end());
        std::sort(dst.begin(), dst.end());
    }
    return model;
}

std::uint32_t ItemKnnModel::cooc(ProductId i, ProductId j) const {
    const auto& row = cooccurrence[static_cast<std::size_t>(i)];
    const auto it = std::lower_bound(row.begin(), row.end(), std::pair<ProductId, std::uint32_t>{j, 0});
    return it != row.end() && it->first == j ? it->second : 0;
}

double ItemKnnModel::similarity(ProductId i, ProductId j) const {
    if (i == j) return 0.0;
    const auto ci = counts[static_cast<std::size_t>(i)], cj = counts[static_cast<std::size_t>(j)];
    if (ci == 0 || cj == 0) return 0.0;
    return static_cast<double>(cooc(i, j)) / std::sqrt(static_cast<double>(ci) * static_cast<double>(cj));
}

double itemknn_score(ProductId candidate, std::span<const ProductId> context, const ItemKnnModel& model,
                     bool lastItemOnly) {
    if (context.empty()) return 0.0;
    if (lastItemOnly) return model.similarity(candidate, context.back());
    double sum = 0.0;
    for (ProductId j : context) sum += model.similarity(candidate, j);
    return sum / static_cast<double>(context.size());
}

void ItemKnnScorer::score_all(std::span<const ProductId> context, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (context.empty()) return;
    const auto used = lastItemOnly_ ? context.last(1) : context;
    const double scale = 1.0 / static_cast<double>(used.size());
    for (ProductId j : used) {
        const auto cj = model_.counts[static_cast<std::size_t>(j)];
        if (cj == 0) continue;
        for (const auto& [i, c] : model_.cooccurrence[static_cast<std::size_t>(j)]) {
            const auto ci = model_.counts[static_cast<std::size_t>(i)];
            out[static_cast<std::size_t>(i)] += scale * (static_cast<double>(c) / std::sqrt(static_cast<double>(ci) * static_cast<double>(cj)));
        }
    }
}

namespace {

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

} // namespace

SkipGramGradient skipgram_gradient(const Prod2vecModel& model, ProductId center, ProductId target,
                                   std::span<const ProductId> negatives) {
    SkipGramGradient g;
    const auto in = model.inVectors.row(center).transpose();
    g.center = Vector<double>::Zero(model.inVectors.cols());
    auto term = [&](ProductId id, double label) {
        const auto out = model.outVectors.row(id).transpose();
        const double z = in.dot(out);
        g.loss -= label > 0 ? log_sigmoid(z) : log_sigmoid(-z);
        const double coef = sigmoid(z) - label;
        g.center += coef * out;
        g.outputs.push_back(coef * in);
    };
    term(target, 1.0);
    for (ProductId n : negatives) term(n, 0.0);
    return g;
}

Prod2vecModel prod2vec_train(std::span<const Basket> trainBaskets, std::size_t productCount,
                             const Prod2vecConfig& config) {
    if (config.embeddingSize < 1 || config.negatives < 0 || config.epochs < 1)
        throw Error("invalid prod2vec configuration");
    const auto M = static_cast<Eigen::Index>(productCount);
    const Eigen::Index K = config.embeddingSize;
    Prod2vecModel model;
    model.inVectors = Matrix<double>::Zero(M, K);
    model.outVectors = Matrix<double>::Zero(M, K);
    model.trained.assign(productCount, 0);

    std::vector<double> weight(productCount, 0.0);
    for (const auto& b : trainBaskets)
        for (ProductId id : b.productIds) weight[static_cast<std::size_t>(id)] += 1.0;
    auto init = CounterRng::keyed(config.seed, 0x703276ULL /* p2v */);
    for (std::size_t i = 0; i < productCount; ++i) {
        if (weight[i] == 0.0) continue;
        model.trained[i] = 1;
        for (Eigen::Index k = 0; k < K; ++k)
            model.inVectors(static_cast<Eigen::Index>(i), k) = init.uniform(-0.5, 0.5) / static_cast<double>(K);
    }
    std::vector<double> cumulative(productCount);
    double total = 0.0;
    for (std::size_t i = 0; i < productCount; ++i) {
        total += weight[i] > 0 ? std::pow(weight[i], config.samplingPower) : 0.0;
        cumulative[i] = total;
    }
    if (total == 0.0) throw Error("prod2vec needs at least one training basket");
    auto drawNegative = [&](CounterRng& rng) {
        const double u = rng.uniform() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return static_cast<ProductId>(std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), productCount - 1));
    };

    std::size_t pairsPerEpoch = 0;
    for (const auto& b : trainBaskets) pairsPerEpoch += b.size() * (b.size() - 1);
    const double totalPairs = static_cast<double>(pairsPerEpoch) * config.epochs;
    double processed = 0.0;
    std::vector<ProductId> negatives(static_cast<std::size_t>(config.negatives));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t b = 0; b < trainBaskets.size(); ++b) {
            const auto& ids = trainBaskets[b].productIds;
            auto rng = CounterRng::keyed(config.seed, 0x6e6567ULL, static_cast<std::uint64_t>(epoch), b);
            for (ProductId center : ids) {
                for (ProductId target : ids) {
                    if (target == center) continue;
                    const double lr = config.learningRate * std::max(1e-4, 1.0 - processed / totalPairs);
                    processed += 1.0;
                    for (auto& n : negatives) {
                        do n = drawNegative(rng);
                        while (n == target);
                    }
                    const auto g = skipgram_gradient(model, center, target, negatives);
                    model.outVectors.row(target) -= lr * g.outputs[0].transpose();
                    for (std::size_t k = 0; k < negatives.size(); ++k)
                        model.outVectors.row(negatives[k]) -= lr * g.outputs[k + 1].transpose();
                    model.inVectors.row(center) -= lr * g.center.transpose();
                }
            }
        }
    }
    return model;
}

double prod2vec_score(ProductId candidate, std::span<const ProductId> context, const Prod2vecModel& model) {
    if (context.empty()) return 0.0;
    Vector<double> mean = Vector<double>::Zero(model.inVectors.cols());
    for (ProductId j : context) mean += model.inVectors.row(j).transpose();
    mean /= static_cast<double>(context.size());
    const auto v = model.inVectors.row(candidate).transpose();
    const double denom = mean.norm() * v.norm();
    return denom > 0.0 ? mean.dot(v) / denom : 0.0;
}

Prod2vecScorer::Prod2vecScorer(Prod2vecModel model) : model_(std::move(model)) {
    unit_ = model_.inVectors;
    for (Eigen::Index i = 0; i < unit_.rows(); ++i) {
        const double n = unit_.row(i).norm();
        if (n > 0.0) unit_.row(i) /= n;
    }
}

void Prod2vecScorer::score_all(std::span<const ProductId> context, std::span<double> out) const {
    Vector<double> mean = Vector<double>::Zero(model_.inVectors.cols());
    for (ProductId j : context) mean += model_.inVectors.row(j).transpose();
    mean /= static_cast<double>(std::max<std::size_t>(context.size(), 1));
    const double n = mean.norm();
    if (n > 0.0) mean /= n;
    const Vector<double> s = unit_ * mean;
    for (Eigen::Index i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s[i];
}

void export_vectors(const Matrix<double>& vectors, const Catalog& catalog, const std::filesystem::path& path) {
    if (static_cast<std::size_t>(vectors.rows()) != catalog.size()) throw Error("vector rows do not match the catalog");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    for (const auto& p : catalog) {
        out << p.externalId;
        for (Eigen::Index k = 0; k < vectors.cols(); ++k) out << fmt::format(" {:.9g}", vectors(p.id, k));
        out << '\n';
    }
}

} // namespace bastext
