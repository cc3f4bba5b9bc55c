#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "bastext/corpus.hpp"
#include "bastext/scorer.hpp"
#include "bastext/types.hpp"

namespace bastext {

// ---------------------------------------------------------------------------
// POP: training purchase counts, context ignored.

struct PopModel {
    std::vector<std::uint64_t> counts;
    std::vector<ProductId> ranking; // count descending, id ascending on ties
};

PopModel build_pop(std::span<const Basket> trainBaskets, std::size_t productCount);
double pop_score(ProductId candidate, std::span<const ProductId> context, const PopModel& model);

class PopScorer final : public Scorer {
public:
    explicit PopScorer(PopModel model) : model_(std::move(model)) {}
    std::string name() const override { return "pop"; }
    std::size_t product_count() const override { return model_.counts.size(); }
    void score_all(std::span<const ProductId> context, std::span<double> out) const override;

private:
    PopModel model_;
};

// ---------------------------------------------------------------------------
// ItemKNN: sim(i, j) = cooc(i, j) / sqrt(count(i) count(j)), the cosine
// between the basket-incidence vectors of i and j.

struct ItemKnnModel {
    std::vector<std::uint64_t> counts;
    /// Row i: (j, cooc(i, j)) for j != i, sorted by j.
    std::vector<std::vector<std::pair<ProductId, std::uint32_t>>> cooccurrence;

    std::uint32_t cooc(ProductId i, ProductId j) const;
    double similarity(ProductId i, ProductId j) const;
};

ItemKnnModel build_itemknn(std::span<const Basket> trainBaskets, std::size_t productCount);

/// Mean similarity to the context items, or to the last one only.
double itemknn_score(ProductId candidate, std::span<const ProductId> context, const ItemKnnModel& model,
                     bool lastItemOnly = false);

class ItemKnnScorer final : public Scorer {
public:
    ItemKnnScorer(ItemKnnModel model, bool lastItemOnly) : model_(std::move(model)), lastItemOnly_(lastItemOnly) {}
    std::string name() const override { return lastItemOnly_ ? "itemknn-last" : "itemknn"; }
    std::size_t product_count() const override { return model_.counts.size(); }
    void score_all(std::span<const ProductId> context, std::span<double> out) const override;

private:
    ItemKnnModel model_;
    bool lastItemOnly_;
};

// ---------------------------------------------------------------------------
// prod2vec: skip-gram with negative sampling where every ordered pair of
// distinct products in a basket is a (center, context) pair.

struct Prod2vecConfig {
    int embeddingSize = 64;
    int negatives = 8;
    double learningRate = 0.025;
    int epochs = 5;
    std::uint64_t seed = 42;
    /// Exponent of the unigram distribution negatives are drawn from.
    double samplingPower = 0.75;
};

struct Prod2vecModel {
    Matrix<double> inVectors;  // M x K
    Matrix<double> outVectors; // M x K
    std::vector<char> trained; // product occurred in training baskets
};

struct SkipGramGradient {
    double loss = 0.0;
    Vector<double> center;               // dLoss/d in[center]
    std::vector<Vector<double>> outputs; // dLoss/d out[target], then per negative
};

/// loss = -log s(in_c . out_t) - sum_k log s(-in_c . out_k)
SkipGramGradient skipgram_gradient(const Prod2vecModel& model, ProductId center, ProductId target,
                                   std::span<const ProductId> negatives);

Prod2vecModel prod2vec_train(std::span<const Basket> trainBaskets, std::size_t productCount,
                             const Prod2vecConfig& config);

/// cosine(mean in-vector of the context, in-vector of the candidate); zero
/// vectors give 0.
double prod2vec_score(ProductId candidate, std::span<const ProductId> context, const Prod2vecModel& model);

class Prod2vecScorer final : public Scorer {
public:
    explicit Prod2vecScorer(Prod2vecModel model);
    std::string name() const override { return "prod2vec"; }
    std::size_t product_count() const override { return static_cast<std::size_t>(model_.inVectors.rows()); }
    void score_all(std::span<const ProductId> context, std::span<double> out) const override;
    const Prod2vecModel& model() const { return model_; }

private:
    Prod2vecModel model_;
    Matrix<double> unit_; // row-normalized in-vectors
};

/// `externalId v1 ... vK` per product, the pretrained-vector text format.
void export_vectors(const Matrix<double>& vectors, const Catalog& catalog, const std::filesystem::path& path);

} // namespace bastext
