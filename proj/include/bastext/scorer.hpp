#pragma once

#include <span>
#include <string>

#include "bastext/model.hpp"
#include "bastext/types.hpp"

namespace bastext {

/// Anything that assigns a relevance score to every product given a basket
/// context. Higher is more relevant; the evaluator only uses the order.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::string name() const = 0;
    virtual std::size_t product_count() const = 0;
    /// out.size() == product_count(). Must be safe to call concurrently.
    virtual void score_all(std::span<const ProductId> context, std::span<double> out) const = 0;
};

/// Ranks by the logit h_i . mean(h'_B); sigmoid is monotone, so the order
/// equals the order of probabilities without saturation ties.
class BastextScorer final : public Scorer {
public:
    BastextScorer(ProductVectors<float> vectors, float bias, std::string name = "bastext")
        : vectors_(std::move(vectors)), bias_(bias), name_(std::move(name)) {}

    std::string name() const override { return name_; }
    std::size_t product_count() const override { return static_cast<std::size_t>(vectors_.embedding.rows()); }
    void score_all(std::span<const ProductId> context, std::span<double> out) const override {
        const Vector<float> c = basket_vector(context, vectors_.context);
        const Vector<float> logits = vectors_.embedding * c;
        for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(logits[i] + bias_);
    }
    const ProductVectors<float>& vectors() const { return vectors_; }
    float bias() const { return bias_; }

private:
    ProductVectors<float> vectors_;
    float bias_;
    std::string name_;
};

} // namespace bastext
