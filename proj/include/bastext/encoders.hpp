#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bastext/corpus.hpp"
#include "bastext/random.hpp"
#include "bastext/types.hpp"

namespace bastext {

/// Token id standing for an explicit zero input vector.
inline constexpr TokenId kPadToken = -1;

enum class InputMode : std::uint8_t { onehot = 0, pretrained = 1 };
enum class EncoderKind : std::uint8_t { mov = 0, cnn = 1 };

EncoderKind parse_encoder_kind(std::string_view name);
std::string_view to_string(EncoderKind kind);

/// Input vectors w_l of the vocabulary. In one-hot mode nothing is stored and
/// x_l^T W is a row lookup.
template <typename Scalar>
struct WordInputTable {
    InputMode mode = InputMode::onehot;
    std::size_t vocabularySize = 0;
    Matrix<Scalar> vectors; // pretrained only: V x d

    static WordInputTable onehot(std::size_t vocabularySize) {
        WordInputTable t;
        t.vocabularySize = vocabularySize;
        return t;
    }
    static WordInputTable pretrained(Matrix<Scalar> vectors) {
        WordInputTable t;
        t.mode = InputMode::pretrained;
        t.vocabularySize = static_cast<std::size_t>(vectors.rows());
        t.vectors = std::move(vectors);
        return t;
    }

    Eigen::Index dim() const {
        return mode == InputMode::onehot ? static_cast<Eigen::Index>(vocabularySize) : vectors.cols();
    }

    void check(TokenId t) const {
        if (t < 0 || static_cast<std::size_t>(t) >= vocabularySize)
            throw Error(fmt::format("token {} outside vocabulary of size {}", t, vocabularySize));
    }

    /// out += scale * (x_t^T W)
    template <typename Out>
    void accumulate(TokenId t, const Matrix<Scalar>& W, Scalar scale, Out&& out) const {
        if (t == kPadToken) return;
        if (mode == InputMode::onehot) out += scale * W.row(t).transpose();
        else out.noalias() += scale * (W.transpose() * vectors.row(t).transpose());
    }

    /// gradW += scale * x_t g^T
    template <typename G>
    void scatter(TokenId t, const G& g, Scalar scale, Matrix<Scalar>& gradW) const {
        if (t == kPadToken) return;
        if (mode == InputMode::onehot) gradW.row(t) += scale * g.transpose();
        else gradW.noalias() += scale * (vectors.row(t).transpose() * g.transpose());
    }

    template <typename To>
    WordInputTable<To> cast() const {
        WordInputTable<To> t;
        t.mode = mode;
        t.vocabularySize = vocabularySize;
        t.vectors = vectors.template cast<To>();
        return t;
    }
};

struct PretrainedVectors {
    Matrix<double> vectors; // rows follow the vocabulary, unmatched rows zero
    std::size_t matched = 0;
    double coverage = 0.0;
};

/// Reads `word v1 ... vd` lines. Dimensionality must be constant.
PretrainedVectors load_pretrained_vectors(const std::filesystem::path& path, const Vocabulary& vocabulary);

/// Inverted dropout applied to an encoder's hidden vector during training.
struct Dropout {
    double rate = 0.0;
    CounterRng* rng = nullptr;

    bool active() const { return rng != nullptr && rate > 0.0; }
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, CounterRng& rng) {
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    return m;
}

template <typename Scalar>
Vector<Scalar> dropout_mask(Eigen::Index size, const Dropout& dropout) {
    Vector<Scalar> mask(size);
    const auto keep = static_cast<Scalar>(1.0 / (1.0 - dropout.rate));
    for (Eigen::Index i = 0; i < size; ++i) mask[i] = dropout.rng->uniform() < dropout.rate ? Scalar(0) : keep;
    return mask;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Mean-of-vectors encoder: ReLU(mean_l x_l^T W)

template <typename Scalar>
struct MovParams {
    Matrix<Scalar> weight; // d x K

    Eigen::Index outputSize() const { return weight.cols(); }

    template <typename F>
    void for_each_tensor(F&& f) {
        f("weight", weight);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        f("weight", weight);
    }
};

template <typename Scalar>
struct MovCache {
    std::vector<TokenId> tokens;
    Vector<Scalar> preActivation;
    Vector<Scalar> mask; // empty without dropout
    bool degenerate = false;
};

template <typename Scalar>
MovParams<Scalar> init_mov(Eigen::Index inputDim, Eigen::Index outputSize, CounterRng& rng) {
    return {detail::uniform_matrix<Scalar>(inputDim, outputSize, 1.0 / std::sqrt(static_cast<double>(inputDim)), rng)};
}

/// Empty token lists yield the zero vector and set cache->degenerate.
template <typename Scalar>
Vector<Scalar> encode_mov(const MovParams<Scalar>& params, const WordInputTable<Scalar>& table,
                          std::span<const TokenId> tokens, MovCache<Scalar>* cache = nullptr,
                          const Dropout& dropout = {}) {
    const Eigen::Index K = params.outputSize();
    if (params.weight.rows() != table.dim())
        throw Error(fmt::format("MoV weight has {} rows but inputs have dimension {}", params.weight.rows(), table.dim()));
    Vector<Scalar> pre = Vector<Scalar>::Zero(K);
    std::size_t effective = 0;
    for (TokenId t : tokens) {
        if (t == kPadToken) continue;
        table.check(t);
        ++effective;
    }
    if (effective > 0) {
        const Scalar scale = Scalar(1) / static_cast<Scalar>(effective);
        for (TokenId t : tokens) table.accumulate(t, params.weight, scale, pre);
    }
    Vector<Scalar> out = pre.cwiseMax(Scalar(0));
    Vector<Scalar> mask;
    if (dropout.active()) {
        mask = detail::dropout_mask<Scalar>(K, dropout);
        out = out.cwiseProduct(mask);
    }
    if (cache) {
        cache->tokens.assign(tokens.begin(), tokens.end());
        cache->preActivation = std::move(pre);
        cache->mask = std::move(mask);
        cache->degenerate = effective == 0;
    }
    return out;
}

/// Accumulates dLoss/dW into grads; inputGrad (V x d, pretrained only) gets
/// dLoss/dx_l when non-null.
template <typename Scalar>
void mov_backward(const MovParams<Scalar>& params, const WordInputTable<Scalar>& table, const MovCache<Scalar>& cache,
                  const Vector<Scalar>& gradOutput, MovParams<Scalar>& grads, Matrix<Scalar>* inputGrad = nullptr) {
    if (gradOutput.size() != params.outputSize() || grads.weight.rows() != params.weight.rows() ||
        grads.weight.cols() != params.weight.cols() || cache.preActivation.size() != params.outputSize())
        throw Error("MoV backward shape mismatch");
    if (cache.degenerate) return;
    Vector<Scalar> delta = gradOutput;
    if (cache.mask.size() > 0) delta = delta.cwiseProduct(cache.mask);
    for (Eigen::Index k = 0; k < delta.size(); ++k)
        if (!(cache.preActivation[k] > Scalar(0))) delta[k] = Scalar(0);
    std::size_t effective = 0;
    for (TokenId t : cache.tokens) effective += t != kPadToken;
    const Scalar scale = Scalar(1) / static_cast<Scalar>(effective);
    for (TokenId t : cache.tokens) table.scatter(t, delta, scale, grads.weight);
    if (inputGrad && table.mode == InputMode::pretrained) {
        const Vector<Scalar> dx = scale * (params.weight * delta);
        for (TokenId t : cache.tokens)
            if (t != kPadToken) inputGrad->row(t) += dx.transpose();
    }
}

// ---------------------------------------------------------------------------
// Convolutional encoder: per width, 1-D convolution + ReLU + max-over-time;
// the pooled features are concatenated, projected to K and passed through
// ReLU.

struct CnnShape {
    std::vector<int> widths{2, 3};
    int filters = 64;

    void validate() const {
        if (widths.empty() || filters < 1) throw Error("CNN needs at least one width and one filter");
        for (std::size_t i = 0; i < widths.size(); ++i)
            if (widths[i] < 1 || (i > 0 && widths[i] <= widths[i - 1]))
                throw Error("CNN widths must be strictly increasing positive integers");
    }
    int maxWidth() const { return widths.back(); }
};

template <typename Scalar>
struct CnnParams {
    CnnShape shape;
    std::vector<std::vector<Matrix<Scalar>>> kernels; // [bank][offset]: d x F
    std::vector<Matrix<Scalar>> biases;               // [bank]: 1 x F
    Matrix<Scalar> projection;                        // (F * banks) x K
    Matrix<Scalar> projectionBias;                    // 1 x K

    Eigen::Index outputSize() const { return projection.cols(); }
    Eigen::Index pooledSize() const { return projection.rows(); }

    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        for (std::size_t b = 0; b < self.kernels.size(); ++b) {
            for (std::size_t o = 0; o < self.kernels[b].size(); ++o)
                f(fmt::format("conv{}.kernel{}", self.shape.widths[b], o), self.kernels[b][o]);
            f(fmt::format("conv{}.bias", self.shape.widths[b]), self.biases[b]);
        }
        f("projection", self.projection);
        f("projection.bias", self.projectionBias);
    }
    template <typename F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        visit(*this, f);
    }
};

template <typename Scalar>
struct CnnCache {
    std::vector<TokenId> tokens;              // right-padded to the max width
    std::vector<std::vector<int>> argmax;     // [bank][filter]: first position of the max
    std::vector<Vector<Scalar>> maxActivation; // [bank]: pre-ReLU maxima
    Vector<Scalar> pooled;                    // post-ReLU, post-dropout
    Vector<Scalar> mask;
    Vector<Scalar> preActivation;
};

template <typename Scalar>
CnnParams<Scalar> init_cnn(Eigen::Index inputDim, Eigen::Index outputSize, const CnnShape& shape, CounterRng& rng) {
    shape.validate();
    CnnParams<Scalar> p;
    p.shape = shape;
    const double inputBound = 1.0 / std::sqrt(static_cast<double>(inputDim));
    for (int w : shape.widths) {
        std::vector<Matrix<Scalar>> bank;
        for (int o = 0; o < w; ++o) bank.push_back(detail::uniform_matrix<Scalar>(inputDim, shape.filters, inputBound, rng));
        p.kernels.push_back(std::move(bank));
        p.biases.push_back(Matrix<Scalar>::Zero(1, shape.filters));
    }
    const Eigen::Index pooled = static_cast<Eigen::Index>(shape.filters) * static_cast<Eigen::Index>(shape.widths.size());
    p.projection = detail::uniform_matrix<Scalar>(pooled, outputSize, 1.0 / std::sqrt(static_cast<double>(pooled)), rng);
    p.projectionBias = Matrix<Scalar>::Zero(1, outputSize);
    return p;
}

template <typename Scalar>
Vector<Scalar> encode_cnn(const CnnParams<Scalar>& params, const WordInputTable<Scalar>& table,
                          std::span<const TokenId> tokens, CnnCache<Scalar>* cache = nullptr,
                          const Dropout& dropout = {}) {
    const auto& shape = params.shape;
    const auto F = static_cast<Eigen::Index>(shape.filters);
    std::vector<TokenId> padded(tokens.begin(), tokens.end());
    for (TokenId t : padded)
        if (t != kPadToken) table.check(t);
    if (padded.size() < static_cast<std::size_t>(shape.maxWidth())) padded.resize(static_cast<std::size_t>(shape.maxWidth()), kPadToken);
    const auto length = static_cast<int>(padded.size());

    Vector<Scalar> pooled(params.pooledSize());
    std::vector<std::vector<int>> argmax(shape.widths.size());
    std::vector<Vector<Scalar>> maxima(shape.widths.size());
    Vector<Scalar> conv(F);
    for (std::size_t b = 0; b < shape.widths.size(); ++b) {
        const int w = shape.widths[b];
        auto& arg = argmax[b];
        auto& best = maxima[b];
        arg.assign(static_cast<std::size_t>(F), 0);
        best = Vector<Scalar>::Constant(F, -std::numeric_limits<Scalar>::infinity());
        for (int t = 0; t + w <= length; ++t) {
            conv = params.biases[b].row(0).transpose();
            for (int o = 0; o < w; ++o) table.accumulate(padded[static_cast<std::size_t>(t + o)], params.kernels[b][static_cast<std::size_t>(o)], Scalar(1), conv);
            for (Eigen::Index f = 0; f < F; ++f) {
                if (conv[f] > best[f]) {
                    best[f] = conv[f];
                    arg[static_cast<std::size_t>(f)] = t;
                }
            }
        }
        pooled.segment(static_cast<Eigen::Index>(b) * F, F) = best.cwiseMax(Scalar(0));
    }
    Vector<Scalar> mask;
    if (dropout.active()) {
        mask = detail::dropout_mask<Scalar>(pooled.size(), dropout);
        pooled = pooled.cwiseProduct(mask);
    }
    Vector<Scalar> pre = params.projectionBias.row(0).transpose();
    pre.noalias() += params.projection.transpose() * pooled;
    Vector<Scalar> out = pre.cwiseMax(Scalar(0));
    if (cache) {
        cache->tokens = std::move(padded);
        cache->argmax = std::move(argmax);
        cache->maxActivation = std::move(maxima);
        cache->pooled = std::move(pooled);
        cache->mask = std::move(mask);
        cache->preActivation = std::move(pre);
    }
    return out;
}

template <typename Scalar>
void cnn_backward(const CnnParams<Scalar>& params, const WordInputTable<Scalar>& table, const CnnCache<Scalar>& cache,
                  const Vector<Scalar>& gradOutput, CnnParams<Scalar>& grads, Matrix<Scalar>* inputGrad = nullptr) {
    if (gradOutput.size() != params.outputSize() || grads.projection.rows() != params.projection.rows() ||
        grads.projection.cols() != params.projection.cols() || grads.kernels.size() != params.kernels.size() ||
        cache.preActivation.size() != params.outputSize())
        throw Error("CNN backward shape mismatch");
    const auto F = static_cast<Eigen::Index>(params.shape.filters);
    Vector<Scalar> delta = gradOutput;
    for (Eigen::Index k = 0; k < delta.size(); ++k)
        if (!(cache.preActivation[k] > Scalar(0))) delta[k] = Scalar(0);
    grads.projection.noalias() += cache.pooled * delta.transpose();
    grads.projectionBias.row(0) += delta.transpose();
    Vector<Scalar> dPooled = params.projection * delta;
    if (cache.mask.size() > 0) dPooled = dPooled.cwiseProduct(cache.mask);
    const bool wantInputs = inputGrad && table.mode == InputMode::pretrained;
    for (std::size_t b = 0; b < params.shape.widths.size(); ++b) {
        const int w = params.shape.widths[b];
        for (Eigen::Index f = 0; f < F; ++f) {
            if (!(cache.maxActivation[b][f] > Scalar(0))) continue;
            const Scalar g = dPooled[static_cast<Eigen::Index>(b) * F + f];
            if (g == Scalar(0)) continue;
            grads.biases[b](0, f) += g;
            const int t0 = cache.argmax[b][static_cast<std::size_t>(f)];
            for (int o = 0; o < w; ++o) {
                const TokenId tok = cache.tokens[static_cast<std::size_t>(t0 + o)];
                if (tok == kPadToken) continue;
                auto& dK = grads.kernels[b][static_cast<std::size_t>(o)];
                if (table.mode == InputMode::onehot) dK(tok, f) += g;
                else dK.col(f) += g * table.vectors.row(tok).transpose();
                if (wantInputs) inputGrad->row(tok) += g * params.kernels[b][static_cast<std::size_t>(o)].col(f).transpose();
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Kind-erased encoder used by the model: exactly one of mov/cnn is populated.

template <typename Scalar>
struct EncoderParams {
    EncoderKind kind = EncoderKind::mov;
    MovParams<Scalar> mov;
    CnnParams<Scalar> cnn;

    Eigen::Index outputSize() const { return kind == EncoderKind::mov ? mov.outputSize() : cnn.outputSize(); }

    template <typename F>
    void for_each_tensor(F&& f) {
        if (kind == EncoderKind::mov) mov.for_each_tensor(f);
        else cnn.for_each_tensor(f);
    }
    template <typename F>
    void for_each_tensor(F&& f) const {
        if (kind == EncoderKind::mov) mov.for_each_tensor(f);
        else cnn.for_each_tensor(f);
    }

    EncoderParams zeros_like() const {
        EncoderParams z = *this;
        z.for_each_tensor([](const std::string&, Matrix<Scalar>& m) { m.setZero(); });
        return z;
    }

    template <typename To>
    EncoderParams<To> cast() const {
        EncoderParams<To> out;
        out.kind = kind;
        out.mov.weight = mov.weight.template cast<To>();
        out.cnn.shape = cnn.shape;
        for (const auto& bank : cnn.kernels) {
            std::vector<Matrix<To>> b;
            for (const auto& k : bank) b.push_back(k.template cast<To>());
            out.cnn.kernels.push_back(std::move(b));
        }
        for (const auto& bias : cnn.biases) out.cnn.biases.push_back(bias.template cast<To>());
        out.cnn.projection = cnn.projection.template cast<To>();
        out.cnn.projectionBias = cnn.projectionBias.template cast<To>();
        return out;
    }
};

template <typename Scalar>
struct EncoderCache {
    MovCache<Scalar> mov;
    CnnCache<Scalar> cnn;
};

template <typename Scalar>
EncoderParams<Scalar> init_encoder(EncoderKind kind, Eigen::Index inputDim, Eigen::Index outputSize,
                                   const CnnShape& shape, CounterRng& rng) {
    EncoderParams<Scalar> p;
    p.kind = kind;
    if (kind == EncoderKind::mov) p.mov = init_mov<Scalar>(inputDim, outputSize, rng);
    else p.cnn = init_cnn<Scalar>(inputDim, outputSize, shape, rng);
    return p;
}

template <typename Scalar>
Vector<Scalar> encode(const EncoderParams<Scalar>& params, const WordInputTable<Scalar>& table,
                      std::span<const TokenId> tokens, EncoderCache<Scalar>* cache = nullptr,
                      const Dropout& dropout = {}) {
    if (params.kind == EncoderKind::mov) return encode_mov(params.mov, table, tokens, cache ? &cache->mov : nullptr, dropout);
    return encode_cnn(params.cnn, table, tokens, cache ? &cache->cnn : nullptr, dropout);
}

template <typename Scalar>
void encoder_backward(const EncoderParams<Scalar>& params, const WordInputTable<Scalar>& table,
                      const EncoderCache<Scalar>& cache, const Vector<Scalar>& gradOutput, EncoderParams<Scalar>& grads,
                      Matrix<Scalar>* inputGrad = nullptr) {
    if (grads.kind != params.kind) throw Error("encoder backward: gradient buffer has a different encoder kind");
    if (params.kind == EncoderKind::mov) mov_backward(params.mov, table, cache.mov, gradOutput, grads.mov, inputGrad);
    else cnn_backward(params.cnn, table, cache.cnn, gradOutput, grads.cnn, inputGrad);
}

} // namespace bastext
