#include "bastext/query.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bastext/eval.hpp"

namespace bastext {

std::vector<QueryHit> top_k(std::span<const double> scores, std::size_t k, std::span<const ProductId> excluded) {
    std::vector<QueryHit> hits;
    hits.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto id = static_cast<ProductId>(i);
        if (!std::binary_search(excluded.begin(), excluded.end(), id)) hits.push_back({id, scores[i]});
    }
    const auto better = [](const QueryHit& a, const QueryHit& b) { return a.score > b.score || (a.score == b.score && a.id < b.id); };
    const auto keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
    hits.resize(keep);
    return hits;
}

namespace {

void check_id(ProductId id, Eigen::Index rows) {
    if (id < 0 || id >= rows) throw Error(fmt::format("product id {} is outside the catalog", id));
}

std::vector<double> cosines(const Matrix<float>& vectors, const Vector<double>& query) {
    std::vector<double> out(static_cast<std::size_t>(vectors.rows()), 0.0);
    const double qn = query.norm();
    if (qn == 0.0) return out;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        const Vector<double> v = vectors.row(i).transpose().cast<double>();
        const double n = v.norm();
        if (n > 0.0) out[static_cast<std::size_t>(i)] = v.dot(query) / (n * qn);
    }
    return out;
}

} // namespace

std::vector<QueryHit> query_similar(const ProductVectors<float>& vectors, ProductId query, std::size_t k) {
    check_id(query, vectors.embedding.rows());
    const Vector<double> q = vectors.embedding.row(query).transpose().cast<double>();
    const std::vector<ProductId> self{query};
    return top_k(cosines(vectors.embedding, q), k, self);
}

std::vector<QueryHit> query_alsobuy(const ProductVectors<float>& vectors, ProductId query, std::size_t k) {
    check_id(query, vectors.context.rows());
    const Vector<double> c = vectors.context.row(query).transpose().cast<double>();
    const Vector<double> s = vectors.embedding.cast<double>() * c;
    const std::vector<ProductId> self{query};
    return top_k(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), k, self);
}

SearchResult query_search(const ModelState<float>& state, const ProductVectors<float>& vectors, std::string_view keywords,
                          std::size_t k) {
    const auto words = tokenize(keywords);
    const auto tokens = state.vocabulary.encode(words);
    SearchResult result;
    result.allOutOfVocabulary = tokens.empty();
    Vector<double> h = Vector<double>::Zero(vectors.embedding.cols());
    if (!result.allOutOfVocabulary)
        h = encode(state.params.embedding, state.params.embeddingInputs, std::span<const TokenId>(tokens)).cast<double>();
    result.hits = top_k(cosines(vectors.embedding, h), k);
    return result;
}

std::vector<QueryHit> query_next(const BastextScorer& scorer, std::span<const ProductId> context, std::size_t k) {
    if (context.empty()) throw Error("next-product query needs a non-empty basket");
    TestCase c;
    c.contextIds.assign(context.begin(), context.end());
    std::sort(c.contextIds.begin(), c.contextIds.end());
    c.contextIds.erase(std::unique(c.contextIds.begin(), c.contextIds.end()), c.contextIds.end());
    for (ProductId id : c.contextIds) check_id(id, static_cast<Eigen::Index>(scorer.product_count()));
    std::vector<double> logits(scorer.product_count());
    scorer.score_all(c.contextIds, logits);
    const auto ranked = rank_candidates(c, logits, all_products(scorer.product_count()));
    std::vector<QueryHit> hits;
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
        const double z = logits[static_cast<std::size_t>(ranked[r])];
        hits.push_back({ranked[r], stable_sigmoid(z)});
    }
    return hits;
}

} // namespace bastext
