#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "bastext/model.hpp"
#include "bastext/scorer.hpp"

namespace bastext {

struct QueryHit {
    ProductId id = 0;
    double score = 0.0;
};

/// Best k of `scores` by descending score, ascending id on ties, never
/// including ids in the sorted `excluded` list.
std::vector<QueryHit> top_k(std::span<const double> scores, std::size_t k, std::span<const ProductId> excluded = {});

/// cosine(h_query, h_i) over all i != query. Zero vectors have similarity 0.
std::vector<QueryHit> query_similar(const ProductVectors<float>& vectors, ProductId query, std::size_t k);

/// h_i . h'_query over all i != query.
std::vector<QueryHit> query_alsobuy(const ProductVectors<float>& vectors, ProductId query, std::size_t k);

struct SearchResult {
    std::vector<QueryHit> hits;
    /// No query word is in the vocabulary; the query vector is zero.
    bool allOutOfVocabulary = false;
};

/// Encodes the keywords with the embedding encoder and ranks products by
/// cosine against their embedding vectors.
SearchResult query_search(const ModelState<float>& state, const ProductVectors<float>& vectors, std::string_view keywords,
                          std::size_t k);

/// Next-product candidates for a basket: every product outside the context,
/// ordered as the evaluator orders them. Scores are probabilities.
std::vector<QueryHit> query_next(const BastextScorer& scorer, std::span<const ProductId> context, std::size_t k);

} // namespace bastext
