#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "bastext/types.hpp"

namespace bastext {

/// 1-based rank; kAbsentRank marks a held-out product outside the pool.
using Rank = std::uint64_t;
inline constexpr Rank kAbsentRank = std::numeric_limits<Rank>::max();

/// Rank of heldOut among all ids in [0, scores.size()) except the sorted
/// `excluded` ids, ordered by descending score with ascending id on ties.
/// Equivalent to its position in rank_candidates' output, without sorting.
inline Rank rank_of(ProductId heldOut, std::span<const double> scores, std::span<const ProductId> excluded) {
    const double target = scores[static_cast<std::size_t>(heldOut)];
    Rank ahead = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        const double s = scores[j];
        if (s > target || (s == target && static_cast<ProductId>(j) < heldOut)) ++ahead;
    }
    for (ProductId e : excluded) {
        if (e == heldOut) return kAbsentRank;
        const double s = scores[static_cast<std::size_t>(e)];
        if (s > target || (s == target && e < heldOut)) --ahead;
    }
    return ahead + 1;
}

double recall_at_n(std::span<const Rank> ranks, Rank n);
double mrr_at_n(std::span<const Rank> ranks, Rank n);

} // namespace bastext
