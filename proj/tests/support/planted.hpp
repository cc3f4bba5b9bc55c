#pragma once

#include <cstdint>
#include <vector>

#include "bastext/corpus.hpp"

namespace bastext::testing {

/// Synthetic catalog with community structure. Each community owns a pool
/// of title words; inside a community, products are grouped into small
/// themes that share a theme word, and every basket is drawn from one theme.
struct PlantedConfig {
    int communities = 2;
    int productsPerCommunity = 100;
    int themesPerCommunity = 11;
    int wordsPerCommunity = 30;
    int communityWordsPerTitle = 1;
    int baskets = 5000;
    int basketSize = 5;
    /// Theme popularity follows rank^-themeSkew. Ranks alternate between
    /// communities, and the largest theme of each community ranks last.
    double themeSkew = 2.0;
    std::uint64_t seed = 7;
};

struct PlantedCorpus {
    Dataset dataset;
    std::vector<int> community; // per product id
    std::vector<int> theme;     // per product id, unique across communities
};

PlantedCorpus make_planted(const PlantedConfig& config = {});

} // namespace bastext::testing
