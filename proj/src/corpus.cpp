#include "bastext/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <iterator>

#include <fmt/format.h>

#include "bastext/hash.hpp"

namespace bastext {

std::vector<std::string> tokenize(std::string_view title) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char ch : title) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

ProductId Catalog::add(std::string externalId, std::string title) {
    if (byExternal_.contains(externalId)) throw Error(fmt::format("duplicate product id '{}'", externalId));
    const auto id = static_cast<ProductId>(products_.size());
    byExternal_.emplace(externalId, id);
    Product product;
    product.id = id;
    product.words = tokenize(title);
    product.externalId = std::move(externalId);
    product.title = std::move(title);
    products_.push_back(std::move(product));
    return id;
}

std::optional<ProductId> Catalog::find(std::string_view externalId) const {
    const auto it = byExternal_.find(std::string(externalId));
    if (it == byExternal_.end()) return std::nullopt;
    return it->second;
}

ProductId Catalog::at(std::string_view externalId) const {
    if (auto id = find(externalId)) return *id;
    throw Error(fmt::format("unknown product '{}'", externalId));
}

std::uint64_t Catalog::fingerprint() const {
    Fnv1a hash;
    for (const auto& p : products_) {
        hash.update(p.externalId);
        hash.update_separator();
        hash.update(p.title);
        hash.update_separator();
    }
    return hash.digest();
}

bool Basket::contains(ProductId id) const { return std::binary_search(productIds.begin(), productIds.end(), id); }

std::size_t normalize_basket(Basket& basket) {
    auto& ids = basket.productIds;
    std::sort(ids.begin(), ids.end());
    const auto before = ids.size();
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return before - ids.size();
}

DatasetFormat parse_dataset_format(std::string_view name) {
    if (name == "canonical") return DatasetFormat::canonical;
    if (name == "onlineretail") return DatasetFormat::onlineretail;
    if (name == "instacart") return DatasetFormat::instacart;
    throw Error(fmt::format("unknown dataset format '{}'", name));
}

std::string_view to_string(DatasetFormat format) {
    switch (format) {
    case DatasetFormat::canonical: return "canonical";
    case DatasetFormat::onlineretail: return "onlineretail";
    case DatasetFormat::instacart: return "instacart";
    }
    return "?";
}

TokenId Vocabulary::add(std::string word, std::uint64_t count) {
    const auto id = static_cast<TokenId>(words_.size());
    if (!index_.emplace(word, id).second) throw Error(fmt::format("duplicate vocabulary word '{}'", word));
    words_.push_back(std::move(word));
    counts_.push_back(count);
    return id;
}

TokenId Vocabulary::index(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    return it == index_.end() ? unk() : it->second;
}

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> words) const {
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const auto& w : words) {
        const TokenId id = index(w);
        if (id != unk()) ids.push_back(id);
    }
    return ids;
}

Vocabulary build_vocabulary(const Catalog& catalog, std::uint64_t minCount) {
    if (catalog.empty()) throw Error("cannot build a vocabulary from an empty catalog");
    std::unordered_map<std::string, std::uint64_t> counts;
    std::vector<std::string> order;
    for (const auto& product : catalog) {
        for (const auto& w : product.words) {
            auto [it, inserted] = counts.try_emplace(w, 0);
            if (inserted) order.push_back(w);
            ++it->second;
        }
    }
    Vocabulary vocabulary;
    for (auto& w : order) {
        const auto c = counts[w];
        if (c >= minCount) vocabulary.add(std::move(w), c);
    }
    if (vocabulary.empty()) throw Error(fmt::format("vocabulary is empty at min count {}", minCount));
    return vocabulary;
}

std::vector<std::vector<TokenId>> encode_catalog(const Catalog& catalog, const Vocabulary& vocabulary) {
    std::vector<std::vector<TokenId>> tokens;
    tokens.reserve(catalog.size());
    for (const auto& product : catalog) tokens.push_back(vocabulary.encode(product.words));
    return tokens;
}

std::vector<TrainingExample> form_positive_examples(const Basket& basket) {
    if (basket.size() < 2) throw Error("positive examples need a basket of at least two products");
    std::vector<TrainingExample> examples;
    examples.reserve(basket.size());
    for (std::size_t k = 0; k < basket.size(); ++k) {
        TrainingExample ex;
        ex.candidateId = basket.productIds[k];
        ex.label = Label::positive;
        ex.contextIds.reserve(basket.size() - 1);
        for (std::size_t j = 0; j < basket.size(); ++j)
            if (j != k) ex.contextIds.push_back(basket.productIds[j]);
        examples.push_back(std::move(ex));
    }
    return examples;
}

std::vector<ProductId> all_products(std::size_t productCount) {
    std::vector<ProductId> ids(productCount);
    for (std::size_t i = 0; i < productCount; ++i) ids[i] = static_cast<ProductId>(i);
    return ids;
}

ProductId draw_excluding(std::span<const ProductId> pool, std::span<const ProductId> excluded, CounterRng& rng) {
    // Rejection first; with baskets much smaller than the pool this almost
    // always succeeds on the first draw.
    for (int attempt = 0; attempt < 64; ++attempt) {
        const ProductId id = pool[rng.below(pool.size())];
        if (!std::binary_search(excluded.begin(), excluded.end(), id)) return id;
    }
    std::vector<ProductId> eligible;
    std::set_difference(pool.begin(), pool.end(), excluded.begin(), excluded.end(), std::back_inserter(eligible));
    if (eligible.empty()) throw Error("no product is eligible as a negative sample");
    return eligible[rng.below(eligible.size())];
}

std::vector<TrainingExample> sample_negatives(const TrainingExample& positive, std::size_t n,
                                              std::span<const ProductId> pool, CounterRng& rng) {
    std::vector<ProductId> excluded = positive.contextIds;
    excluded.push_back(positive.candidateId);
    std::sort(excluded.begin(), excluded.end());
    std::vector<TrainingExample> negatives(n);
    for (auto& neg : negatives) {
        neg.contextIds = positive.contextIds;
        neg.label = Label::negative;
        neg.candidateId = draw_excluding(pool, excluded, rng);
    }
    return negatives;
}

std::vector<TrainingExample> sample_negatives(const TrainingExample& positive, std::size_t n,
                                              std::size_t productCount, CounterRng& rng) {
    const auto pool = all_products(productCount);
    return sample_negatives(positive, n, pool, rng);
}

} // namespace bastext
