#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bastext/random.hpp"
#include "bastext/types.hpp"

namespace bastext {

/// Lowercases ASCII and splits on runs of non-alphanumeric bytes. Bytes at or
/// above 0x80 are kept as word characters so UTF-8 letters survive.
std::vector<std::string> tokenize(std::string_view title);

struct Product {
    ProductId id = 0;
    std::string externalId;
    std::string title;
    std::vector<std::string> words;
};

class Catalog {
public:
    /// Appends a product and returns its dense id. Throws on a duplicate
    /// external id.
    ProductId add(std::string externalId, std::string title);

    std::optional<ProductId> find(std::string_view externalId) const;
    ProductId at(std::string_view externalId) const;

    const Product& operator[](ProductId id) const { return products_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return products_.size(); }
    bool empty() const { return products_.empty(); }
    auto begin() const { return products_.begin(); }
    auto end() const { return products_.end(); }

    /// Fingerprint over (externalId, title) in id order.
    std::uint64_t fingerprint() const;

private:
    std::vector<Product> products_;
    std::unordered_map<std::string, ProductId> byExternal_;
};

/// One transaction. productIds is sorted ascending and duplicate free.
struct Basket {
    std::vector<ProductId> productIds;
    std::string sourceId;

    std::size_t size() const { return productIds.size(); }
    bool contains(ProductId id) const;
};

/// Sorts and deduplicates; returns how many duplicates were collapsed.
std::size_t normalize_basket(Basket& basket);

enum class DatasetFormat { canonical, onlineretail, instacart };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view to_string(DatasetFormat format);

struct ImportStats {
    std::size_t malformedRows = 0;
    std::size_t collapsedDuplicates = 0;
    std::size_t droppedEmptyTitleProducts = 0;
    std::size_t droppedSmallBaskets = 0;
};

struct Dataset {
    Catalog catalog;
    std::vector<Basket> baskets;
    ImportStats stats;
};

/// canonical: paths = {catalog.tsv, baskets.txt}.
/// onlineretail: paths = {transactions.csv}.
/// instacart: products.csv plus one or more order_products*.csv, in any order.
Dataset import_dataset(DatasetFormat format, std::span<const std::filesystem::path> paths);

/// Writes catalog.tsv and baskets.txt under dir. Basket source ids are not
/// preserved: the canonical reader numbers lines from 0.
void write_canonical(const Dataset& dataset, const std::filesystem::path& dir);

class Vocabulary {
public:
    TokenId add(std::string word, std::uint64_t count);

    std::size_t size() const { return words_.size(); }
    bool empty() const { return words_.empty(); }
    /// Reserved index for out-of-vocabulary words; equal to size().
    TokenId unk() const { return static_cast<TokenId>(words_.size()); }

    TokenId index(std::string_view word) const;
    const std::string& word(TokenId id) const { return words_[static_cast<std::size_t>(id)]; }
    std::uint64_t count(TokenId id) const { return counts_[static_cast<std::size_t>(id)]; }

    /// Maps words to indices and drops UNK, so the result may be empty.
    std::vector<TokenId> encode(std::span<const std::string> words) const;

private:
    std::vector<std::string> words_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Words ordered by first occurrence in the catalog.
Vocabulary build_vocabulary(const Catalog& catalog, std::uint64_t minCount);

/// Per-product vocabulary indices, UNK dropped.
std::vector<std::vector<TokenId>> encode_catalog(const Catalog& catalog, const Vocabulary& vocabulary);

enum class Label : std::uint8_t { negative = 0, positive = 1 };

struct TrainingExample {
    std::vector<ProductId> contextIds;
    ProductId candidateId = 0;
    Label label = Label::positive;
};

/// One example per product: the product is the candidate and the rest of
/// the basket is the context.
std::vector<TrainingExample> form_positive_examples(const Basket& basket);

/// Products eligible as negatives, sorted ascending.
std::vector<ProductId> all_products(std::size_t productCount);

/// Draws n negatives uniformly (with replacement) from pool minus
/// (context + positive candidate). pool must be sorted.
std::vector<TrainingExample> sample_negatives(const TrainingExample& positive, std::size_t n,
                                              std::span<const ProductId> pool, CounterRng& rng);
std::vector<TrainingExample> sample_negatives(const TrainingExample& positive, std::size_t n,
                                              std::size_t productCount, CounterRng& rng);

/// Core of the sampler: one draw from the sorted pool excluding the sorted
/// `excluded` ids. Throws if nothing is eligible.
ProductId draw_excluding(std::span<const ProductId> pool, std::span<const ProductId> excluded,
                         CounterRng& rng);

enum class SplitMode { warm, cold };

std::string_view to_string(SplitMode mode);

struct SplitRatios {
    double train = 0.85;
    double validation = 0.05;
    double test = 0.10;
};

struct DatasetSplit {
    std::vector<Basket> train;
    std::vector<Basket> validation;
    std::vector<Basket> test;
    SplitMode mode = SplitMode::warm;
    /// Cold mode only; sorted ascending.
    std::vector<ProductId> testProductIds;
    std::uint64_t seed = 0;
    SplitRatios ratios;
    double coldFraction = 0.10;
    /// Product occurrences removed by the warm filter or the cold removal.
    std::size_t removedOccurrences = 0;
    std::size_t droppedBaskets = 0;
    /// Basket source ids per part before filtering, in partition order.
    std::vector<std::string> trainSources, validationSources, testSources;
};

/// Source ids per part plus the cold test products; enough to rebuild a
/// split exactly from the same baskets.
struct SplitManifest {
    SplitMode mode = SplitMode::warm;
    std::uint64_t seed = 0;
    SplitRatios ratios;
    double coldFraction = 0.10;
    std::vector<std::string> train, validation, test;
    std::vector<std::string> testProducts;
};

DatasetSplit split_warm(std::span<const Basket> baskets, const SplitRatios& ratios, std::uint64_t seed);
DatasetSplit split_cold(std::span<const Basket> baskets, const SplitRatios& ratios, double testProductFraction,
                        std::uint64_t seed);

/// Products occurring in at least one of the baskets, sorted.
std::vector<ProductId> products_in(std::span<const Basket> baskets);

SplitManifest make_manifest(const DatasetSplit& split, const Catalog& catalog);
void write_split_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest read_split_manifest(const std::filesystem::path& path);
/// Re-applies the split filters to the manifest's partition.
DatasetSplit apply_manifest(const SplitManifest& manifest, std::span<const Basket> baskets, const Catalog& catalog);

} // namespace bastext
