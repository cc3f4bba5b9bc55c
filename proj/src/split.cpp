#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "bastext/corpus.hpp"

namespace bastext {
namespace {

constexpr std::uint64_t kPartitionStream = 0x7370'6c69'74ULL; // "split"
constexpr std::uint64_t kColdStream = 0x636f'6c64ULL;          // "cold"

void check_ratios(const SplitRatios& r) {
    if (r.train <= 0 || r.validation < 0 || r.test <= 0 || std::abs(r.train + r.validation + r.test - 1.0) > 1e-9)
        throw Error(fmt::format("split ratios {} {} {} must be positive and sum to 1", r.train, r.validation, r.test));
}

struct Partition {
    std::vector<std::size_t> train, validation, test;
};

Partition partition(std::size_t count, const SplitRatios& ratios, std::uint64_t seed) {
    check_ratios(ratios);
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    auto rng = CounterRng::keyed(seed, kPartitionStream);
    shuffle(std::span(order), rng);
    const auto nTrain = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(count)));
    const auto nValidation = static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(count)));
    Partition p;
    const auto cut1 = std::min(nTrain, count);
    const auto cut2 = std::min(cut1 + nValidation, count);
    p.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut1));
    p.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(cut1), order.begin() + static_cast<std::ptrdiff_t>(cut2));
    p.test.assign(order.begin() + static_cast<std::ptrdiff_t>(cut2), order.end());
    return p;
}

std::vector<Basket> gather(std::span<const Basket> baskets, const std::vector<std::size_t>& indices) {
    std::vector<Basket> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(baskets[i]);
    return out;
}

std::vector<std::string> sources(std::span<const Basket> baskets) {
    std::vector<std::string> ids;
    ids.reserve(baskets.size());
    for (const auto& b : baskets) ids.push_back(b.sourceId);
    return ids;
}

// Keeps only products for which keep(id) is true; drops baskets that fall
// below two products.
template <typename Keep>
void filter_baskets(std::vector<Basket>& baskets, Keep&& keep, DatasetSplit& split) {
    std::vector<Basket> kept;
    kept.reserve(baskets.size());
    for (auto& b : baskets) {
        const auto before = b.size();
        std::erase_if(b.productIds, [&](ProductId id) { return !keep(id); });
        split.removedOccurrences += before - b.size();
        if (b.size() < 2) {
            ++split.droppedBaskets;
            continue;
        }
        kept.push_back(std::move(b));
    }
    baskets = std::move(kept);
}

void warm_filter(std::vector<Basket>& baskets, std::span<const ProductId> trainProducts, DatasetSplit& split) {
    filter_baskets(
        baskets, [&](ProductId id) { return std::binary_search(trainProducts.begin(), trainProducts.end(), id); },
        split);
}

// Shared by the split functions and the manifest loader so a reloaded split
// is the same computation on the same partition.
DatasetSplit assemble(std::vector<Basket> train, std::vector<Basket> validation, std::vector<Basket> test,
                      SplitMode mode, std::vector<ProductId> testProducts) {
    DatasetSplit split;
    split.mode = mode;
    split.trainSources = sources(train);
    split.validationSources = sources(validation);
    split.testSources = sources(test);
    if (mode == SplitMode::cold) {
        std::sort(testProducts.begin(), testProducts.end());
        filter_baskets(
            train,
            [&](ProductId id) { return !std::binary_search(testProducts.begin(), testProducts.end(), id); },
            split);
        split.testProductIds = std::move(testProducts);
    }
    const auto trainProducts = products_in(train);
    warm_filter(validation, trainProducts, split);
    if (mode == SplitMode::warm) warm_filter(test, trainProducts, split);
    if (train.empty() || test.empty()) throw Error("split produced an empty training or test part");
    split.train = std::move(train);
    split.validation = std::move(validation);
    split.test = std::move(test);
    return split;
}

std::vector<ProductId> choose_test_products(std::span<const Basket> test, double fraction, std::uint64_t seed) {
    auto candidates = products_in(test);
    if (candidates.size() < 10)
        throw Error(fmt::format("cold split needs at least 10 distinct test products, found {}", candidates.size()));
    auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(candidates.size())));
    count = std::clamp<std::size_t>(count, 1, candidates.size());
    auto rng = CounterRng::keyed(seed, kColdStream);
    shuffle(std::span(candidates), rng);
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

} // namespace

std::string_view to_string(SplitMode mode) { return mode == SplitMode::warm ? "warm" : "cold"; }

std::vector<ProductId> products_in(std::span<const Basket> baskets) {
    std::vector<ProductId> ids;
    for (const auto& b : baskets) ids.insert(ids.end(), b.productIds.begin(), b.productIds.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

DatasetSplit split_warm(std::span<const Basket> baskets, const SplitRatios& ratios, std::uint64_t seed) {
    const auto p = partition(baskets.size(), ratios, seed);
    auto split = assemble(gather(baskets, p.train), gather(baskets, p.validation), gather(baskets, p.test),
                          SplitMode::warm, {});
    split.seed = seed;
    split.ratios = ratios;
    return split;
}

DatasetSplit split_cold(std::span<const Basket> baskets, const SplitRatios& ratios, double testProductFraction,
                        std::uint64_t seed) {
    if (!(testProductFraction > 0 && testProductFraction <= 1))
        throw Error(fmt::format("cold fraction {} must lie in (0, 1]", testProductFraction));
    const auto p = partition(baskets.size(), ratios, seed);
    auto test = gather(baskets, p.test);
    auto chosen = choose_test_products(test, testProductFraction, seed);
    auto split = assemble(gather(baskets, p.train), gather(baskets, p.validation), std::move(test), SplitMode::cold,
                          std::move(chosen));
    split.seed = seed;
    split.ratios = ratios;
    split.coldFraction = testProductFraction;
    return split;
}

SplitManifest make_manifest(const DatasetSplit& split, const Catalog& catalog) {
    SplitManifest m;
    m.mode = split.mode;
    m.seed = split.seed;
    m.ratios = split.ratios;
    m.coldFraction = split.coldFraction;
    m.train = split.trainSources;
    m.validation = split.validationSources;
    m.test = split.testSources;
    for (auto id : split.testProductIds) m.testProducts.push_back(catalog[id].externalId);
    return m;
}

void write_split_manifest(const SplitManifest& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << "bastext-split 1\n";
    out << "mode " << to_string(m.mode) << '\n';
    out << "seed " << m.seed << '\n';
    out << fmt::format("ratios {:.17g} {:.17g} {:.17g}\n", m.ratios.train, m.ratios.validation, m.ratios.test);
    out << fmt::format("cold_fraction {:.17g}\n", m.coldFraction);
    auto section = [&](std::string_view name, const std::vector<std::string>& ids) {
        out << name << ' ' << ids.size() << '\n';
        for (const auto& id : ids) out << id << '\n';
    };
    section("train", m.train);
    section("validation", m.validation);
    section("test", m.test);
    section("test_products", m.testProducts);
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open split manifest '{}'", path.string()));
    auto fail = [&](std::string_view what) {
        return Error(fmt::format("malformed split manifest '{}': {}", path.string(), what));
    };
    std::string line;
    if (!std::getline(in, line) || line != "bastext-split 1") throw fail("bad header");
    SplitManifest m;
    auto keyed = [&](std::string_view key) {
        if (!std::getline(in, line) || !line.starts_with(key) || line.size() <= key.size() + 1) throw fail(key);
        return line.substr(key.size() + 1);
    };
    const auto mode = keyed("mode");
    if (mode == "warm") m.mode = SplitMode::warm;
    else if (mode == "cold") m.mode = SplitMode::cold;
    else throw fail("mode");
    try {
        m.seed = std::stoull(keyed("seed"));
        std::istringstream ratios(keyed("ratios"));
        if (!(ratios >> m.ratios.train >> m.ratios.validation >> m.ratios.test)) throw fail("ratios");
        m.coldFraction = std::stod(keyed("cold_fraction"));
    } catch (const std::logic_error&) {
        throw fail("numeric field");
    }
    auto section = [&](std::string_view name, std::vector<std::string>& ids) {
        const auto count = std::stoull(keyed(name));
        ids.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (!std::getline(in, line)) throw fail(fmt::format("truncated {} section", name));
            ids.push_back(line);
        }
    };
    section("train", m.train);
    section("validation", m.validation);
    section("test", m.test);
    section("test_products", m.testProducts);
    return m;
}

DatasetSplit apply_manifest(const SplitManifest& m, std::span<const Basket> baskets, const Catalog& catalog) {
    std::unordered_map<std::string_view, std::size_t> bySource;
    for (std::size_t i = 0; i < baskets.size(); ++i) bySource.emplace(baskets[i].sourceId, i);
    auto resolve = [&](const std::vector<std::string>& ids) {
        std::vector<std::size_t> idx;
        idx.reserve(ids.size());
        for (const auto& id : ids) {
            const auto it = bySource.find(id);
            if (it == bySource.end()) throw Error(fmt::format("split manifest names unknown basket '{}'", id));
            idx.push_back(it->second);
        }
        return gather(baskets, idx);
    };
    std::vector<ProductId> testProducts;
    for (const auto& ext : m.testProducts) testProducts.push_back(catalog.at(ext));
    auto split = assemble(resolve(m.train), resolve(m.validation), resolve(m.test), m.mode, std::move(testProducts));
    split.seed = m.seed;
    split.ratios = m.ratios;
    split.coldFraction = m.coldFraction;
    return split;
}

} // namespace bastext
