#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "bastext/corpus.hpp"
#include "support/fixtures.hpp"
#include "support/planted.hpp"

using namespace bastext;
using bastext::testing::TempDir;
using bastext::testing::write_file;

namespace {

std::vector<Basket> random_baskets(std::size_t count, std::size_t products, std::uint64_t seed, std::size_t maxSize = 6) {
    auto rng = CounterRng::keyed(seed, 99);
    std::vector<Basket> out;
    for (std::size_t b = 0; b < count; ++b) {
        Basket basket;
        const std::size_t size = 2 + rng.below(maxSize - 1);
        for (std::size_t k = 0; k < size; ++k) basket.productIds.push_back(static_cast<ProductId>(rng.below(products)));
        normalize_basket(basket);
        if (basket.size() < 2) basket.productIds = {0, 1};
        basket.sourceId = std::to_string(b);
        out.push_back(std::move(basket));
    }
    return out;
}

std::set<ProductId> ids_in(std::span<const Basket> baskets) {
    std::set<ProductId> s;
    for (const auto& b : baskets) s.insert(b.productIds.begin(), b.productIds.end());
    return s;
}

} // namespace

TEST_SUITE("corpus") {

TEST_CASE("tokenize lowercases and splits on non-alphanumerics") {
    CHECK(tokenize("Organic Tea") == std::vector<std::string>{"organic", "tea"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("honey/lemon cough drops") == std::vector<std::string>{"honey", "lemon", "cough", "drops"});
    CHECK(tokenize("  --12 OZ. can--") == std::vector<std::string>{"12", "oz", "can"});
}

TEST_CASE("vocabulary counts and min-count pruning") {
    Catalog catalog;
    catalog.add("1", "a b");
    catalog.add("2", "a c");
    const auto v1 = build_vocabulary(catalog, 1);
    CHECK(v1.size() == 3);
    CHECK(v1.unk() == 3);
    CHECK(v1.count(v1.index("a")) == 2);
    const auto v2 = build_vocabulary(catalog, 2);
    CHECK(v2.size() == 1);
    CHECK(v2.word(0) == "a");
    CHECK(v2.index("b") == v2.unk());
    const std::vector<std::string> words{"b", "a", "zzz"};
    CHECK(v2.encode(words) == std::vector<TokenId>{0});
    CHECK_THROWS_AS(build_vocabulary(catalog, 3), Error);
}

TEST_CASE("vocabulary size matches an independent distinct-token scan") {
    Catalog catalog;
    auto rng = CounterRng::keyed(5, 0);
    for (int p = 0; p < 300; ++p) {
        std::string title;
        for (int w = 0; w < 1 + static_cast<int>(rng.below(6)); ++w) title += " W" + std::to_string(rng.below(400));
        catalog.add(std::to_string(p), title);
    }
    std::map<std::string, int> counts;
    for (const auto& p : catalog)
        for (const auto& w : tokenize(p.title)) ++counts[w];
    const auto vocab = build_vocabulary(catalog, 1);
    CHECK(vocab.size() == counts.size());
    const auto pruned = build_vocabulary(catalog, 3);
    std::size_t expected = 0;
    for (const auto& [w, c] : counts) expected += c >= 3;
    CHECK(pruned.size() == expected);
    for (std::size_t i = 0; i < pruned.size(); ++i) CHECK(pruned.count(static_cast<TokenId>(i)) >= 3);
}

TEST_CASE("canonical import of a single basket line") {
    TempDir dir;
    write_file(dir / "catalog.tsv", "p1\tred apple\np2\tgreen pear\np3\tbanana\n");
    write_file(dir / "baskets.txt", "p1 p2 p3\n");
    const std::vector<std::filesystem::path> paths{dir / "catalog.tsv", dir / "baskets.txt"};
    const auto ds = import_dataset(DatasetFormat::canonical, paths);
    REQUIRE(ds.baskets.size() == 1);
    CHECK(ds.baskets[0].size() == 3);
    CHECK(ds.catalog.size() == 3);
}

TEST_CASE("canonical fixture with two malformed lines") {
    TempDir dir;
    write_file(dir / "catalog.tsv", "a\talpha\nb\tbeta\nc\tgamma\nd\tdelta\n");
    // Lines 3 and 7 name products missing from the catalog.
    write_file(dir / "baskets.txt",
               "a b\n"
               "a c\n"
               "a x\n"
               "b c d\n"
               "c d\n"
               "a b c d\n"
               "q r s\n"
               "b d\n"
               "a d\n"
               "b c\n");
    const std::vector<std::filesystem::path> paths{dir / "catalog.tsv", dir / "baskets.txt"};
    const auto ds = import_dataset(DatasetFormat::canonical, paths);
    CHECK(ds.baskets.size() == 8);
    CHECK(ds.stats.malformedRows == 2);
}

TEST_CASE("import collapses duplicates and drops small baskets and empty titles") {
    TempDir dir;
    write_file(dir / "catalog.tsv", "a\talpha\nb\tbeta\ne\t --- \nc\tgamma\n");
    write_file(dir / "baskets.txt", "a a b\nc\nc e\nb c\n");
    const std::vector<std::filesystem::path> paths{dir / "catalog.tsv", dir / "baskets.txt"};
    const auto ds = import_dataset(DatasetFormat::canonical, paths);
    CHECK(ds.catalog.size() == 3);
    CHECK(ds.stats.droppedEmptyTitleProducts == 1);
    CHECK(ds.stats.collapsedDuplicates == 1);
    CHECK(ds.stats.droppedSmallBaskets == 2);
    REQUIRE(ds.baskets.size() == 2);
    for (const auto& b : ds.baskets) {
        CHECK(b.size() == 2);
        CHECK(std::is_sorted(b.productIds.begin(), b.productIds.end()));
        for (ProductId id : b.productIds) CHECK(static_cast<std::size_t>(id) < ds.catalog.size());
    }
}

TEST_CASE("import with zero usable baskets is fatal") {
    TempDir dir;
    write_file(dir / "catalog.tsv", "a\talpha\n");
    write_file(dir / "baskets.txt", "a\n");
    const std::vector<std::filesystem::path> paths{dir / "catalog.tsv", dir / "baskets.txt"};
    CHECK_THROWS_AS(import_dataset(DatasetFormat::canonical, paths), Error);
    CHECK_THROWS_AS(parse_dataset_format("parquet"), Error);
}

TEST_CASE("onlineretail adapter groups by invoice and skips cancellations") {
    TempDir dir;
    write_file(dir / "retail.csv",
               "InvoiceNo,StockCode,Description,Quantity,InvoiceDate,UnitPrice,CustomerID,Country\n"
               "536365,85123A,WHITE HANGING HEART T-LIGHT HOLDER,6,12/1/2010 8:26,2.55,17850,United Kingdom\n"
               "536365,71053,WHITE METAL LANTERN,6,12/1/2010 8:26,3.39,17850,United Kingdom\n"
               "536365,71053,WHITE METAL LANTERN,2,12/1/2010 8:26,3.39,17850,United Kingdom\n"
               "536366,22633,\"HAND WARMER, UNION JACK\",6,12/1/2010 8:28,1.85,17850,United Kingdom\n"
               "536366,85123A,,6,12/1/2010 8:28,1.85,17850,United Kingdom\n"
               "C536379,22633,HAND WARMER UNION JACK,-1,12/1/2010 9:41,27.5,14527,United Kingdom\n"
               "536367,84879,ASSORTED COLOUR BIRD ORNAMENT,32,12/1/2010 8:34,1.69,13047,United Kingdom\n");
    const std::vector<std::filesystem::path> paths{dir / "retail.csv"};
    const auto ds = import_dataset(DatasetFormat::onlineretail, paths);
    CHECK(ds.catalog.size() == 4);
    REQUIRE(ds.baskets.size() == 2);
    CHECK(ds.stats.collapsedDuplicates == 1);
    CHECK(ds.catalog[ds.catalog.at("22633")].title == "HAND WARMER, UNION JACK");
    CHECK(ds.catalog[ds.catalog.at("85123A")].title == "WHITE HANGING HEART T-LIGHT HOLDER");
}

TEST_CASE("instacart adapter joins order rows with product names") {
    TempDir dir;
    write_file(dir / "products.csv",
               "product_id,product_name,aisle_id,department_id\n"
               "1,Chocolate Sandwich Cookies,61,19\n"
               "2,All-Seasons Salt,104,13\n"
               "3,Robust Golden Unsweetened Oolong Tea,94,7\n");
    write_file(dir / "order_products__prior.csv",
               "order_id,product_id,add_to_cart_order,reordered\n"
               "10,1,1,0\n10,3,2,1\n11,2,1,0\n11,3,2,0\n11,1,3,0\n12,2,1,0\n");
    const std::vector<std::filesystem::path> paths{dir / "order_products__prior.csv", dir / "products.csv"};
    const auto ds = import_dataset(DatasetFormat::instacart, paths);
    CHECK(ds.catalog.size() == 3);
    REQUIRE(ds.baskets.size() == 2);
    CHECK(ds.baskets[1].size() == 3);
    CHECK(ds.stats.droppedSmallBaskets == 1);
}

TEST_CASE("canonical write and reread preserves the dataset") {
    TempDir dir;
    bastext::testing::PlantedConfig cfg;
    cfg.baskets = 50;
    const auto planted = bastext::testing::make_planted(cfg);
    write_canonical(planted.dataset, dir.path());
    const std::vector<std::filesystem::path> paths{dir / "catalog.tsv", dir / "baskets.txt"};
    const auto back = import_dataset(DatasetFormat::canonical, paths);
    REQUIRE(back.catalog.size() == planted.dataset.catalog.size());
    REQUIRE(back.baskets.size() == planted.dataset.baskets.size());
    for (std::size_t b = 0; b < back.baskets.size(); ++b)
        CHECK(back.baskets[b].productIds == planted.dataset.baskets[b].productIds);
    CHECK(back.catalog.fingerprint() == planted.dataset.catalog.fingerprint());
}

TEST_CASE("positive examples are leave-one-out") {
    Basket basket{{0, 1, 2}, "x"};
    const auto ex = form_positive_examples(basket);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].candidateId == 0);
    CHECK(ex[0].contextIds == std::vector<ProductId>{1, 2});
    CHECK(ex[1].contextIds == std::vector<ProductId>{0, 2});
    CHECK(ex[2].contextIds == std::vector<ProductId>{0, 1});
    for (const auto& e : ex) CHECK(e.label == Label::positive);
    const auto pair = form_positive_examples(Basket{{4, 9}, "y"});
    REQUIRE(pair.size() == 2);
    CHECK(pair[0].contextIds.size() == 1);
    CHECK_THROWS_AS(form_positive_examples(Basket{{4}, "z"}), Error);
}

TEST_CASE("negative sampling excludes the basket") {
    auto rng = CounterRng::keyed(3, 0);
    TrainingExample positive{{0, 1}, 2, Label::positive};
    CHECK_THROWS_AS(sample_negatives(positive, 4, 3, rng), Error);
    const auto forced = sample_negatives(positive, 5, 4, rng);
    REQUIRE(forced.size() == 5);
    for (const auto& n : forced) {
        CHECK(n.candidateId == 3);
        CHECK(n.label == Label::negative);
        CHECK(n.contextIds == positive.contextIds);
    }
    TrainingExample wide{{3, 17, 40}, 8, Label::positive};
    for (int trial = 0; trial < 200; ++trial) {
        const auto negs = sample_negatives(wide, 8, 100, rng);
        REQUIRE(negs.size() == 8);
        for (const auto& n : negs) {
            CHECK(n.candidateId != 8);
            CHECK(std::find(wide.contextIds.begin(), wide.contextIds.end(), n.candidateId) == wide.contextIds.end());
            CHECK(n.candidateId >= 0);
            CHECK(n.candidateId < 100);
        }
    }
}

TEST_CASE("negative sampling is uniform over eligible products") {
    auto rng = CounterRng::keyed(11, 0);
    TrainingExample positive{{0}, 1, Label::positive};
    std::vector<int> counts(10, 0);
    const int draws = 100000;
    for (int i = 0; i < draws / 10; ++i)
        for (const auto& n : sample_negatives(positive, 10, 10, rng)) ++counts[static_cast<std::size_t>(n.candidateId)];
    CHECK(counts[0] == 0);
    CHECK(counts[1] == 0);
    double chi2 = 0.0;
    for (int id = 2; id < 10; ++id) {
        const double freq = counts[static_cast<std::size_t>(id)] / static_cast<double>(draws);
        CHECK(std::abs(freq - 0.125) <= 0.01);
        const double expected = draws / 8.0;
        chi2 += (counts[static_cast<std::size_t>(id)] - expected) * (counts[static_cast<std::size_t>(id)] - expected) / expected;
    }
    // 7 degrees of freedom: the 0.99 quantile is 18.475.
    CHECK(chi2 < 18.475);
}

TEST_CASE("sampling from a restricted pool") {
    auto rng = CounterRng::keyed(2, 0);
    const std::vector<ProductId> pool{2, 5, 7, 9};
    const std::vector<ProductId> excluded{5, 9};
    for (int i = 0; i < 100; ++i) {
        const auto d = draw_excluding(pool, excluded, rng);
        CHECK((d == 2 || d == 7));
    }
    const std::vector<ProductId> all{2, 5, 7, 9};
    CHECK_THROWS_AS(draw_excluding(pool, all, rng), Error);
}

TEST_CASE("warm split keeps only training products in validation and test") {
    const std::vector<Basket> shared = [] {
        std::vector<Basket> v;
        for (int b = 0; b < 20; ++b) v.push_back(Basket{{static_cast<ProductId>(b % 4), 4, 5}, std::to_string(b)});
        return v;
    }();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto split = split_warm(shared, {}, seed);
        const auto train = ids_in(split.train);
        for (const auto& b : split.test)
            for (ProductId p : b.productIds) CHECK(train.contains(p));
    }
}

TEST_CASE("warm split removal count matches a set-difference oracle") {
    const auto baskets = random_baskets(1000, 400, 21);
    const auto split = split_warm(baskets, {}, 4);
    // Rebuild validation/test from the recorded partition.
    std::map<std::string, const Basket*> bySource;
    for (const auto& b : baskets) bySource[b.sourceId] = &b;
    std::set<ProductId> train;
    for (const auto& id : split.trainSources) train.insert(bySource[id]->productIds.begin(), bySource[id]->productIds.end());
    std::size_t removed = 0, dropped = 0;
    std::vector<Basket> expectedTest;
    for (const auto* part : {&split.validationSources, &split.testSources}) {
        for (const auto& id : *part) {
            std::vector<ProductId> kept;
            std::set_intersection(bySource[id]->productIds.begin(), bySource[id]->productIds.end(), train.begin(),
                                  train.end(), std::back_inserter(kept));
            removed += bySource[id]->size() - kept.size();
            if (kept.size() < 2) ++dropped;
            else if (part == &split.testSources) expectedTest.push_back(Basket{kept, id});
        }
    }
    CHECK(split.removedOccurrences == removed);
    CHECK(split.droppedBaskets == dropped);
    REQUIRE(split.test.size() == expectedTest.size());
    for (std::size_t i = 0; i < expectedTest.size(); ++i) CHECK(split.test[i].productIds == expectedTest[i].productIds);
}

TEST_CASE("split parts are disjoint and deterministic") {
    const auto baskets = random_baskets(500, 120, 8);
    const auto a = split_warm(baskets, {}, 77);
    const auto b = split_warm(baskets, {}, 77);
    CHECK(a.trainSources == b.trainSources);
    CHECK(a.testSources == b.testSources);
    std::set<std::string> seen;
    for (const auto* part : {&a.trainSources, &a.validationSources, &a.testSources})
        for (const auto& id : *part) CHECK(seen.insert(id).second);
    CHECK(seen.size() == baskets.size());
    CHECK(a.trainSources.size() == 425);
    CHECK(a.validationSources.size() == 25);
    CHECK(a.testSources.size() == 50);
    const auto c = split_warm(baskets, {}, 78);
    CHECK(c.trainSources != a.trainSources);
}

TEST_CASE("cold split removes every test product from training") {
    const auto baskets = random_baskets(1000, 300, 13);
    const auto split = split_cold(baskets, {}, 0.10, 5);
    REQUIRE_FALSE(split.testProductIds.empty());
    const auto train = ids_in(split.train);
    for (ProductId p : split.testProductIds) CHECK_FALSE(train.contains(p));
    const auto testProducts = ids_in(split.test);
    for (ProductId p : split.testProductIds) CHECK(testProducts.contains(p));
    CHECK(std::is_sorted(split.testProductIds.begin(), split.testProductIds.end()));
    // Validation is formed warm-style.
    for (const auto& b : split.validation)
        for (ProductId p : b.productIds) CHECK(train.contains(p));
}

TEST_CASE("cold split needs ten distinct test products") {
    std::vector<Basket> tiny;
    for (int b = 0; b < 30; ++b) tiny.push_back(Basket{{0, 1, 2}, std::to_string(b)});
    CHECK_THROWS_AS(split_cold(tiny, {}, 0.10, 1), Error);
}

TEST_CASE("split invariants hold on random corpora") {
    for (std::uint64_t corpus = 0; corpus < 100; ++corpus) {
        auto rng = CounterRng::keyed(corpus, 1234);
        const auto baskets = random_baskets(200 + rng.below(300), 60 + rng.below(200), corpus);
        const auto warm = split_warm(baskets, {}, corpus);
        const auto trainW = ids_in(warm.train);
        for (const auto* part : {&warm.validation, &warm.test})
            for (const auto& b : *part)
                for (ProductId p : b.productIds) REQUIRE(trainW.contains(p));
        const auto cold = split_cold(baskets, {}, 0.10, corpus);
        const auto trainC = ids_in(cold.train);
        for (ProductId p : cold.testProductIds) REQUIRE_FALSE(trainC.contains(p));
    }
}

TEST_CASE("split manifest round trip rebuilds the split exactly") {
    TempDir dir;
    const auto planted = bastext::testing::make_planted({});
    for (const bool cold : {false, true}) {
        const auto split = cold ? split_cold(planted.dataset.baskets, {}, 0.1, 3) : split_warm(planted.dataset.baskets, {}, 3);
        const auto path = dir / (cold ? "cold.txt" : "warm.txt");
        write_split_manifest(make_manifest(split, planted.dataset.catalog), path);
        const auto again = apply_manifest(read_split_manifest(path), planted.dataset.baskets, planted.dataset.catalog);
        CHECK(again.mode == split.mode);
        CHECK(again.testProductIds == split.testProductIds);
        REQUIRE(again.train.size() == split.train.size());
        REQUIRE(again.test.size() == split.test.size());
        for (std::size_t i = 0; i < split.train.size(); ++i) CHECK(again.train[i].productIds == split.train[i].productIds);
        for (std::size_t i = 0; i < split.test.size(); ++i) CHECK(again.test[i].productIds == split.test[i].productIds);
    }
}

} // TEST_SUITE
