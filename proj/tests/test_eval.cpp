#include <doctest.h>

#include <cmath>
#include <json.hpp>

#include "bastext/baselines.hpp"
#include "bastext/eval.hpp"
#include "support/fixtures.hpp"

using namespace bastext;
using namespace bastext::testing;

namespace {

class TableScorer final : public Scorer {
public:
    explicit TableScorer(std::vector<double> s) : s_(std::move(s)) {}
    std::string name() const override { return "table"; }
    std::size_t product_count() const override { return s_.size(); }
    void score_all(std::span<const ProductId>, std::span<double> out) const override { std::copy(s_.begin(), s_.end(), out.begin()); }

private:
    std::vector<double> s_;
};

// Scores the held-out product of the current case highest.
class OracleScorer final : public Scorer {
public:
    OracleScorer(std::size_t m, const std::vector<TestCase>& cases) : m_(m), cases_(cases) {}
    std::string name() const override { return "oracle"; }
    std::size_t product_count() const override { return m_; }
    void score_all(std::span<const ProductId> context, std::span<double> out) const override {
        std::fill(out.begin(), out.end(), 0.0);
        for (const auto& c : cases_)
            if (std::equal(c.contextIds.begin(), c.contextIds.end(), context.begin(), context.end())) out[static_cast<std::size_t>(c.heldOutId)] = 1.0;
    }

private:
    std::size_t m_;
    const std::vector<TestCase>& cases_;
};

DatasetSplit toy_split() {
    DatasetSplit s;
    s.train = {{{0, 1}, "t0"}, {{0, 2}, "t1"}, {{0, 3}, "t2"}, {{1, 2}, "t3"}};
    s.test = {{{0, 1, 2}, "x0"}, {{2, 3}, "x1"}};
    return s;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("recall and MRR on a hand example") {
    const std::vector<Rank> ranks{1, 3, 5, kAbsentRank};
    CHECK(recall_at_n(ranks, 1) == 0.25);
    CHECK(recall_at_n(ranks, 3) == 0.5);
    CHECK(recall_at_n(ranks, 10) == 0.75);
    CHECK(mrr_at_n(ranks, 3) == doctest::Approx((1.0 + 1.0 / 3.0) / 4.0));
    CHECK(mrr_at_n(ranks, 10) == doctest::Approx((1.0 + 1.0 / 3.0 + 0.2) / 4.0));
    CHECK_THROWS_AS(recall_at_n(std::vector<Rank>{}, 10), Error);
    CHECK_THROWS_AS(mrr_at_n(std::vector<Rank>{}, 10), Error);
}

TEST_CASE("metrics agree with a loop oracle and are monotone in N") {
    auto rng = CounterRng::keyed(31, 0);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<Rank> ranks(1 + rng.below(30));
        for (auto& r : ranks) r = rng.below(10) == 0 ? kAbsentRank : 1 + rng.below(60);
        const Rank n = 1 + rng.below(40);
        double hits = 0, rr = 0;
        for (Rank r : ranks)
            if (r <= n) {
                hits += 1;
                rr += 1.0 / static_cast<double>(r);
            }
        const double size = static_cast<double>(ranks.size());
        REQUIRE(std::abs(recall_at_n(ranks, n) - hits / size) < 1e-12);
        REQUIRE(std::abs(mrr_at_n(ranks, n) - rr / size) < 1e-12);
        REQUIRE(recall_at_n(ranks, n + 1) >= recall_at_n(ranks, n));
        REQUIRE(mrr_at_n(ranks, n + 1) >= mrr_at_n(ranks, n));
        REQUIRE(mrr_at_n(ranks, n) <= recall_at_n(ranks, n));
    }
}

TEST_CASE("ranking breaks ties by ascending id and skips the context") {
    const std::vector<double> scores{0.5, 0.9, 0.5, 0.1, 0.9};
    TestCase c{{1}, 2, "b"};
    const auto pool = all_products(5);
    CHECK(rank_candidates(c, scores, pool) == std::vector<ProductId>{4, 0, 2, 3});
    CHECK(rank_in_pool(c, scores, pool, true) == 3);
    CHECK(rank_in_pool(c, scores, pool, false) == 3);
    TestCase inContext{{2}, 2, "b"};
    CHECK(rank_in_pool(inContext, scores, pool, true) == kAbsentRank);
    const std::vector<ProductId> restricted{0, 3};
    CHECK(rank_in_pool(c, scores, restricted, false) == kAbsentRank);
    TestCase held{{1}, 3, "b"};
    CHECK(rank_in_pool(held, scores, restricted, false) == 2);
}

TEST_CASE("rank computation agrees with sorting on random scores") {
    auto rng = CounterRng::keyed(77, 0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t M = 2 + rng.below(60);
        std::vector<double> scores(M);
        for (auto& s : scores) s = static_cast<double>(rng.below(8)); // many ties
        std::vector<ProductId> ids = all_products(M);
        shuffle(std::span(ids), rng);
        const std::size_t ctx = 1 + rng.below(std::min<std::uint64_t>(M - 1, 5));
        TestCase c;
        c.contextIds.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(ctx));
        std::sort(c.contextIds.begin(), c.contextIds.end());
        c.heldOutId = ids[rng.below(M)];
        std::vector<ProductId> pool;
        for (ProductId p = 0; p < static_cast<ProductId>(M); ++p)
            if (rng.below(4) != 0) pool.push_back(p);
        for (const bool everything : {true, false}) {
            const auto& members = everything ? all_products(M) : pool;
            const auto ranked = rank_candidates(c, scores, members);
            const auto it = std::find(ranked.begin(), ranked.end(), c.heldOutId);
            const Rank expected = it == ranked.end() ? kAbsentRank : static_cast<Rank>(it - ranked.begin()) + 1;
            REQUIRE(rank_in_pool(c, scores, members, everything) == expected);
        }
    }
}

TEST_CASE("test cases hold out each product once") {
    const auto split = toy_split();
    const auto cases = form_test_cases(split);
    REQUIRE(cases.size() == 5);
    CHECK(cases[0].heldOutId == 0);
    CHECK(cases[0].contextIds == std::vector<ProductId>{1, 2});
    CHECK(cases[2].contextIds == std::vector<ProductId>{0, 1});
    CHECK(cases[4].heldOutId == 3);
    CHECK(cases[4].basketSourceId == "x1");
}

TEST_CASE("cold test cases hold out only test products") {
    auto split = toy_split();
    split.mode = SplitMode::cold;
    split.testProductIds = {3};
    const auto cases = form_test_cases(split);
    REQUIRE(cases.size() == 1);
    CHECK(cases[0].heldOutId == 3);
    CHECK(cases[0].contextIds == std::vector<ProductId>{2});
    split.testProductIds = {7};
    CHECK_THROWS_AS(form_test_cases(split), Error);
}

TEST_CASE("candidate pools") {
    CHECK(parse_candidate_pool("all") == CandidatePool::all);
    CHECK(parse_candidate_pool("test-products") == CandidatePool::testProducts);
    CHECK_THROWS_AS(parse_candidate_pool("some"), Error);
    CHECK(pool_members(CandidatePool::all, 3, {}) == std::vector<ProductId>{0, 1, 2});
    const std::vector<ProductId> test{4, 1};
    CHECK(pool_members(CandidatePool::testProducts, 6, test) == std::vector<ProductId>{1, 4});
    CHECK_THROWS_AS(pool_members(CandidatePool::testProducts, 6, {}), Error);
}

TEST_CASE("POP on the toy split gives hand-computed metrics") {
    const auto split = toy_split();
    // Train counts: 0:3, 1:2, 2:2, 3:1.
    PopScorer pop(build_pop(split.train, 4));
    const auto cases = form_test_cases(split);
    EvalOptions opt;
    opt.Ns = {1, 2, 3};
    const auto ranks = rank_cases(pop, cases, opt);
    // Candidates exclude the context: case 0 {1,2}->0 rank 1; case 1 {0,2}->1 rank 1;
    // case 2 {0,1}->2 rank 1; case 3 {3}->2 rank 3 (0, then 1 wins the tie);
    // case 4 {2}->3 rank 3.
    CHECK(ranks == std::vector<Rank>{1, 1, 1, 3, 3});
    const auto report = evaluate(pop, cases, opt);
    CHECK(report.recall[0] == doctest::Approx(0.6));
    CHECK(report.recall[1] == doctest::Approx(0.6));
    CHECK(report.recall[2] == doctest::Approx(1.0));
    CHECK(report.mrr[2] == doctest::Approx((3.0 + 2.0 / 3.0) / 5.0));
    CHECK(report.numTestCases == 5);
    CHECK(report.method == "pop");
}

TEST_CASE("a perfect scorer reaches recall one") {
    const auto split = toy_split();
    const auto cases = form_test_cases(split);
    OracleScorer oracle(4, cases);
    EvalOptions opt;
    opt.Ns = {1};
    const auto report = evaluate(oracle, cases, opt);
    CHECK(report.recall[0] == 1.0);
    CHECK(report.mrr[0] == 1.0);
}

TEST_CASE("evaluation is identical across thread counts") {
    auto rng = CounterRng::keyed(4, 4);
    std::vector<double> s(50);
    for (auto& x : s) x = rng.uniform();
    TableScorer scorer(s);
    std::vector<TestCase> cases;
    for (int i = 0; i < 333; ++i) cases.push_back(TestCase{{static_cast<ProductId>(i % 50)}, static_cast<ProductId>((i * 7 + 3) % 50), ""});
    EvalOptions one, many;
    many.threads = 4;
    std::size_t progressCalls = 0;
    many.progress = [&](std::size_t done, std::size_t total) {
        ++progressCalls;
        CHECK(done <= total);
    };
    CHECK(rank_cases(scorer, cases, one) == rank_cases(scorer, cases, many));
    CHECK(progressCalls > 0);
}

TEST_CASE("report JSON layout") {
    std::vector<Rank> ranks{1, 2, kAbsentRank, 30};
    EvalOptions opt;
    opt.Ns = {20, 10, 20};
    opt.fingerprint = "abc";
    const auto report = make_report("pop", ranks, opt);
    CHECK(report.Ns == std::vector<Rank>{10, 20});
    const auto j = nlohmann::json::parse(report.to_json());
    CHECK(j["method"] == "pop");
    CHECK(j["mode"] == "warm");
    CHECK(j["pool"] == "all");
    CHECK(j["fingerprint"] == "abc");
    CHECK(j["num_test_cases"] == 4);
    REQUIRE(j["metrics"].size() == 2);
    CHECK(j["metrics"][0]["n"] == 10);
    CHECK(j["metrics"][1]["recall"].get<double>() == 0.5);
    CHECK(report.to_json() == make_report("pop", ranks, opt).to_json());
    CHECK(report.to_table().find("Recall@N") != std::string::npos);
}

TEST_CASE("external score files") {
    TempDir dir;
    const auto split = toy_split();
    const auto cases = form_test_cases(split);
    write_file(dir / "ok.tsv", "0\t0:5,3:1\n1\t1:2\n2\t2:9,3:8\n\n3\t0:1,2:0.5\n4\t3:-1\n");
    const ExternalScores ext(dir / "ok.tsv", 4, cases.size());
    std::vector<double> row(4);
    ext.scores_for(0, row);
    CHECK(row[0] == 5.0);
    CHECK(std::isinf(row[1]));
    EvalOptions opt;
    opt.Ns = {1};
    const auto report = evaluate_external(ext, cases, opt);
    // Case 3 scores 0 above 2, so the held-out 2 is second; every other case ranks first.
    CHECK(report.recall[0] == doctest::Approx(0.8));
    CHECK(report.method == "external");

    auto fails = [&](const std::string& body, const std::string& fragment) {
        write_file(dir / "bad.tsv", body);
        try {
            ExternalScores bad(dir / "bad.tsv", 4, cases.size());
            FAIL("accepted a bad score file: ", body);
        } catch (const Error& e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
        }
    };
    fails("0\t0:1\n1\t1:1\n2\t2:1\n3\t3:1\n", "is missing case 4");
    fails("0 0:1\n", "line 1: missing tab");
    fails("0\t0:1\n0\t1:1\n", "line 2: case 0 listed twice");
    fails("0\t9:1\n", "unknown product id 9");
    fails("0\t1=2\n", "expected candidateId:score");
    fails("0\t1:x\n", "malformed entry");
    fails("9\t1:1\n", "out of range");
    CHECK_THROWS_AS(ExternalScores(dir / "absent.tsv", 4, 1), Error);
}

} // TEST_SUITE
