#include "bastext/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>

#include "bastext/parallel.hpp"

namespace bastext {

double recall_at_n(std::span<const Rank> ranks, Rank n) {
    if (ranks.empty()) throw Error("cannot compute Recall@N over zero test cases");
    std::size_t hits = 0;
    for (Rank r : ranks) hits += r <= n ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr_at_n(std::span<const Rank> ranks, Rank n) {
    if (ranks.empty()) throw Error("cannot compute MRR@N over zero test cases");
    double sum = 0.0;
    for (Rank r : ranks)
        if (r <= n) sum += 1.0 / static_cast<double>(r);
    return sum / static_cast<double>(ranks.size());
}

std::vector<TestCase> form_test_cases(const DatasetSplit& split) {
    const bool cold = split.mode == SplitMode::cold;
    std::vector<TestCase> cases;
    for (const auto& basket : split.test) {
        const auto& ids = basket.productIds;
        if (ids.size() < 2) continue;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (cold && !std::binary_search(split.testProductIds.begin(), split.testProductIds.end(), ids[k])) continue;
            TestCase c;
            c.heldOutId = ids[k];
            c.basketSourceId = basket.sourceId;
            c.contextIds.reserve(ids.size() - 1);
            for (std::size_t j = 0; j < ids.size(); ++j)
                if (j != k) c.contextIds.push_back(ids[j]);
            cases.push_back(std::move(c));
        }
    }
    if (cases.empty()) throw Error("the test split yields zero test cases");
    return cases;
}

CandidatePool parse_candidate_pool(std::string_view text) {
    if (text == "all") return CandidatePool::all;
    if (text == "test-products") return CandidatePool::testProducts;
    throw Error(fmt::format("unknown candidate pool '{}' (expected all or test-products)", text));
}

std::string to_string(CandidatePool pool) { return pool == CandidatePool::all ? "all" : "test-products"; }

std::vector<ProductId> pool_members(CandidatePool pool, std::size_t productCount,
                                    std::span<const ProductId> testProductIds) {
    if (pool == CandidatePool::all) return all_products(productCount);
    if (testProductIds.empty()) throw Error("the test-products pool needs a cold split");
    std::vector<ProductId> members(testProductIds.begin(), testProductIds.end());
    std::sort(members.begin(), members.end());
    return members;
}

std::vector<ProductId> rank_candidates(const TestCase& testCase, std::span<const double> scores,
                                       std::span<const ProductId> poolSorted) {
    std::vector<ProductId> out;
    out.reserve(poolSorted.size());
    std::set_difference(poolSorted.begin(), poolSorted.end(), testCase.contextIds.begin(), testCase.contextIds.end(),
                        std::back_inserter(out));
    std::sort(out.begin(), out.end(), [&](ProductId a, ProductId b) {
        const double sa = scores[static_cast<std::size_t>(a)], sb = scores[static_cast<std::size_t>(b)];
        return sa > sb || (sa == sb && a < b);
    });
    return out;
}

std::vector<ProductId> rank_candidates(const TestCase& testCase, const Scorer& scorer,
                                       std::span<const ProductId> poolSorted) {
    std::vector<double> scores(scorer.product_count());
    scorer.score_all(testCase.contextIds, scores);
    return rank_candidates(testCase, scores, poolSorted);
}

Rank rank_in_pool(const TestCase& testCase, std::span<const double> scores, std::span<const ProductId> poolSorted,
                  bool poolIsEverything) {
    if (poolIsEverything) return rank_of(testCase.heldOutId, scores, testCase.contextIds);
    const ProductId h = testCase.heldOutId;
    if (!std::binary_search(poolSorted.begin(), poolSorted.end(), h)) return kAbsentRank;
    if (std::binary_search(testCase.contextIds.begin(), testCase.contextIds.end(), h)) return kAbsentRank;
    const double target = scores[static_cast<std::size_t>(h)];
    Rank ahead = 0;
    auto ctx = testCase.contextIds.begin();
    for (ProductId j : poolSorted) {
        while (ctx != testCase.contextIds.end() && *ctx < j) ++ctx;
        if (ctx != testCase.contextIds.end() && *ctx == j) continue;
        const double s = scores[static_cast<std::size_t>(j)];
        if (s > target || (s == target && j < h)) ++ahead;
    }
    return ahead + 1;
}

namespace {

template <typename ScoreFn>
std::vector<Rank> rank_all(std::size_t productCount, std::span<const TestCase> cases, const EvalOptions& options,
                           ScoreFn&& scoreFn) {
    const auto pool = pool_members(options.pool, productCount, options.testProductIds);
    const bool everything = options.pool == CandidatePool::all;
    std::vector<Rank> ranks(cases.size());
    const int threads = std::max(1, options.threads);
    std::vector<std::vector<double>> buffers(static_cast<std::size_t>(threads), std::vector<double>(productCount));
    const std::size_t chunk = std::max<std::size_t>(1, cases.size() / 20);
    for (std::size_t begin = 0; begin < cases.size(); begin += chunk) {
        const std::size_t end = std::min(cases.size(), begin + chunk);
        const std::size_t span = end - begin;
        // Contiguous slices per worker so each worker owns one buffer.
        const auto slices = static_cast<std::size_t>(threads);
        parallel_for(slices, threads, [&](std::size_t w) {
            auto& scores = buffers[w];
            const std::size_t lo = begin + span * w / slices, hi = begin + span * (w + 1) / slices;
            for (std::size_t i = lo; i < hi; ++i) {
                scoreFn(i, cases[i], std::span<double>(scores));
                ranks[i] = rank_in_pool(cases[i], scores, pool, everything);
            }
        });
        if (options.progress) options.progress(end, cases.size());
    }
    return ranks;
}

std::string construction_for(const std::string& mode) {
    if (mode == "cold")
        return "leave-one-out over test baskets; held-out restricted to cold test products; empty contexts dropped";
    return "leave-one-out over test baskets; every product held out once; empty contexts dropped";
}

} // namespace

std::vector<Rank> rank_cases(const Scorer& scorer, std::span<const TestCase> cases, const EvalOptions& options) {
    return rank_all(scorer.product_count(), cases, options,
                    [&](std::size_t, const TestCase& c, std::span<double> out) { scorer.score_all(c.contextIds, out); });
}

EvalReport make_report(std::string method, std::span<const Rank> ranks, const EvalOptions& options) {
    EvalReport report;
    report.method = std::move(method);
    report.mode = options.mode;
    report.pool = to_string(options.pool);
    report.construction = construction_for(options.mode);
    report.fingerprint = options.fingerprint;
    report.Ns = options.Ns;
    std::sort(report.Ns.begin(), report.Ns.end());
    report.Ns.erase(std::unique(report.Ns.begin(), report.Ns.end()), report.Ns.end());
    for (Rank n : report.Ns) {
        report.recall.push_back(recall_at_n(ranks, n));
        report.mrr.push_back(mrr_at_n(ranks, n));
    }
    report.numTestCases = ranks.size();
    return report;
}

EvalReport evaluate(const Scorer& scorer, std::span<const TestCase> cases, const EvalOptions& options) {
    const auto ranks = rank_cases(scorer, cases, options);
    return make_report(scorer.name(), ranks, options);
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["mode"] = mode;
    j["pool"] = pool;
    j["construction"] = construction;
    j["fingerprint"] = fingerprint;
    j["num_test_cases"] = numTestCases;
    auto& metrics = j["metrics"];
    metrics = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < Ns.size(); ++i)
        metrics.push_back({{"n", Ns[i]}, {"recall", recall[i]}, {"mrr", mrr[i]}});
    return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::string out = fmt::format("method={} mode={} pool={} cases={}\n", method, mode, pool, numTestCases);
    out += fmt::format("{:>6}  {:>10}  {:>10}\n", "N", "Recall@N", "MRR@N");
    for (std::size_t i = 0; i < Ns.size(); ++i)
        out += fmt::format("{:>6}  {:>10.6f}  {:>10.6f}\n", Ns[i], recall[i], mrr[i]);
    return out;
}

ExternalScores::ExternalScores(const std::filesystem::path& path, std::size_t productCount, std::size_t caseCount)
    : productCount_(productCount), rows_(caseCount) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open score file '{}'", path.string()));
    std::vector<char> seen(caseCount, 0);
    std::string line;
    std::size_t lineNo = 0;
    auto bad = [&](std::string_view why) {
        return Error(fmt::format("score file '{}' line {}: {}", path.string(), lineNo, why));
    };
    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw bad("missing tab after the case index");
        std::size_t caseIndex = 0;
        {
            const auto res = std::from_chars(line.data(), line.data() + tab, caseIndex);
            if (res.ec != std::errc() || res.ptr != line.data() + tab) throw bad("invalid case index");
        }
        if (caseIndex >= caseCount) throw bad(fmt::format("case index {} out of range", caseIndex));
        if (seen[caseIndex]) throw bad(fmt::format("case {} listed twice", caseIndex));
        seen[caseIndex] = 1;
        auto& row = rows_[caseIndex];
        std::string_view rest(line);
        rest.remove_prefix(tab + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto item = rest.substr(0, comma);
            const auto colon = item.find(':');
            if (colon == std::string_view::npos) throw bad("expected candidateId:score");
            ProductId id = 0;
            double score = 0.0;
            auto r1 = std::from_chars(item.data(), item.data() + colon, id);
            auto r2 = std::from_chars(item.data() + colon + 1, item.data() + item.size(), score);
            if (r1.ec != std::errc() || r1.ptr != item.data() + colon || r2.ec != std::errc() ||
                r2.ptr != item.data() + item.size())
                throw bad(fmt::format("malformed entry '{}'", item));
            if (id < 0 || static_cast<std::size_t>(id) >= productCount) throw bad(fmt::format("unknown product id {}", id));
            row.emplace_back(id, score);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
    }
    for (std::size_t i = 0; i < caseCount; ++i)
        if (!seen[i]) throw Error(fmt::format("score file '{}' is missing case {}", path.string(), i));
}

void ExternalScores::score_all(std::span<const ProductId>, std::span<double>) const {
    throw Error("external scores are keyed by test case");
}

void ExternalScores::scores_for(std::size_t caseIndex, std::span<double> out) const {
    std::fill(out.begin(), out.end(), -std::numeric_limits<double>::infinity());
    for (const auto& [id, s] : rows_.at(caseIndex)) out[static_cast<std::size_t>(id)] = s;
}

EvalReport evaluate_external(const ExternalScores& scores, std::span<const TestCase> cases, const EvalOptions& options) {
    const auto ranks = rank_all(scores.product_count(), cases, options,
                                [&](std::size_t i, const TestCase&, std::span<double> out) { scores.scores_for(i, out); });
    return make_report(scores.name(), ranks, options);
}

} // namespace bastext
