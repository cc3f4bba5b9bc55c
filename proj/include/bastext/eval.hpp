#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bastext/corpus.hpp"
#include "bastext/metrics.hpp"
#include "bastext/scorer.hpp"

namespace bastext {

struct TestCase {
    std::vector<ProductId> contextIds; // sorted, non-empty
    ProductId heldOutId = 0;
    std::string basketSourceId;
};

/// Leave-one-out cases over the test baskets. In cold mode only test products
/// are held out. Throws when no case survives.
std::vector<TestCase> form_test_cases(const DatasetSplit& split);

enum class CandidatePool { all, testProducts };
CandidatePool parse_candidate_pool(std::string_view text);
std::string to_string(CandidatePool pool);

/// Sorted ids eligible as candidates before the context is removed.
/// Empty `testProductIds` with the testProducts pool is an error.
std::vector<ProductId> pool_members(CandidatePool pool, std::size_t productCount,
                                    std::span<const ProductId> testProductIds);

/// Pool members minus the context, ordered by descending score then
/// ascending id.
std::vector<ProductId> rank_candidates(const TestCase& testCase, std::span<const double> scores,
                                       std::span<const ProductId> poolSorted);
std::vector<ProductId> rank_candidates(const TestCase& testCase, const Scorer& scorer,
                                       std::span<const ProductId> poolSorted);

/// Position of the held-out product in rank_candidates' output, or
/// kAbsentRank when it is not a candidate.
Rank rank_in_pool(const TestCase& testCase, std::span<const double> scores, std::span<const ProductId> poolSorted,
                  bool poolIsEverything);

struct EvalReport {
    std::string method;
    std::string mode;
    std::string pool;
    std::string construction;
    std::string fingerprint;
    std::vector<Rank> Ns;
    std::vector<double> recall; // parallel to Ns
    std::vector<double> mrr;
    std::size_t numTestCases = 0;

    std::string to_json() const;
    std::string to_table() const;
};

struct EvalOptions {
    std::vector<Rank> Ns{10, 20};
    CandidatePool pool = CandidatePool::all;
    int threads = 1;
    /// Test products of a cold split; needed for the testProducts pool.
    std::vector<ProductId> testProductIds;
    std::string mode = "warm";
    std::string fingerprint;
    /// Called with (done, total) roughly every few percent.
    std::function<void(std::size_t, std::size_t)> progress;
};

std::vector<Rank> rank_cases(const Scorer& scorer, std::span<const TestCase> cases, const EvalOptions& options);
EvalReport make_report(std::string method, std::span<const Rank> ranks, const EvalOptions& options);
EvalReport evaluate(const Scorer& scorer, std::span<const TestCase> cases, const EvalOptions& options);

/// `caseIndex<TAB>candidateId:score,...`, ids are dense product ids.
/// Candidates not listed get -infinity. Scores for every case are required.
class ExternalScores final : public Scorer {
public:
    ExternalScores(const std::filesystem::path& path, std::size_t productCount, std::size_t caseCount);
    std::string name() const override { return "external"; }
    std::size_t product_count() const override { return productCount_; }
    /// Unused: external scores are keyed by case, see evaluate_external.
    void score_all(std::span<const ProductId>, std::span<double> out) const override;
    void scores_for(std::size_t caseIndex, std::span<double> out) const;

private:
    std::size_t productCount_;
    std::vector<std::vector<std::pair<ProductId, double>>> rows_;
};

EvalReport evaluate_external(const ExternalScores& scores, std::span<const TestCase> cases, const EvalOptions& options);

} // namespace bastext
