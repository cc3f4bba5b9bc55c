#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bastext/model.hpp"

namespace bastext::testing {

struct GradCheckSetup {
    EncoderKind encoder = EncoderKind::mov;
    bool pretrained = false; // pretrained inputs of dimension 5, fine-tuned
    bool useBias = false;
    int vocabulary = 20;
    int products = 12;
    int embeddingSize = 8;
    int filters = 4;
    std::uint64_t seed = 1;
};

struct GradCheckResult {
    double maxRelativeError = 0.0;
    std::string worstTensor;
    std::size_t checked = 0;
    std::size_t skippedKinks = 0;
};

/// Random double-precision model and product titles for gradient checks.
struct GradCheckFixture {
    ModelState<double> state;
    std::vector<std::vector<TokenId>> tokens;
};

GradCheckFixture make_gradcheck_fixture(const GradCheckSetup& setup);

/// Random batch of examples with 1-3 context products and mixed labels.
ExampleBatch random_batch(std::size_t products, std::size_t groups, std::uint64_t seed);

/// Central differences with step `epsilon` on every trainable entry.
/// rel = |a - n| / max(|a|, |n|, 1e-6); entries whose perturbation flips a
/// ReLU or moves a max-pool argmax are skipped and counted.
GradCheckResult check_gradients(const GradCheckFixture& fixture, const ExampleBatch& batch, double epsilon = 1e-4);

} // namespace bastext::testing
