#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ammpl/encoders.hpp"

namespace ammpl {

/// Outcome of one invariant suite.
struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Small dimensions for exhaustive and finite-difference checks.
DimConfig toy_dims();

/// For random configurations, the straight-through mask equals a plain
/// Bernoulli sample bitwise, and dL/dP equals dL/dM for a downstream loss.
CheckResult check_straight_through(std::size_t configurations = 100, std::uint64_t seed = 1);

/// Full-pipeline reverse-mode gradients (V, N, both nets and P through the
/// reconstructed mask) against central differences, with every component on.
/// Also requires the straight-through gradient of P to equal the gradient
/// through the reconstruction.
CheckResult check_pipeline_gradients(std::uint64_t seed = 1);

/// Empirical keep frequency within the 3 sigma binomial band for
/// p in {0.1, 0.5, 0.95}; clamping sends -1 to 0 and 2 to 1.
CheckResult check_bernoulli_statistics(std::size_t draws = 10000, std::uint64_t seed = 1);

/// Every mask on a 3 x 3 grid: kept patches unchanged, masked patches equal
/// to the padding, and padding plus E = -N gives zeros.
CheckResult check_mask_padding(std::uint64_t seed = 1);

/// One published base/novel/HM triple.
struct PublishedHm {
    std::string dataset;
    std::string method;
    double base = 0.0, novel = 0.0, hm = 0.0;
};

/// The 27 base-to-novel rows (9 datasets x CoCoOp, MaPLe, AMMPL).
const std::vector<PublishedHm>& published_hm_table();

/// Recomputes every published HM; each must lie within `tolerance`.
CheckResult check_harmonic_table(double tolerance = 0.01);

/// With zero-initialised output layers, C1+C2+C3 and C1+C2 give bitwise
/// equal losses at initialisation for shared seeds, in both prompt modes.
CheckResult check_interaction_noop(std::uint64_t seed = 1);

/// Runs all suites in order; `progress` sees each result as it completes.
std::vector<CheckResult> run_selftest(const std::function<void(const CheckResult&)>& progress = {});

}  // namespace ammpl
