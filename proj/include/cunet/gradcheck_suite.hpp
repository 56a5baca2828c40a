#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cunet {

struct GradcheckResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t coords = 0;
    std::size_t kinks_skipped = 0;
    std::size_t seeds = 0;
    double denominator_floor = 0.0;
    std::string worst;
};

/// Denominator floor for the composed cascade loss. Central differences at
/// step 1e-5 carry roundoff of order eps·|loss|/step ≈ 1e-10, so smaller
/// gradients are compared on an absolute scale.
inline constexpr double kComposedLossFloor = 1e-5;

/// Names of the checked operations, in run order.
std::vector<std::string> gradcheck_suite_names();

/// Central-difference check of every differentiable op and of the full
/// cascade loss, each over `seeds` randomized small configurations
/// (seeds first_seed, first_seed+1, …).
std::vector<GradcheckResult> run_gradcheck_suite(std::size_t seeds, double step = 1e-5,
                                                 std::uint64_t first_seed = 0);

}  // namespace cunet
