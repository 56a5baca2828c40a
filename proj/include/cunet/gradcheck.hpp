#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cunet/tensor.hpp"

namespace cunet {

/// Outcome of comparing reverse-mode gradients with central differences.
struct FdReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t kinks_skipped = 0;  // probes whose ±step crossed a ReLU/pool/floor branch
    std::string worst;  // "<tensor index>[<flat index>]: analytic vs numeric"
};

inline constexpr double kDefaultDenominatorFloor = 1e-8;

/// |a − b| / max(|a|, |b|, floor).
double fd_relative_error(double analytic, double numeric, double floor = kDefaultDenominatorFloor);

/// Central differences of scalar `fn` at `input` against backward().
/// Coordinates whose ±step evaluations take a different branch of a piecewise
/// op than the unperturbed point are not compared (counted in kinks_skipped).
/// Returns the worst relative error over all input elements.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& input,
                               double step);

/// Same check over several leaf tensors that `loss` closes over (e.g. model
/// parameters). When `max_coords_per_tensor` is nonzero, a seeded random
/// subset of coordinates is probed per tensor.
FdReport finite_difference_check(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double step,
                                 std::size_t max_coords_per_tensor = 0, std::uint64_t seed = 0,
                                 double denominator_floor = kDefaultDenominatorFloor);

}  // namespace cunet
