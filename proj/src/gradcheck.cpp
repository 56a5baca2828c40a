#include "cunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cunet/errors.hpp"
#include "cunet/ops.hpp"

namespace cunet {

namespace {

struct TracedValue {
    double value;
    std::uint64_t branches;
};

TracedValue traced(const std::function<Tensor()>& loss) {
    auto& trace = detail::branch_trace();
    const detail::BranchTrace saved = trace;
    trace = detail::BranchTrace{};
    trace.enabled = true;
    TracedValue r{0.0, 0};
    try {
        r.value = loss().item();
    } catch (...) {
        trace = saved;
        throw;
    }
    r.branches = trace.hash;
    trace = saved;
    return r;
}

}  // namespace

double fd_relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& input,
                               double step) {
    Tensor x = input.clone();
    x.set_requires_grad(true);
    return finite_difference_check([&] { return fn(x); }, {x}, step).max_rel_error;
}

FdReport finite_difference_check(const std::function<Tensor()>& loss, std::vector<Tensor> wrt, double step,
                                 std::size_t max_coords_per_tensor, std::uint64_t seed, double denominator_floor) {
    if (!(step > 0.0)) throw ContractError("finite_difference_check: step must be positive");
    for (auto& t : wrt) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    const Tensor out = loss();
    if (!std::isfinite(out.item())) throw NumericError("finite_difference_check: non-finite loss");
    out.backward();

    std::mt19937_64 rng(seed);
    FdReport report;
    NoGradGuard no_grad;
    const std::uint64_t base_branches = traced(loss).branches;
    for (std::size_t t = 0; t < wrt.size(); ++t) {
        Tensor& x = wrt[t];
        std::vector<std::size_t> coords(x.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (max_coords_per_tensor != 0 && coords.size() > max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(max_coords_per_tensor);
        }
        const auto grad = x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                       : std::vector<double>(x.numel(), 0.0);
        for (std::size_t i : coords) {
            const double orig = x.data()[i];
            x.data()[i] = orig + step;
            const TracedValue plus = traced(loss);
            x.data()[i] = orig - step;
            const TracedValue minus = traced(loss);
            x.data()[i] = orig;
            if (!std::isfinite(plus.value) || !std::isfinite(minus.value))
                throw NumericError("finite_difference_check: non-finite function value");
            if (plus.branches != base_branches || minus.branches != base_branches) {
                ++report.kinks_skipped;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * step);
            const double err = fd_relative_error(grad[i], numeric, denominator_floor);
            ++report.coords_checked;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                std::ostringstream ss;
                ss << t << "[" << i << "]: analytic " << grad[i] << " vs numeric " << numeric;
                report.worst = ss.str();
            }
        }
    }
    return report;
}

}  // namespace cunet
