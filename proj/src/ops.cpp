#include <algorithm>
#include <cmath>

#include "cunet/errors.hpp"
#include "cunet/ops.hpp"

namespace cunet {

detail::BranchTrace& detail::branch_trace() {
    thread_local BranchTrace trace;
    return trace;
}

Tensor relu(const Tensor& input) {
    std::vector<double> out(input.data().begin(), input.data().end());
    for (double& v : out) v = v < 0.0 ? 0.0 : v;  // NaN passes through
    if (auto& trace = detail::branch_trace(); trace.enabled)
        for (double v : out) trace.fold(v > 0.0);
    return Tensor::make_result(input.shape(), std::move(out), {input}, [](detail::Node& self) {
        auto& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (x.value[i] > 0.0) x.grad[i] += self.grad[i];
    });
}

Tensor max_pool2(const Tensor& input) {
    const Shape& s = input.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0)
        throw ContractError("max_pool2: spatial extents must be even, got " + s.str());
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    std::vector<double> out(os.numel());
    std::vector<std::size_t> argmax(os.numel());
    const auto x = input.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
        const std::size_t base = plane * s.h * s.w;
        for (std::size_t i = 0; i < os.h; ++i) {
            for (std::size_t j = 0; j < os.w; ++j, ++o) {
                const std::size_t r0 = base + 2 * i * s.w + 2 * j;
                const std::size_t window[4] = {r0, r0 + 1, r0 + s.w, r0 + s.w + 1};
                std::size_t best = window[0];
                for (std::size_t k = 1; k < 4; ++k)
                    if (x[window[k]] > x[best] || std::isnan(x[window[k]])) best = window[k];
                out[o] = x[best];
                argmax[o] = best;
                if (auto& trace = detail::branch_trace(); trace.enabled) trace.fold(best - r0);
            }
        }
    }
    return Tensor::make_result(os, std::move(out), {input}, [argmax = std::move(argmax)](detail::Node& self) {
        auto& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[argmax[i]] += self.grad[i];
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
        throw ContractError("concat_channels: extents differ " + sa.str() + " vs " + sb.str());
    const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
    const std::size_t la = sa.c * sa.plane();
    const std::size_t lb = sb.c * sb.plane();
    std::vector<double> out(os.numel());
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::copy_n(a.data().begin() + n * la, la, out.begin() + n * (la + lb));
        std::copy_n(b.data().begin() + n * lb, lb, out.begin() + n * (la + lb) + la);
    }
    return Tensor::make_result(os, std::move(out), {a, b}, [la, lb, batch = sa.n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t n = 0; n < batch; ++n) {
            const double* g = self.grad.data() + n * (la + lb);
            if (pa.requires_grad)
                for (std::size_t i = 0; i < la; ++i) pa.grad[n * la + i] += g[i];
            if (pb.requires_grad)
                for (std::size_t i = 0; i < lb; ++i) pb.grad[n * lb + i] += g[la + i];
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ContractError("add: shapes differ " + a.shape().str() + " vs " + b.shape().str());
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v *= factor;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
        auto& x = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += factor * self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ContractError("mul: shapes differ " + a.shape().str() + " vs " + b.shape().str());
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
            if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor softmax_channels(const Tensor& input) {
    const Shape& s = input.shape();
    const std::size_t P = s.plane();
    std::vector<double> out(s.numel());
    const auto x = input.data();
    for (std::size_t n = 0; n < s.n; ++n) {
        const std::size_t base = n * s.c * P;
        for (std::size_t p = 0; p < P; ++p) {
            double m = x[base + p];
            for (std::size_t c = 1; c < s.c; ++c) m = std::max(m, x[base + c * P + p]);
            double z = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) {
                const double e = std::exp(x[base + c * P + p] - m);
                out[base + c * P + p] = e;
                z += e;
            }
            for (std::size_t c = 0; c < s.c; ++c) out[base + c * P + p] /= z;
        }
    }
    return Tensor::make_result(s, std::move(out), {input}, [s, P](detail::Node& self) {
        auto& x = *self.parents[0];
        const auto& y = self.value;
        for (std::size_t n = 0; n < s.n; ++n) {
            const std::size_t base = n * s.c * P;
            for (std::size_t p = 0; p < P; ++p) {
                double dot = 0.0;
                for (std::size_t c = 0; c < s.c; ++c) dot += self.grad[base + c * P + p] * y[base + c * P + p];
                for (std::size_t c = 0; c < s.c; ++c) {
                    const std::size_t i = base + c * P + p;
                    x.grad[i] += y[i] * (self.grad[i] - dot);
                }
            }
        }
    });
}

Tensor sum(const Tensor& input) {
    double total = 0.0;
    for (double v : input.data()) total += v;
    return Tensor::make_result(Shape{1, 1, 1, 1}, {total}, {input}, [](detail::Node& self) {
        auto& x = *self.parents[0];
        for (double& g : x.grad) g += self.grad[0];
    });
}

Tensor sum_squares(std::span<const Tensor> params) {
    double total = 0.0;
    for (const auto& t : params)
        for (double v : t.data()) total += v * v;
    std::vector<Tensor> parents(params.begin(), params.end());
    return Tensor::make_result(Shape{1, 1, 1, 1}, {total}, parents, [](detail::Node& self) {
        const double g = self.grad[0];
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += 2.0 * g * p->value[i];
        }
    });
}

}  // namespace cunet
