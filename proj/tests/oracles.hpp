#pragma once

// Brute-force reference implementations. None of these call into the library's
// kernels; they exist only to cross-check them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <span>
#include <vector>

#include "cunet/grid.hpp"
#include "cunet/tensor.hpp"

namespace oracle {

using cunet::LabelMap;
using cunet::Mask;
using cunet::Shape;
using cunet::Tensor;

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Tensor t(s);
    for (double& v : t.data()) v = d(rng);
    return t;
}

/// Direct six-loop cross-correlation with zero padding.
inline std::vector<double> conv2d(const Tensor& x, const Tensor& k, const std::vector<double>& bias,
                                  std::size_t stride, std::size_t pad) {
    const Shape xs = x.shape(), ks = k.shape();
    const std::size_t oh = (xs.h + 2 * pad - ks.h) / stride + 1;
    const std::size_t ow = (xs.w + 2 * pad - ks.w) / stride + 1;
    std::vector<double> out(xs.n * ks.n * oh * ow, 0.0);
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t co = 0; co < ks.n; ++co)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = bias.empty() ? 0.0 : bias[co];
                    for (std::size_t ci = 0; ci < xs.c; ++ci)
                        for (std::size_t a = 0; a < ks.h; ++a)
                            for (std::size_t b = 0; b < ks.w; ++b) {
                                const long y = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                                const long z = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                                if (y < 0 || z < 0 || y >= static_cast<long>(xs.h) || z >= static_cast<long>(xs.w))
                                    continue;
                                acc += x.at(n, ci, y, z) * k.at(co, ci, a, b);
                            }
                    out[((n * ks.n + co) * oh + i) * ow + j] = acc;
                }
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Pixels with some pixel of the opposite class at Chebyshev distance ≤ radius,
/// found by scanning the (2·radius+1)² window around each pixel.
inline Mask chebyshev_band(const Mask& tumor, std::size_t radius) {
    Mask band(tumor.batch(), tumor.height(), tumor.width(), 0);
    if (radius == 0) return band;
    const long H = static_cast<long>(tumor.height()), W = static_cast<long>(tumor.width());
    const long r = static_cast<long>(radius);
    for (std::size_t n = 0; n < tumor.batch(); ++n)
        for (long y = 0; y < H; ++y)
            for (long x = 0; x < W; ++x) {
                bool hit = false;
                for (long v = std::max(0L, y - r); v <= std::min(H - 1, y + r) && !hit; ++v)
                    for (long u = std::max(0L, x - r); u <= std::min(W - 1, x + r) && !hit; ++u)
                        hit = tumor(n, v, u) != tumor(n, y, x);
                band(n, y, x) = hit;
            }
    return band;
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts count(const Mask& p, const Mask& t) {
    Counts c;
    for (std::size_t i = 0; i < p.values().size(); ++i) {
        const bool a = p[i] != 0, b = t[i] != 0;
        if (a && b) ++c.tp;
        else if (a) ++c.fp;
        else if (b) ++c.fn;
        else ++c.tn;
    }
    return c;
}

/// Mean over pixels of −log p[true class].
inline double mean_cross_entropy(const Tensor& probs, const LabelMap& classes) {
    const Shape s = probs.shape();
    double total = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t y = 0; y < s.h; ++y)
            for (std::size_t x = 0; x < s.w; ++x) total -= std::log(probs.at(n, classes(n, y, x), y, x));
    return total / static_cast<double>(s.n * s.h * s.w);
}

/// Per-pixel fusion rule.
inline std::uint8_t fuse_pixel(const Tensor& b1, const Tensor& b2, bool nonbrain, std::size_t n, std::size_t y,
                               std::size_t x) {
    if (nonbrain) return 0;
    if (!(b1.at(n, 1, y, x) > b1.at(n, 0, y, x))) return 0;
    const double ncr = b2.at(n, 1, y, x), ed = b2.at(n, 2, y, x), et = b2.at(n, 3, y, x);
    if (ncr >= ed && ncr >= et) return 1;
    if (ed >= et) return 2;
    return 4;
}

}  // namespace oracle
