#include <Eigen/Core>
#include <numeric>

#include "cunet/errors.hpp"
#include "cunet/ops.hpp"

namespace cunet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Geometry of a strided, zero-padded sliding window over one image.
struct Window {
    std::size_t channels, height, width;
    std::size_t k, stride, pad;
    std::size_t out_h, out_w;

    std::size_t rows() const { return channels * k * k; }
    std::size_t cols() const { return out_h * out_w; }
};

// First and one-past-last output index whose tap (o·stride − pad + offset) lands inside [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t offset, const Window& g, std::size_t extent,
                                                std::size_t out_extent) {
    std::ptrdiff_t lo = 0;
    const auto pad = static_cast<std::ptrdiff_t>(g.pad);
    const auto off = static_cast<std::ptrdiff_t>(offset);
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    if (off < pad) lo = (pad - off + s - 1) / s;
    // largest o with o·s − pad + off ≤ extent − 1
    std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(extent) - 1 + pad - off);
    hi = hi < 0 ? 0 : hi / s + 1;
    if (hi > static_cast<std::ptrdiff_t>(out_extent)) hi = static_cast<std::ptrdiff_t>(out_extent);
    if (lo > hi) lo = hi;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void im2col(const double* image, const Window& g, double* col) {
    const std::size_t P = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = image + c * g.height * g.width;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
            const auto [oh_lo, oh_hi] = valid_range(kh, g, g.height, g.out_h);
            for (std::size_t kw = 0; kw < g.k; ++kw) {
                double* row = col + ((c * g.k + kh) * g.k + kw) * P;
                const auto [ow_lo, ow_hi] = valid_range(kw, g, g.width, g.out_w);
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    double* dst = row + oh * g.out_w;
                    if (oh < oh_lo || oh >= oh_hi) {
                        std::fill(dst, dst + g.out_w, 0.0);
                        continue;
                    }
                    const double* src = plane + (oh * g.stride + kh - g.pad) * g.width;
                    std::fill(dst, dst + ow_lo, 0.0);
                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow] = src[ow * g.stride + kw - g.pad];
                    std::fill(dst + ow_hi, dst + g.out_w, 0.0);
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const double* col, const Window& g, double* image) {
    const std::size_t P = g.cols();
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = image + c * g.height * g.width;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
            const auto [oh_lo, oh_hi] = valid_range(kh, g, g.height, g.out_h);
            for (std::size_t kw = 0; kw < g.k; ++kw) {
                const double* row = col + ((c * g.k + kh) * g.k + kw) * P;
                const auto [ow_lo, ow_hi] = valid_range(kw, g, g.width, g.out_w);
                for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                    const double* src = row + oh * g.out_w;
                    double* dst = plane + (oh * g.stride + kh - g.pad) * g.width;
                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow * g.stride + kw - g.pad] += src[ow];
                }
            }
        }
    }
}

bool is_pointwise(const Window& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

// dst (+)= a·b. Blocked GEMM packs its operands, so only the vector and tiny
// shapes (coefficient-wise kernels that peel by address) run on aligned copies.
template <class A, class B>
void product(MatMap dst, const A& a, const B& b, bool accumulate) {
    const bool packed = a.rows() > 1 && b.cols() > 1 && a.rows() + a.cols() + b.cols() >= 20;
    if (packed) {
        if (accumulate)
            dst.noalias() += a * b;
        else
            dst.noalias() = a * b;
        return;
    }
    const RowMat lhs = a;
    const RowMat rhs = b;
    const RowMat r = lhs * rhs;
    if (accumulate)
        dst += r;
    else
        dst = r;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    const Shape& in = input.shape();
    const Shape& ks = kernel.shape();
    if (stride == 0) throw ContractError("conv2d: stride must be positive");
    if (ks.h != ks.w) throw ContractError("conv2d: kernel must be square, got " + ks.str());
    if (ks.c != in.c)
        throw ContractError("conv2d: kernel input channels " + std::to_string(ks.c) +
                            " do not match input channels " + std::to_string(in.c));
    if (in.h + 2 * padding < ks.h || in.w + 2 * padding < ks.w)
        throw ContractError("conv2d: kernel " + ks.str() + " larger than padded input " + in.str());
    if (bias.defined() && bias.numel() != ks.n)
        throw ContractError("conv2d: bias length " + std::to_string(bias.numel()) + " != output channels " +
                            std::to_string(ks.n));

    const Window g{in.c, in.h, in.w, ks.h, stride, padding, (in.h + 2 * padding - ks.h) / stride + 1,
                   (in.w + 2 * padding - ks.w) / stride + 1};
    const Shape out_shape{in.n, ks.n, g.out_h, g.out_w};
    const std::size_t Q = g.rows();
    const std::size_t P = g.cols();
    const std::size_t Co = ks.n;

    std::vector<double> out(out_shape.numel());
    std::vector<double> col(is_pointwise(g) ? 0 : Q * P);
    ConstMatMap W(kernel.data().data(), Co, Q);
    for (std::size_t n = 0; n < in.n; ++n) {
        const double* x = input.data().data() + n * in.c * in.h * in.w;
        if (!is_pointwise(g)) im2col(x, g, col.data());
        ConstMatMap C(is_pointwise(g) ? x : col.data(), Q, P);
        MatMap Y(out.data() + n * Co * P, Co, P);
        product(Y, W, C, false);
        if (bias.defined())
            for (std::size_t co = 0; co < Co; ++co) Y.row(co).array() += bias.data()[co];
    }

    std::vector<Tensor> parents{input, kernel};
    if (bias.defined()) parents.push_back(bias);
    return Tensor::make_result(out_shape, std::move(out), parents, [g, in, Co](detail::Node& self) {
        const std::size_t Q = g.rows();
        const std::size_t P = g.cols();
        auto& x_node = *self.parents[0];
        auto& k_node = *self.parents[1];
        detail::Node* b_node = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        std::vector<double> col(is_pointwise(g) ? 0 : Q * P);
        std::vector<double> dcol(Q * P);
        ConstMatMap W(k_node.value.data(), Co, Q);
        for (std::size_t n = 0; n < in.n; ++n) {
            ConstMatMap dY(self.grad.data() + n * Co * P, Co, P);
            const double* x = x_node.value.data() + n * in.c * in.h * in.w;
            if (k_node.requires_grad) {
                if (!is_pointwise(g)) im2col(x, g, col.data());
                ConstMatMap C(is_pointwise(g) ? x : col.data(), Q, P);
                product(MatMap(k_node.grad.data(), Co, Q), dY, C.transpose(), true);
            }
            if (b_node && b_node->requires_grad)
                for (std::size_t co = 0; co < Co; ++co) {
                    const double* row = self.grad.data() + (n * Co + co) * P;
                    b_node->grad[co] += std::accumulate(row, row + P, 0.0);
                }
            if (x_node.requires_grad) {
                double* dx = x_node.grad.data() + n * in.c * in.h * in.w;
                if (is_pointwise(g)) {
                    product(MatMap(dx, Q, P), W.transpose(), dY, true);
                } else {
                    product(MatMap(dcol.data(), Q, P), W.transpose(), dY, false);
                    col2im(dcol.data(), g, dx);
                }
            }
        }
    });
}

std::size_t conv_transpose_padding(std::size_t kernel_size, std::size_t stride) {
    if (stride == 0) throw ContractError("conv_transpose2d: stride must be positive");
    if (kernel_size < stride || (kernel_size - stride) % 2 != 0)
        throw ContractError("conv_transpose2d: kernel size " + std::to_string(kernel_size) +
                            " incompatible with stride " + std::to_string(stride) +
                            " (need k >= stride and k - stride even)");
    return (kernel_size - stride) / 2;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride) {
    const Shape& in = input.shape();
    const Shape& ks = kernel.shape();
    if (ks.h != ks.w) throw ContractError("conv_transpose2d: kernel must be square, got " + ks.str());
    if (ks.n != in.c)
        throw ContractError("conv_transpose2d: kernel input channels " + std::to_string(ks.n) +
                            " do not match input channels " + std::to_string(in.c));
    const std::size_t pad = conv_transpose_padding(ks.h, stride);
    const std::size_t Ci = in.c;
    const std::size_t Co = ks.c;
    // The window runs over the output image and lands on the input grid.
    const Window g{Co, in.h * stride, in.w * stride, ks.h, stride, pad, in.h, in.w};
    const Shape out_shape{in.n, Co, g.height, g.width};
    const std::size_t Q = g.rows();
    const std::size_t P = g.cols();

    std::vector<double> out(out_shape.numel(), 0.0);
    std::vector<double> col(Q * P);
    ConstMatMap W(kernel.data().data(), Ci, Q);
    for (std::size_t n = 0; n < in.n; ++n) {
        ConstMatMap X(input.data().data() + n * Ci * P, Ci, P);
        product(MatMap(col.data(), Q, P), W.transpose(), X, false);
        col2im(col.data(), g, out.data() + n * Co * g.height * g.width);
    }

    return Tensor::make_result(out_shape, std::move(out), {input, kernel}, [g, Ci](detail::Node& self) {
        const std::size_t Q = g.rows();
        const std::size_t P = g.cols();
        const std::size_t out_plane = g.channels * g.height * g.width;
        auto& x_node = *self.parents[0];
        auto& k_node = *self.parents[1];
        const std::size_t batch = x_node.shape.n;
        std::vector<double> dcol(Q * P);
        ConstMatMap W(k_node.value.data(), Ci, Q);
        for (std::size_t n = 0; n < batch; ++n) {
            im2col(self.grad.data() + n * out_plane, g, dcol.data());
            ConstMatMap dC(dcol.data(), Q, P);
            if (x_node.requires_grad) {
                product(MatMap(x_node.grad.data() + n * Ci * P, Ci, P), W, dC, true);
            }
            if (k_node.requires_grad) {
                ConstMatMap X(x_node.value.data() + n * Ci * P, Ci, P);
                product(MatMap(k_node.grad.data(), Ci, Q), X, dC.transpose(), true);
            }
        }
    });
}

}  // namespace cunet
