#pragma once

#include <cstdint>
#include <span>

#include "cunet/tensor.hpp"

namespace cunet {

namespace detail {
/// While enabled, piecewise ops fold every branch they take (ReLU sign, pool
/// argmax, probability floor) into `hash`. Equal hashes at two inputs mean the
/// same smooth piece was evaluated.
struct BranchTrace {
    bool enabled = false;
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    void fold(std::uint64_t v) { hash = (hash ^ v) * 0x100000001b3ULL; }
};
BranchTrace& branch_trace();
}  // namespace detail

/// Cross-correlation of `input` (n×ci×h×w) with `kernel` (co×ci×k×k) plus a
/// per-output-channel bias (co×1×1×1, or undefined for none).
/// Output extents are floor((h + 2·padding − k)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Transposed convolution with `kernel` laid out ci×co×k×k. Output extents are
/// exactly stride × input extents, which fixes padding = (k − stride)/2;
/// k must be ≥ stride with k − stride even. The op is the linear adjoint of
/// conv2d(·, kernel, none, stride, padding).
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride);

/// Padding that conv_transpose2d uses for a given kernel size and stride.
std::size_t conv_transpose_padding(std::size_t kernel_size, std::size_t stride);

Tensor relu(const Tensor& input);

/// 2×2 max pool with stride 2. Gradient goes to the first maximum in
/// row-major window order.
Tensor max_pool2(const Tensor& input);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Elementwise product of equal-shape tensors.
Tensor mul(const Tensor& a, const Tensor& b);

/// Softmax across the channel axis at every (n, h, w).
Tensor softmax_channels(const Tensor& input);

/// Sum of all elements, as a scalar tensor.
Tensor sum(const Tensor& input);

/// Σ θ² over every element of every tensor in `params`.
Tensor sum_squares(std::span<const Tensor> params);

}  // namespace cunet
