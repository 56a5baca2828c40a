#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cunet {

/// Extents of a dense NCHW tensor.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    constexpr std::size_t numel() const noexcept { return n * c * h * w; }
    constexpr std::size_t plane() const noexcept { return h * w; }
    constexpr bool operator==(const Shape&) const = default;

    std::string str() const;
};

class Tensor;

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until the node participates in a backward pass
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    void ensure_grad();
};

}  // namespace detail

/// Dense 4-D float64 tensor with an optional gradient buffer.
///
/// Copies share storage (handle semantics); use clone() for an independent
/// copy. Operations on tensors that require gradients record a backward
/// closure so that backward() on a scalar result can populate grad() on every
/// participating tensor.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t numel() const { return shape().numel(); }

    std::span<double> data();
    std::span<const double> data() const;
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    /// Empty span when no gradient has been accumulated.
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();

    /// Independent leaf with copied values and no history.
    Tensor clone() const;
    /// Leaf sharing no history; values copied.
    Tensor detach() const { return clone(); }

    /// Reverse-mode pass from a scalar. Non-leaf gradients along the graph are
    /// reset first; leaf gradients accumulate until zero_grad().
    void backward() const;

    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

    /// Builds an op result. When any parent requires grad the result records
    /// `fn`, which reads `self.grad` and accumulates into parent gradients.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::initializer_list<Tensor> parents, detail::BackwardFn fn);
    static Tensor make_result(Shape shape, std::vector<double> values,
                              const std::vector<Tensor>& parents, detail::BackwardFn fn);

    detail::Node& node() const;

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled() noexcept;

/// Throws NumericError naming `where` if any value is NaN or Inf.
void check_finite(const Tensor& t, const std::string& where);

}  // namespace cunet
