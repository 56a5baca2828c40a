#include "cunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "cunet/errors.hpp"

namespace cunet {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
}

void detail::Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    node_->shape = shape;
    node_->value.assign(shape.numel(), fill);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
    if (values.size() != shape.numel())
        throw ContractError("tensor value count " + std::to_string(values.size()) +
                            " does not match shape " + shape.str());
    node_->shape = shape;
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(Shape{1, 1, 1, 1}, v, requires_grad);
}

detail::Node& Tensor::node() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }
std::span<double> Tensor::data() { return node().value; }
std::span<const double> Tensor::data() const { return node().value; }

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const Shape& s = shape();
    return node_->value[((n * s.c + c) * s.h + h) * s.w + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape& s = shape();
    return node_->value[((n * s.c + c) * s.h + h) * s.w + w];
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape().str());
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
void Tensor::set_requires_grad(bool on) { node().requires_grad = on; }
bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<double> Tensor::grad() { return node().grad; }
std::span<const double> Tensor::grad() const { return node().grad; }

void Tensor::zero_grad() {
    auto& g = node().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(shape(), node().value, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::initializer_list<Tensor> parents, detail::BackwardFn fn) {
    return make_result(shape, std::move(values), std::vector<Tensor>(parents), std::move(fn));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const std::vector<Tensor>& parents, detail::BackwardFn fn) {
    Tensor out(shape, std::move(values), false);
    if (!g_grad_enabled) return out;
    bool track = false;
    for (const auto& p : parents) track = track || p.requires_grad();
    if (!track) return out;
    auto& node = *out.node_;
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (const auto& p : parents) node.parents.push_back(p.node_);
    node.backward = std::move(fn);
    return out;
}

void Tensor::backward() const {
    auto& root = node();
    if (root.shape.numel() != 1)
        throw ContractError("backward() requires a scalar loss, got " + root.shape.str());
    if (!root.requires_grad) throw ContractError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a reverse topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::Node* n : order) {
        if (n->backward) n->grad.assign(n->value.size(), 0.0);
        else n->ensure_grad();
    }
    root.grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->backward) continue;
        for (auto& p : n->parents)
            if (p->requires_grad) p->ensure_grad();
        n->backward(*n);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() noexcept { return g_grad_enabled; }

void check_finite(const Tensor& t, const std::string& where) {
    for (double v : t.data())
        if (!std::isfinite(v)) throw NumericError("non-finite value in " + where);
}

}  // namespace cunet
