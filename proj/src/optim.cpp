#include "cunet/optim.hpp"

#include <algorithm>

#include "cunet/errors.hpp"

namespace cunet {

void ParamSet::add(std::string name, Tensor t) {
    if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
    t.set_requires_grad(true);
    std::vector<double> momentum(t.numel(), 0.0);
    entries_.push_back(Entry{std::move(name), std::move(t), std::move(momentum)});
}

std::size_t ParamSet::scalar_count() const noexcept {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.value.numel();
    return total;
}

bool ParamSet::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return e;
    throw ContractError("unknown parameter '" + name + "'");
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw ContractError("unknown parameter '" + name + "'");
}

std::vector<Tensor> ParamSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
}

void ParamSet::zero_grad() {
    for (auto& e : entries_) e.value.zero_grad();
}

void ParamSet::reset_momentum() {
    for (auto& e : entries_) std::fill(e.momentum.begin(), e.momentum.end(), 0.0);
}

void ParamSet::assign_from(const ParamSet& other) {
    if (other.size() != size()) throw ContractError("parameter set sizes differ");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& dst = entries_[i];
        const auto& src = other.entries_[i];
        if (dst.name != src.name || dst.value.shape() != src.value.shape())
            throw ContractError("parameter mismatch: '" + dst.name + "' " + dst.value.shape().str() + " vs '" +
                                src.name + "' " + src.value.shape().str());
        std::copy(src.value.data().begin(), src.value.data().end(), dst.value.data().begin());
        dst.momentum = src.momentum;
    }
}

ParamSet ParamSet::clone() const {
    ParamSet out;
    for (const auto& e : entries_) {
        out.add(e.name, e.value.clone());
        out.entries_.back().momentum = e.momentum;
    }
    return out;
}

void sgd_momentum_step(ParamSet& params, double lr, double momentum, double weight_decay) {
    for (auto& e : params.entries()) {
        if (!e.value.has_grad()) throw ContractError("sgd step: parameter '" + e.name + "' has no gradient");
        auto theta = e.value.data();
        const auto grad = e.value.grad();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            double& v = e.momentum[i];
            v = momentum * v + grad[i] + weight_decay * theta[i];
            theta[i] -= lr * v;
        }
    }
}

}  // namespace cunet
