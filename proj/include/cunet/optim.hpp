#pragma once

#include <string>
#include <vector>

#include "cunet/tensor.hpp"

namespace cunet {

/// Named trainable tensors plus one momentum buffer per parameter.
/// Insertion order is preserved and defines checkpoint layout.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
        std::vector<double> momentum;
    };

    /// Registers `t` (marked requires_grad) under a unique name.
    void add(std::string name, Tensor t);

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const noexcept;

    Entry& at(const std::string& name);
    const Entry& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::vector<Tensor> tensors() const;

    void zero_grad();
    void reset_momentum();

    /// Value and momentum copy from another set with identical names and shapes.
    void assign_from(const ParamSet& other);
    /// Deep copy with fresh tensors (no shared storage).
    ParamSet clone() const;

private:
    std::vector<Entry> entries_;
};

/// Classical momentum with coupled L2 decay:
///   v ← momentum·v + grad + weight_decay·θ;  θ ← θ − lr·v
/// Every parameter must hold a gradient.
void sgd_momentum_step(ParamSet& params, double lr, double momentum, double weight_decay);

}  // namespace cunet
