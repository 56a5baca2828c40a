#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cunet/errors.hpp"

namespace cunet {

/// Batch of 2-D planes (n × h × w), row-major. `Tag` keeps masks, label maps
/// and weight maps from being mixed up.
template <class T, class Tag>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    Grid(std::size_t n, std::size_t h, std::size_t w, T fill = T{}) : n_(n), h_(h), w_(w), v_(n * h * w, fill) {}
    Grid(std::size_t n, std::size_t h, std::size_t w, std::vector<T> values)
        : n_(n), h_(h), w_(w), v_(std::move(values)) {
        if (v_.size() != n * h * w) throw ContractError("grid value count does not match extents");
    }

    std::size_t batch() const noexcept { return n_; }
    std::size_t height() const noexcept { return h_; }
    std::size_t width() const noexcept { return w_; }
    std::size_t plane() const noexcept { return h_ * w_; }
    std::size_t size() const noexcept { return v_.size(); }

    T& operator()(std::size_t n, std::size_t y, std::size_t x) { return v_[(n * h_ + y) * w_ + x]; }
    T operator()(std::size_t n, std::size_t y, std::size_t x) const { return v_[(n * h_ + y) * w_ + x]; }
    T& operator[](std::size_t i) { return v_[i]; }
    T operator[](std::size_t i) const { return v_[i]; }

    std::vector<T>& values() noexcept { return v_; }
    const std::vector<T>& values() const noexcept { return v_; }

    bool same_extents(std::size_t n, std::size_t h, std::size_t w) const noexcept {
        return n_ == n && h_ == h && w_ == w;
    }
    template <class U, class OtherTag>
    bool same_extents(const Grid<U, OtherTag>& o) const noexcept {
        return same_extents(o.batch(), o.height(), o.width());
    }

    /// Copy of plane `n` as a batch-of-one grid.
    Grid slice(std::size_t n) const {
        Grid out(1, h_, w_);
        std::copy_n(v_.begin() + n * plane(), plane(), out.v_.begin());
        return out;
    }

    bool operator==(const Grid&) const = default;

private:
    std::size_t n_ = 0, h_ = 0, w_ = 0;
    std::vector<T> v_;
};

struct MaskTag;
struct LabelTag;
struct WeightTag;

/// Binary mask; entries are 0 or 1.
using Mask = Grid<std::uint8_t, MaskTag>;
/// Label map over {0, 1, 2, 4}.
using LabelMap = Grid<std::uint8_t, LabelTag>;
/// Per-pixel loss weights.
using WeightMap = Grid<double, WeightTag>;

inline std::size_t count_set(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(), [](auto v) { return v != 0; }));
}

/// Stacks batch-of-one grids along the batch axis.
template <class G>
G stack(const std::vector<G>& planes) {
    if (planes.empty()) return G{};
    G out(planes.size(), planes[0].height(), planes[0].width());
    for (std::size_t i = 0; i < planes.size(); ++i) {
        if (!planes[i].same_extents(1, out.height(), out.width())) throw ContractError("stack: extents differ");
        std::copy(planes[i].values().begin(), planes[i].values().end(), out.values().begin() + i * out.plane());
    }
    return out;
}

}  // namespace cunet
