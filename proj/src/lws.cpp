#include "cunet/lws.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cunet/errors.hpp"
#include "cunet/log.hpp"
#include "cunet/ops.hpp"

namespace cunet {

namespace {

constexpr double kProbabilityFloor = 1e-12;

// Separable Chebyshev dilation of one plane by `radius`.
std::vector<std::uint8_t> dilate(const std::uint8_t* src, std::size_t h, std::size_t w, std::size_t radius) {
    std::vector<std::uint8_t> rows(h * w, 0), out(h * w, 0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!src[y * w + x]) continue;
            const std::size_t lo = x >= radius ? x - radius : 0;
            const std::size_t hi = std::min(w - 1, x + radius);
            std::fill(rows.begin() + y * w + lo, rows.begin() + y * w + hi + 1, 1);
        }
    }
    for (std::size_t y = 0; y < h; ++y) {
        const std::size_t lo = y >= radius ? y - radius : 0;
        const std::size_t hi = std::min(h - 1, y + radius);
        for (std::size_t x = 0; x < w; ++x) {
            if (!rows[y * w + x]) continue;
            for (std::size_t yy = lo; yy <= hi; ++yy) out[yy * w + x] = 1;
        }
    }
    return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
}

}  // namespace

std::size_t RegionPartition::count(int region) const {
    switch (region) {
        case 1: return count_set(s1);
        case 2: return count_set(s2);
        case 3: return count_set(s3);
        case 4: return count_set(s4);
        default: throw ContractError("region index must be 1..4");
    }
}

void SamplingConfig::validate() const {
    check_probability(p1, "p1");
    if (p2) check_probability(*p2, "p2");
    check_probability(p3, "p3");
    check_probability(p4, "p4");
    if (!(alpha >= 1.0)) throw ConfigError("alpha must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
}

Mask extract_contour_band(const Mask& tumor, std::size_t width) {
    Mask band(tumor.batch(), tumor.height(), tumor.width(), 0);
    if (width == 0) return band;
    const std::size_t radius = (width + 1) / 2;
    const std::size_t h = tumor.height(), w = tumor.width(), P = tumor.plane();
    std::vector<std::uint8_t> outside(P);
    for (std::size_t n = 0; n < tumor.batch(); ++n) {
        const std::uint8_t* in = tumor.values().data() + n * P;
        for (std::size_t i = 0; i < P; ++i) outside[i] = in[i] ? 0 : 1;
        const auto near_tumor = dilate(in, h, w, radius);
        const auto near_outside = dilate(outside.data(), h, w, radius);
        for (std::size_t i = 0; i < P; ++i)
            band[n * P + i] = in[i] ? near_outside[i] : near_tumor[i];
    }
    return band;
}

RegionPartition partition_regions(const LabelMap& labels, const Mask& brain, std::size_t contour_width) {
    if (!labels.same_extents(brain)) throw ContractError("partition_regions: label and brain extents differ");
    Mask tumor(labels.batch(), labels.height(), labels.width(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) continue;
        if (!brain[i]) throw InputError("partition_regions: nonzero label outside the brain mask");
        tumor[i] = 1;
    }
    const Mask band = extract_contour_band(tumor, contour_width);
    RegionPartition r;
    const std::size_t n = labels.batch(), h = labels.height(), w = labels.width();
    r.s1 = Mask(n, h, w, 0);
    r.s2 = Mask(n, h, w, 0);
    r.s3 = Mask(n, h, w, 0);
    r.s4 = Mask(n, h, w, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!brain[i]) r.s1[i] = 1;
        else if (band[i]) r.s4[i] = 1;
        else if (tumor[i]) r.s3[i] = 1;
        else r.s2[i] = 1;
    }
    return r;
}

double compute_p2(double beta, double p3, std::size_t n_s3, std::size_t n_s2) {
    if (n_s2 == 0) {
        log_info("compute_p2: no normal-brain pixels in batch, p2 = 0");
        return 0.0;
    }
    return std::min(1.0, beta * p3 * static_cast<double>(n_s3) / static_cast<double>(n_s2));
}

Coverage coverage_check(double beta, double p2, std::size_t epochs) {
    if (epochs < 1) throw ContractError("coverage_check: epochs must be >= 1");
    const double expected = beta * p2 * static_cast<double>(epochs);
    if (expected >= 1.0) return Coverage::kPass;
    std::ostringstream ss;
    ss << "coverage: beta*p2*epochs = " << expected << " < 1; some normal-brain pixels may never be sampled";
    log_warn(ss.str());
    return Coverage::kWarn;
}

SamplingConfig resolve_sampling(const SamplingConfig& cfg, const RegionPartition& partition) {
    SamplingConfig out = cfg;
    if (!out.p2) out.p2 = compute_p2(cfg.beta, cfg.p3, partition.count(3), partition.count(2));
    return out;
}

WeightMap sample_matrix(const RegionPartition& partition, const SamplingConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    if (!cfg.p2) throw ContractError("sample_matrix: p2 must be resolved first");
    const Mask& s1 = partition.s1;
    WeightMap w(s1.batch(), s1.height(), s1.width(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double u = uniform01(rng);
        if (s1[i]) w[i] = u < cfg.p1 ? 1.0 : 0.0;
        else if (partition.s2[i]) w[i] = u < *cfg.p2 ? 1.0 : 0.0;
        else if (partition.s3[i]) w[i] = u < cfg.p3 ? 1.0 : 0.0;
        else if (partition.s4[i]) w[i] = u < cfg.p4 ? cfg.alpha : 0.0;
    }
    return w;
}

Tensor weighted_cross_entropy(const Tensor& y, const Tensor& labels, const WeightMap& w) {
    const Shape& s = y.shape();
    if (labels.shape() != s)
        throw ContractError("weighted_cross_entropy: label shape " + labels.shape().str() + " != " + s.str());
    if (!w.same_extents(s.n, s.h, s.w)) throw ContractError("weighted_cross_entropy: weight extents differ");
    const std::size_t P = s.plane();
    double weight_total = 0.0;
    for (double v : w.values()) weight_total += v;
    if (!(weight_total > 0.0)) throw DegenerateBatchError("weighted_cross_entropy: sample matrix sums to zero");

    const auto yv = y.data();
    const auto lv = labels.data();
    double acc = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < P; ++p) {
            const double wp = w[n * P + p];
            if (wp == 0.0) continue;
            double ce = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) {
                const std::size_t i = (n * s.c + c) * P + p;
                if (lv[i] == 0.0) continue;
                ce -= lv[i] * std::log(std::max(yv[i], kProbabilityFloor));
                if (auto& trace = detail::branch_trace(); trace.enabled) trace.fold(yv[i] > kProbabilityFloor);
            }
            acc += ce * wp;
        }
    }
    return Tensor::make_result(Shape{1, 1, 1, 1}, {acc / weight_total}, {y, labels},
                               [s, P, w, weight_total](detail::Node& self) {
                                   auto& yn = *self.parents[0];
                                   if (!yn.requires_grad) return;
                                   const auto& lv = self.parents[1]->value;
                                   const double g = self.grad[0] / weight_total;
                                   for (std::size_t n = 0; n < s.n; ++n) {
                                       for (std::size_t p = 0; p < P; ++p) {
                                           const double wp = w[n * P + p];
                                           if (wp == 0.0) continue;
                                           for (std::size_t c = 0; c < s.c; ++c) {
                                               const std::size_t i = (n * s.c + c) * P + p;
                                               if (lv[i] != 0.0 && yn.value[i] > kProbabilityFloor)
                                                   yn.grad[i] -= g * wp * lv[i] / yn.value[i];
                                           }
                                       }
                                   }
                               });
}

Tensor total_loss(const Tensor& l1, const Tensor& l2, std::span<const Tensor> aux, double omega, double lambda,
                  const ParamSet& params) {
    if (omega < 0.0 || lambda < 0.0) throw ContractError("total_loss: omega and lambda must be nonnegative");
    Tensor total = add(l1, l2);
    if (!aux.empty() && omega != 0.0) {
        Tensor aux_sum = aux[0];
        for (std::size_t i = 1; i < aux.size(); ++i) aux_sum = add(aux_sum, aux[i]);
        total = add(total, scale(aux_sum, omega));
    }
    if (lambda != 0.0) {
        const auto tensors = params.tensors();
        total = add(total, scale(sum_squares(tensors), lambda));
    }
    return total;
}

StageSampling stage_sampling_configs(double alpha1, double alpha2, double beta) {
    StageSampling s;
    s.unet1 = SamplingConfig{0.0, std::nullopt, 1.0, 1.0, alpha1, beta};
    s.unet2 = SamplingConfig{0.0, 0.0, 1.0, 1.0, alpha2, beta};
    return s;
}

StageSampling uniform_sampling_configs() {
    StageSampling s;
    s.unet1 = SamplingConfig{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    s.unet2 = s.unet1;
    return s;
}

Tensor one_hot_whole_tumor(const LabelMap& labels) {
    const std::size_t P = labels.plane();
    Tensor t(Shape{labels.batch(), 2, labels.height(), labels.width()});
    auto d = t.data();
    for (std::size_t n = 0; n < labels.batch(); ++n)
        for (std::size_t p = 0; p < P; ++p) d[(n * 2 + (labels[n * P + p] != 0 ? 1 : 0)) * P + p] = 1.0;
    return t;
}

Tensor one_hot_substructures(const LabelMap& labels) {
    const std::size_t P = labels.plane();
    Tensor t(Shape{labels.batch(), 4, labels.height(), labels.width()});
    auto d = t.data();
    for (std::size_t n = 0; n < labels.batch(); ++n) {
        for (std::size_t p = 0; p < P; ++p) {
            std::size_t c = 0;
            switch (labels[n * P + p]) {
                case 0: c = 0; break;
                case 1: c = 1; break;
                case 2: c = 2; break;
                case 4: c = 3; break;
                default: throw InputError("label outside {0,1,2,4}: " + std::to_string(labels[n * P + p]));
            }
            d[(n * 4 + c) * P + p] = 1.0;
        }
    }
    return t;
}

}  // namespace cunet
