#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>

#include "cunet/grid.hpp"
#include "cunet/optim.hpp"
#include "cunet/tensor.hpp"

namespace cunet {

/// Disjoint cover of every pixel: s1 black background (outside the brain),
/// s2 normal brain, s3 tumor interior, s4 tumor contour band.
struct RegionPartition {
    Mask s1, s2, s3, s4;

    std::size_t count(int region) const;
};

/// Region sampling probabilities. `p2` unset means "derive from the
/// positive/negative balance rule" per batch via compute_p2.
struct SamplingConfig {
    double p1 = 0.0;
    std::optional<double> p2;
    double p3 = 1.0;
    double p4 = 1.0;
    double alpha = 1.0;
    double beta = 1.5;

    void validate() const;
};

/// Chebyshev-ball band straddling the tumor boundary: a pixel belongs to the
/// band when some pixel of the opposite class lies within Chebyshev distance
/// ceil(width/2). Width 0 yields an empty band.
Mask extract_contour_band(const Mask& tumor, std::size_t width);

/// Throws InputError if a nonzero label lies outside the brain.
RegionPartition partition_regions(const LabelMap& labels, const Mask& brain, std::size_t contour_width);

/// p2 = min(1, β·p3·n_s3 / n_s2); returns 0 when n_s2 = 0.
double compute_p2(double beta, double p3, std::size_t n_s3, std::size_t n_s2);

enum class Coverage { kPass, kWarn };

/// Warns when β·p2·epochs < 1, i.e. normal-brain pixels are not expected to
/// reach the loss at least once over training.
Coverage coverage_check(double beta, double p2, std::size_t epochs);

/// Returns a copy of `cfg` with p2 filled in from the partition counts when unset.
SamplingConfig resolve_sampling(const SamplingConfig& cfg, const RegionPartition& partition);

/// Per-pixel Bernoulli draws with region probabilities; selected pixels
/// weigh 1 in s1..s3 and alpha in s4. `cfg.p2` must be resolved.
WeightMap sample_matrix(const RegionPartition& partition, const SamplingConfig& cfg, std::mt19937_64& rng);

/// Σ_pixels W·(−Σ_c L·log max(Y, 1e-12)) / Σ_pixels W for probabilities `y`
/// and one-hot `labels` (both b×c×l×w). Pixels with W = 0 are skipped
/// entirely. Throws DegenerateBatchError when Σ W = 0.
Tensor weighted_cross_entropy(const Tensor& y, const Tensor& labels, const WeightMap& w);

/// l1 + l2 + ω·Σ aux + λ·Σ θ². Pass lambda = 0 when the optimizer already
/// applies weight decay.
Tensor total_loss(const Tensor& l1, const Tensor& l2, std::span<const Tensor> aux, double omega, double lambda,
                  const ParamSet& params);

/// Sampling for the whole-tumor stage and the substructure stage.
struct StageSampling {
    SamplingConfig unet1;
    SamplingConfig unet2;
};

StageSampling stage_sampling_configs(double alpha1 = 2.0, double alpha2 = 1.0, double beta = 1.5);

/// Every region sampled with probability 1 and alpha = 1 (plain mean cross-entropy).
StageSampling uniform_sampling_configs();

/// One-hot targets. Whole tumor: channel 1 where label ≠ 0. Substructures:
/// channels background / NCR-NET (1) / ED (2) / ET (4).
Tensor one_hot_whole_tumor(const LabelMap& labels);
Tensor one_hot_substructures(const LabelMap& labels);

}  // namespace cunet
