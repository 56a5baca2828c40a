#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cunet/config.hpp"
#include "cunet/data.hpp"
#include "cunet/lws.hpp"
#include "cunet/metrics.hpp"
#include "cunet/model.hpp"

namespace cunet {

/// max(floor, initial · decay^⌊epoch/period⌋)
double schedule(std::size_t epoch, double initial, double decay, std::size_t period, double floor);

enum class SamplingMode {
    kLws,      // stage configs: p1 = 0, U-Net1 p2 balanced by beta, contour weight alpha
    kUniform,  // every pixel weighted 1
};

struct TrainConfig {
    double lr0 = 1e-3;
    double lr_floor = 1e-7;
    double lr_decay = 0.1;
    std::size_t lr_period = 10;
    double momentum = 0.9;
    double weight_decay = 5e-5;
    double omega0 = 0.1;
    double omega_floor = 1e-3;
    double omega_decay = 0.1;
    std::size_t omega_period = 10;
    /// Loss-side Σθ² coefficient; 0 while weight_decay regularizes in the optimizer.
    double lambda = 0.0;
    double alpha1 = 2.0;
    double alpha2 = 1.0;
    double beta = 1.5;
    std::size_t contour_width = 4;
    std::size_t batch_size = 4;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    SamplingMode sampling = SamplingMode::kLws;
    /// Optional overrides of the U-Net1 region probabilities (p2 override disables the balance rule).
    std::optional<double> p1_override, p2_override, p3_override, p4_override;

    void validate() const;
    StageSampling stage_sampling() const;
    double lr_at(std::size_t epoch) const { return schedule(epoch, lr0, lr_decay, lr_period, lr_floor); }
    double omega_at(std::size_t epoch) const {
        return schedule(epoch, omega0, omega_decay, omega_period, omega_floor);
    }
};

TrainConfig train_config_from(const KeyValues& kv);
KeyValues train_config_to_kv(const TrainConfig& cfg);
std::vector<std::string> train_config_keys();

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double omega = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    std::size_t steps = 0;
    std::size_t skipped = 0;
};

struct TrainState {
    std::size_t epoch = 0;  // completed epochs
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    bool stopped_early = false;
    std::vector<EpochRecord> history;
};

/// Counts sample-matrix draws so tests can confirm each step used fresh matrices.
struct SamplingAudit {
    std::uint64_t draws = 0;
    std::uint64_t steps = 0;
    std::uint64_t stale = 0;  // steps whose matrices were not drawn for that step
};

struct CascadeLoss {
    Tensor total;
    double l1 = 0.0;
    double l2 = 0.0;
    std::vector<double> aux;
};

/// Branch losses against the whole-tumor target (weights w1) and the
/// substructure target (weights w2); the first half of the auxiliary heads
/// follow stage 1, the rest stage 2. Returns l1 + l2 + ω·Σaux + λ·Σθ².
CascadeLoss cascade_loss(const CascadeOutputs& outputs, const LabelMap& labels, const WeightMap& w1,
                         const WeightMap& w2, double omega, double lambda, const ParamSet& params);

/// Region partition plus both sample matrices for one batch.
struct BatchWeights {
    RegionPartition partition;
    SamplingConfig unet1;  // p2 resolved
    WeightMap w1, w2;
    std::uint64_t serial = 0;  // process-wide, strictly increasing per draw
};
BatchWeights draw_batch_weights(const LabelMap& labels, const Mask& brain, const StageSampling& sampling,
                                std::size_t contour_width, std::mt19937_64& rng);

class Trainer {
public:
    using EpochCallback = std::function<void(const EpochRecord&)>;

    Trainer(CUNet& model, TrainConfig config);

    /// Augments each normalized sample, then takes one SGD step at `epoch`'s schedule.
    /// Returns nullopt when the batch was skipped as degenerate.
    std::optional<double> train_step(const std::vector<VolumeSample>& normalized_batch, std::size_t epoch);

    /// Mean of l1 + l2 per case, with sample matrices from a fixed stream so
    /// values are comparable across epochs. Degenerate terms are left out.
    double validation_loss(const std::vector<VolumeSample>& normalized_cases);

    /// Filters tumor-free training cases, normalizes, then trains with early
    /// stopping on validation loss. The model ends with the best parameters.
    TrainState fit(const std::vector<VolumeSample>& train, const std::vector<VolumeSample>& val,
                   const EpochCallback& on_epoch = {});

    const SamplingAudit& audit() const { return audit_; }
    const TrainConfig& config() const { return config_; }

private:
    CUNet& model_;
    TrainConfig config_;
    StageSampling sampling_;
    std::mt19937_64 rng_;
    SamplingAudit audit_;
    std::uint64_t last_serial_ = 0;
};

/// Normalizes with the brain region taken as the complement of the extracted
/// non-brain mask, runs the cascade, and fuses with that mask.
LabelMap predict(const CUNet& model, const VolumeSample& raw);

/// Predicts every case and scores it against its ground truth.
DatasetReport evaluate(const CUNet& model, const std::vector<VolumeSample>& cases,
                       EmptyPolicy policy = EmptyPolicy::kOne);

}  // namespace cunet
