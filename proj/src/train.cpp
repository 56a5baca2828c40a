#include "cunet/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cunet/errors.hpp"
#include "cunet/log.hpp"
#include "cunet/ops.hpp"

namespace cunet {

namespace {

// Decorrelates the validation stream from the training stream.
constexpr std::uint64_t kValidationStream = 0x9e3779b97f4a7c15ULL;

std::atomic<std::uint64_t> g_weight_serial{0};

std::optional<double> optional_double(const KeyValues& kv, const std::string& key) {
    if (!kv.contains(key)) return std::nullopt;
    return kv.get_double(key, 0.0);
}

std::string format(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

}  // namespace

double schedule(std::size_t epoch, double initial, double decay, std::size_t period, double floor) {
    if (period == 0) throw ContractError("schedule: period must be positive");
    const double steps = static_cast<double>(epoch / period);
    return std::max(floor, initial * std::pow(decay, steps));
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(lr0, "lr0");
    positive(lr_floor, "lr_floor");
    positive(lr_decay, "lr_decay");
    positive(omega0, "omega0");
    positive(omega_floor, "omega_floor");
    positive(omega_decay, "omega_decay");
    positive(beta, "beta");
    if (lr_floor > lr0) throw ConfigError("lr_floor must not exceed lr0");
    if (omega_floor > omega0) throw ConfigError("omega_floor must not exceed omega0");
    if (lr_period == 0 || omega_period == 0) throw ConfigError("schedule periods must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
    if (weight_decay < 0.0 || lambda < 0.0) throw ConfigError("weight_decay and lambda must be nonnegative");
    if (alpha1 < 1.0 || alpha2 < 1.0) throw ConfigError("alpha1 and alpha2 must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    stage_sampling().unet1.validate();
}

StageSampling TrainConfig::stage_sampling() const {
    if (sampling == SamplingMode::kUniform) return uniform_sampling_configs();
    StageSampling s = stage_sampling_configs(alpha1, alpha2, beta);
    if (p1_override) s.unet1.p1 = *p1_override;
    if (p2_override) s.unet1.p2 = *p2_override;
    if (p3_override) s.unet1.p3 = *p3_override;
    if (p4_override) s.unet1.p4 = *p4_override;
    return s;
}

std::vector<std::string> train_config_keys() {
    return {"lr0",       "lr_floor",    "lr_decay",      "lr_period", "momentum", "weight_decay", "omega0",
            "omega_floor", "omega_decay", "omega_period", "lambda",    "alpha1",   "alpha2",       "beta",
            "contour_width", "batch_size", "max_epochs",  "patience",  "seed",     "sampling",     "p1",
            "p2",        "p3",          "p4"};
}

TrainConfig train_config_from(const KeyValues& kv) {
    TrainConfig c;
    c.lr0 = kv.get_double("lr0", c.lr0);
    c.lr_floor = kv.get_double("lr_floor", c.lr_floor);
    c.lr_decay = kv.get_double("lr_decay", c.lr_decay);
    c.lr_period = kv.get_size("lr_period", c.lr_period);
    c.momentum = kv.get_double("momentum", c.momentum);
    c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
    c.omega0 = kv.get_double("omega0", c.omega0);
    c.omega_floor = kv.get_double("omega_floor", c.omega_floor);
    c.omega_decay = kv.get_double("omega_decay", c.omega_decay);
    c.omega_period = kv.get_size("omega_period", c.omega_period);
    c.lambda = kv.get_double("lambda", c.lambda);
    c.alpha1 = kv.get_double("alpha1", c.alpha1);
    c.alpha2 = kv.get_double("alpha2", c.alpha2);
    c.beta = kv.get_double("beta", c.beta);
    c.contour_width = kv.get_size("contour_width", c.contour_width);
    c.batch_size = kv.get_size("batch_size", c.batch_size);
    c.max_epochs = kv.get_size("max_epochs", c.max_epochs);
    c.patience = kv.get_size("patience", c.patience);
    c.seed = kv.get_u64("seed", c.seed);
    const std::string mode = kv.get_string("sampling", "lws");
    if (mode == "lws") c.sampling = SamplingMode::kLws;
    else if (mode == "uniform") c.sampling = SamplingMode::kUniform;
    else throw ConfigError("sampling must be 'lws' or 'uniform', got '" + mode + "'");
    c.p1_override = optional_double(kv, "p1");
    c.p2_override = optional_double(kv, "p2");
    c.p3_override = optional_double(kv, "p3");
    c.p4_override = optional_double(kv, "p4");
    c.validate();
    return c;
}

KeyValues train_config_to_kv(const TrainConfig& c) {
    KeyValues kv;
    kv.set("lr0", format(c.lr0));
    kv.set("lr_floor", format(c.lr_floor));
    kv.set("lr_decay", format(c.lr_decay));
    kv.set("lr_period", std::to_string(c.lr_period));
    kv.set("momentum", format(c.momentum));
    kv.set("weight_decay", format(c.weight_decay));
    kv.set("omega0", format(c.omega0));
    kv.set("omega_floor", format(c.omega_floor));
    kv.set("omega_decay", format(c.omega_decay));
    kv.set("omega_period", std::to_string(c.omega_period));
    kv.set("lambda", format(c.lambda));
    kv.set("alpha1", format(c.alpha1));
    kv.set("alpha2", format(c.alpha2));
    kv.set("beta", format(c.beta));
    kv.set("contour_width", std::to_string(c.contour_width));
    kv.set("batch_size", std::to_string(c.batch_size));
    kv.set("max_epochs", std::to_string(c.max_epochs));
    kv.set("patience", std::to_string(c.patience));
    kv.set("seed", std::to_string(c.seed));
    kv.set("sampling", c.sampling == SamplingMode::kLws ? "lws" : "uniform");
    if (c.p1_override) kv.set("p1", format(*c.p1_override));
    if (c.p2_override) kv.set("p2", format(*c.p2_override));
    if (c.p3_override) kv.set("p3", format(*c.p3_override));
    if (c.p4_override) kv.set("p4", format(*c.p4_override));
    return kv;
}

CascadeLoss cascade_loss(const CascadeOutputs& outputs, const LabelMap& labels, const WeightMap& w1,
                         const WeightMap& w2, double omega, double lambda, const ParamSet& params) {
    const Tensor target1 = one_hot_whole_tumor(labels);
    const Tensor target2 = one_hot_substructures(labels);
    CascadeLoss out;
    const Tensor l1 = weighted_cross_entropy(outputs.branch1, target1, w1);
    const Tensor l2 = weighted_cross_entropy(outputs.branch2, target2, w2);
    std::vector<Tensor> aux;
    const std::size_t half = outputs.aux.size() / 2;
    for (std::size_t i = 0; i < outputs.aux.size(); ++i) {
        const bool first_stage = i < half;
        aux.push_back(weighted_cross_entropy(outputs.aux[i], first_stage ? target1 : target2, first_stage ? w1 : w2));
        out.aux.push_back(aux.back().item());
    }
    out.l1 = l1.item();
    out.l2 = l2.item();
    out.total = total_loss(l1, l2, aux, omega, lambda, params);
    return out;
}

BatchWeights draw_batch_weights(const LabelMap& labels, const Mask& brain, const StageSampling& sampling,
                                std::size_t contour_width, std::mt19937_64& rng) {
    BatchWeights b;
    b.partition = partition_regions(labels, brain, contour_width);
    b.unet1 = resolve_sampling(sampling.unet1, b.partition);
    const SamplingConfig unet2 = resolve_sampling(sampling.unet2, b.partition);
    b.w1 = sample_matrix(b.partition, b.unet1, rng);
    b.w2 = sample_matrix(b.partition, unet2, rng);
    b.serial = ++g_weight_serial;
    return b;
}

Trainer::Trainer(CUNet& model, TrainConfig config)
    : model_(model), config_(std::move(config)), sampling_(config_.stage_sampling()), rng_(config_.seed) {
    config_.validate();
}

std::optional<double> Trainer::train_step(const std::vector<VolumeSample>& normalized_batch, std::size_t epoch) {
    std::vector<VolumeSample> batch;
    batch.reserve(normalized_batch.size());
    for (const auto& s : normalized_batch) batch.push_back(augment(s, rng_));
    const LabelMap labels = stack_labels(batch);

    const BatchWeights weights =
        draw_batch_weights(labels, stack_brain_masks(batch), sampling_, config_.contour_width, rng_);
    audit_.draws += 2;
    ++audit_.steps;
    if (weights.serial <= last_serial_) ++audit_.stale;
    last_serial_ = weights.serial;

    model_.params().zero_grad();
    const CascadeOutputs outputs = model_.forward(to_tensor(batch));
    CascadeLoss loss;
    try {
        loss = cascade_loss(outputs, labels, weights.w1, weights.w2, config_.omega_at(epoch), config_.lambda,
                            model_.params());
    } catch (const DegenerateBatchError& e) {
        log_info(std::string("skipping batch: ") + e.what());
        return std::nullopt;
    }
    const double value = loss.total.item();
    if (!std::isfinite(value)) {
        std::ostringstream ss;
        ss << "non-finite loss at epoch " << epoch << ": l1=" << loss.l1 << " l2=" << loss.l2;
        throw NumericError(ss.str());
    }
    loss.total.backward();
    for (const auto& e : model_.params().entries())
        for (double g : e.value.grad())
            if (!std::isfinite(g)) throw NumericError("non-finite gradient for '" + e.name + "'");
    sgd_momentum_step(model_.params(), config_.lr_at(epoch), config_.momentum, config_.weight_decay);
    return value;
}

double Trainer::validation_loss(const std::vector<VolumeSample>& normalized_cases) {
    NoGradGuard no_grad;
    std::mt19937_64 rng(config_.seed ^ kValidationStream);
    double total = 0.0;
    std::size_t terms = 0;
    for (const auto& s : normalized_cases) {
        const BatchWeights w = draw_batch_weights(s.labels, s.brain_mask, sampling_, config_.contour_width, rng);
        const CascadeOutputs out = model_.forward(to_tensor({s}));
        double case_loss = 0.0;
        bool any = false;
        try {
            case_loss += weighted_cross_entropy(out.branch1, one_hot_whole_tumor(s.labels), w.w1).item();
            any = true;
        } catch (const DegenerateBatchError&) {
        }
        try {
            case_loss += weighted_cross_entropy(out.branch2, one_hot_substructures(s.labels), w.w2).item();
            any = true;
        } catch (const DegenerateBatchError&) {
        }
        if (any) {
            total += case_loss;
            ++terms;
        }
    }
    if (terms == 0) throw InputError("validation_loss: no case with a nonzero sample matrix");
    return total / static_cast<double>(terms);
}

TrainState Trainer::fit(const std::vector<VolumeSample>& train, const std::vector<VolumeSample>& val,
                        const EpochCallback& on_epoch) {
    std::vector<VolumeSample> train_set;
    for (auto& s : filter_tumorless(train, SplitKind::kTrain)) train_set.push_back(normalize_intensity(s));
    std::vector<VolumeSample> val_set;
    for (const auto& s : val) val_set.push_back(normalize_intensity(s));
    if (train_set.empty()) throw InputError("fit: no tumor-bearing training cases");
    if (val_set.empty()) throw InputError("fit: empty validation split");

    if (config_.sampling == SamplingMode::kLws) {
        const RegionPartition part =
            partition_regions(stack_labels(train_set), stack_brain_masks(train_set), config_.contour_width);
        const double p2 = resolve_sampling(sampling_.unet1, part).p2.value_or(0.0);
        coverage_check(config_.beta, p2, config_.max_epochs);
    }

    TrainState state;
    ParamSet best = model_.params().clone();
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config_.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = config_.lr_at(epoch);
        rec.omega = config_.omega_at(epoch);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
            std::vector<VolumeSample> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + config_.batch_size); ++i)
                batch.push_back(train_set[order[i]]);
            if (const auto loss = train_step(batch, epoch)) {
                loss_sum += *loss;
                ++rec.steps;
            } else {
                ++rec.skipped;
            }
        }
        rec.train_loss = rec.steps ? loss_sum / static_cast<double>(rec.steps) : 0.0;
        rec.val_loss = validation_loss(val_set);
        state.history.push_back(rec);
        state.epoch = epoch + 1;

        std::ostringstream ss;
        ss << "epoch " << epoch << " lr " << rec.lr << " omega " << rec.omega << " train " << rec.train_loss
           << " val " << rec.val_loss;
        log_info(ss.str());
        if (on_epoch) on_epoch(rec);

        if (rec.val_loss < state.best_val) {
            state.best_val = rec.val_loss;
            state.best_epoch = epoch;
            state.since_best = 0;
            best.assign_from(model_.params());
        } else if (++state.since_best >= config_.patience) {
            state.stopped_early = true;
            break;
        }
    }
    model_.params().assign_from(best);
    return state;
}

LabelMap predict(const CUNet& model, const VolumeSample& raw) {
    try {
        model.config().check_input_extents(raw.height, raw.width);
    } catch (const ContractError& e) {
        throw InputError(std::string("predict: ") + e.what());
    }
    const Mask nonbrain = extract_nonbrain_mask(raw);
    if (count_set(nonbrain) == nonbrain.size()) return LabelMap(1, raw.height, raw.width, 0);
    VolumeSample prepared = raw;
    for (std::size_t i = 0; i < nonbrain.size(); ++i) prepared.brain_mask[i] = nonbrain[i] ? 0 : 1;
    prepared = normalize_intensity(prepared);
    NoGradGuard no_grad;
    const CascadeOutputs out = model.forward(to_tensor({prepared}));
    return fuse_predictions(out.branch1, out.branch2, nonbrain);
}

DatasetReport evaluate(const CUNet& model, const std::vector<VolumeSample>& cases, EmptyPolicy policy) {
    if (cases.empty()) throw InputError("evaluate: empty split");
    std::vector<std::string> ids;
    std::vector<LabelMap> predictions, truths;
    for (const auto& c : cases) {
        ids.push_back(c.id);
        predictions.push_back(predict(model, c));
        truths.push_back(c.labels);
    }
    return evaluate_dataset(ids, predictions, truths, policy);
}

}  // namespace cunet
