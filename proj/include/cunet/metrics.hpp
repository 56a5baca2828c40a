#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cunet/grid.hpp"

namespace cunet {

/// Whole tumor {1,2,4}, tumor core {1,4}, enhancing tumor {4}.
struct EvalRegionMasks {
    Mask wt, tc, et;
};

/// Throws InputError on labels outside {0,1,2,4}.
EvalRegionMasks region_masks(const LabelMap& labels);

/// What a ratio returns when numerator and denominator are both empty.
/// When only the denominator is empty the metric is always undefined.
enum class EmptyPolicy { kOne, kUndefined };

using Metric = std::optional<double>;

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};
Confusion confusion(const Mask& p, const Mask& t);

/// 2|P1∧T1| / (|P1|+|T1|)
Metric dice(const Mask& p, const Mask& t, EmptyPolicy policy = EmptyPolicy::kOne);
/// |P1∧T1| / |T1|
Metric sensitivity(const Mask& p, const Mask& t, EmptyPolicy policy = EmptyPolicy::kOne);
/// |P0∧T0| / |T0|
Metric specificity(const Mask& p, const Mask& t, EmptyPolicy policy = EmptyPolicy::kOne);

enum class Region { kWT = 0, kTC = 1, kET = 2 };
enum class MetricKind { kDice = 0, kSens = 1, kSpec = 2 };

struct CaseReport {
    std::string case_id;
    /// values[region][metric]
    std::array<std::array<Metric, 3>, 3> values{};

    Metric get(Region r, MetricKind m) const {
        return values[static_cast<int>(r)][static_cast<int>(m)];
    }
};

CaseReport evaluate_case(const std::string& case_id, const LabelMap& prediction, const LabelMap& truth,
                         EmptyPolicy policy = EmptyPolicy::kOne);

struct MetricSummary {
    double mean = 0.0;
    std::size_t defined = 0;
    std::size_t undefined = 0;
};

struct DatasetReport {
    std::vector<CaseReport> cases;
    std::array<std::array<MetricSummary, 3>, 3> summary{};

    const MetricSummary& get(Region r, MetricKind m) const {
        return summary[static_cast<int>(r)][static_cast<int>(m)];
    }
};

/// Undefined values are excluded from the means and counted separately.
DatasetReport summarize(std::vector<CaseReport> cases);

DatasetReport evaluate_dataset(const std::vector<std::string>& ids, const std::vector<LabelMap>& predictions,
                               const std::vector<LabelMap>& truths, EmptyPolicy policy = EmptyPolicy::kOne);

/// CSV columns, fixed order:
/// case_id,wt_dice,wt_sens,wt_spec,tc_dice,tc_sens,tc_spec,et_dice,et_sens,et_spec
/// Undefined values are written as "nan". Doubles use 17 significant digits.
std::string report_csv(const DatasetReport& report);
/// {"cases": n, "wt": {"dice": {"mean": m, "defined": k, "undefined": u}, ...}, ...}
std::string report_json(const DatasetReport& report);

void write_report(const DatasetReport& report, const std::string& csv_path, const std::string& json_path);

}  // namespace cunet
