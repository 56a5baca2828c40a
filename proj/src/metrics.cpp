#include "cunet/metrics.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cunet/errors.hpp"

namespace cunet {

namespace {

constexpr const char* kRegionNames[3] = {"wt", "tc", "et"};
constexpr const char* kMetricNames[3] = {"dice", "sens", "spec"};

Metric ratio(std::size_t num, std::size_t den, bool both_empty, EmptyPolicy policy) {
    if (den != 0) return static_cast<double>(num) / static_cast<double>(den);
    if (both_empty && policy == EmptyPolicy::kOne) return 1.0;
    return std::nullopt;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

EvalRegionMasks region_masks(const LabelMap& labels) {
    const std::size_t n = labels.batch(), h = labels.height(), w = labels.width();
    EvalRegionMasks m{Mask(n, h, w, 0), Mask(n, h, w, 0), Mask(n, h, w, 0)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        switch (labels[i]) {
            case 0: break;
            case 1: m.wt[i] = m.tc[i] = 1; break;
            case 2: m.wt[i] = 1; break;
            case 4: m.wt[i] = m.tc[i] = m.et[i] = 1; break;
            default: throw InputError("label outside {0,1,2,4}: " + std::to_string(labels[i]));
        }
    }
    return m;
}

Confusion confusion(const Mask& p, const Mask& t) {
    if (!p.same_extents(t)) throw ContractError("metric: mask extents differ");
    Confusion c;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pp = p[i] != 0, tt = t[i] != 0;
        if (pp && tt) ++c.tp;
        else if (pp) ++c.fp;
        else if (tt) ++c.fn;
        else ++c.tn;
    }
    return c;
}

Metric dice(const Mask& p, const Mask& t, EmptyPolicy policy) {
    const Confusion c = confusion(p, t);
    const std::size_t den = (c.tp + c.fp) + (c.tp + c.fn);
    return ratio(2 * c.tp, den, true, policy);
}

Metric sensitivity(const Mask& p, const Mask& t, EmptyPolicy policy) {
    const Confusion c = confusion(p, t);
    return ratio(c.tp, c.tp + c.fn, c.tp + c.fp == 0, policy);
}

Metric specificity(const Mask& p, const Mask& t, EmptyPolicy policy) {
    const Confusion c = confusion(p, t);
    return ratio(c.tn, c.tn + c.fp, c.tn + c.fn == 0, policy);
}

CaseReport evaluate_case(const std::string& case_id, const LabelMap& prediction, const LabelMap& truth,
                         EmptyPolicy policy) {
    if (!prediction.same_extents(truth)) throw ContractError("evaluate_case: extents differ for " + case_id);
    const EvalRegionMasks p = region_masks(prediction);
    const EvalRegionMasks t = region_masks(truth);
    const Mask* pm[3] = {&p.wt, &p.tc, &p.et};
    const Mask* tm[3] = {&t.wt, &t.tc, &t.et};
    CaseReport r;
    r.case_id = case_id;
    for (int k = 0; k < 3; ++k) {
        r.values[k][0] = dice(*pm[k], *tm[k], policy);
        r.values[k][1] = sensitivity(*pm[k], *tm[k], policy);
        r.values[k][2] = specificity(*pm[k], *tm[k], policy);
    }
    return r;
}

DatasetReport summarize(std::vector<CaseReport> cases) {
    DatasetReport out;
    out.cases = std::move(cases);
    for (int r = 0; r < 3; ++r) {
        for (int m = 0; m < 3; ++m) {
            MetricSummary& s = out.summary[r][m];
            double total = 0.0;
            for (const auto& c : out.cases) {
                if (const Metric v = c.values[r][m]) {
                    total += *v;
                    ++s.defined;
                } else {
                    ++s.undefined;
                }
            }
            s.mean = s.defined ? total / static_cast<double>(s.defined) : 0.0;
        }
    }
    return out;
}

DatasetReport evaluate_dataset(const std::vector<std::string>& ids, const std::vector<LabelMap>& predictions,
                               const std::vector<LabelMap>& truths, EmptyPolicy policy) {
    if (predictions.size() != truths.size() || ids.size() != truths.size())
        throw InputError("evaluate_dataset: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(truths.size()) + " truths vs " + std::to_string(ids.size()) + " ids");
    std::vector<CaseReport> cases;
    cases.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        cases.push_back(evaluate_case(ids[i], predictions[i], truths[i], policy));
    return summarize(std::move(cases));
}

std::string report_csv(const DatasetReport& report) {
    std::string out = "case_id";
    for (const char* r : kRegionNames)
        for (const char* m : kMetricNames) out += std::string(",") + r + "_" + m;
    out += '\n';
    for (const auto& c : report.cases) {
        out += c.case_id;
        for (const auto& region : c.values)
            for (const auto& v : region) out += "," + (v ? format_double(*v) : std::string("nan"));
        out += '\n';
    }
    return out;
}

std::string report_json(const DatasetReport& report) {
    nlohmann::ordered_json j;
    j["cases"] = report.cases.size();
    for (int r = 0; r < 3; ++r) {
        for (int m = 0; m < 3; ++m) {
            const MetricSummary& s = report.summary[r][m];
            nlohmann::ordered_json entry;
            if (s.defined) entry["mean"] = s.mean;
            else entry["mean"] = nullptr;
            entry["defined"] = s.defined;
            entry["undefined"] = s.undefined;
            j[kRegionNames[r]][kMetricNames[m]] = entry;
        }
    }
    return j.dump(2) + "\n";
}

void write_report(const DatasetReport& report, const std::string& csv_path, const std::string& json_path) {
    auto put = [](const std::string& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << text;
        if (!out) throw IoError("short write to '" + path + "'");
    };
    put(csv_path, report_csv(report));
    put(json_path, report_json(report));
}

}  // namespace cunet
