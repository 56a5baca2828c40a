#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "cunet/errors.hpp"
#include "cunet/metrics.hpp"
#include "oracles.hpp"

using namespace cunet;

namespace {

Mask mask_from(std::initializer_list<int> bits) {
    std::vector<std::uint8_t> v;
    for (int b : bits) v.push_back(static_cast<std::uint8_t>(b));
    const std::size_t n = v.size();
    return Mask(1, 1, n, std::move(v));
}

Mask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double p) {
    std::bernoulli_distribution coin(p);
    Mask m(1, h, w);
    for (auto& v : m.values()) v = coin(rng);
    return m;
}

}  // namespace

TEST(RegionMasks, Composition) {
    const LabelMap l(1, 1, 5, std::vector<std::uint8_t>{0, 1, 2, 4, 0});
    const EvalRegionMasks r = region_masks(l);
    EXPECT_EQ(r.wt.values(), (std::vector<std::uint8_t>{0, 1, 1, 1, 0}));
    EXPECT_EQ(r.tc.values(), (std::vector<std::uint8_t>{0, 1, 0, 1, 0}));
    EXPECT_EQ(r.et.values(), (std::vector<std::uint8_t>{0, 0, 0, 1, 0}));
    EXPECT_EQ(count_set(region_masks(LabelMap(1, 3, 3, 0)).wt), 0u);
}

TEST(RegionMasks, OutOfVocabularyRejected) {
    EXPECT_THROW(region_masks(LabelMap(1, 1, 1, 3)), InputError);
}

TEST(RegionMasks, HierarchyHolds) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> pick(0, 3);
    LabelMap l(2, 16, 16);
    for (auto& v : l.values()) v = std::array<std::uint8_t, 4>{0, 1, 2, 4}[pick(rng)];
    const EvalRegionMasks r = region_masks(l);
    for (std::size_t i = 0; i < l.size(); ++i) {
        EXPECT_LE(r.et[i], r.tc[i]);
        EXPECT_LE(r.tc[i], r.wt[i]);
    }
}

TEST(Metrics, IdenticalMasksScoreOne) {
    const Mask m = mask_from({0, 1, 1, 0});
    EXPECT_EQ(*dice(m, m), 1.0);
    EXPECT_EQ(*sensitivity(m, m), 1.0);
    EXPECT_EQ(*specificity(m, m), 1.0);
}

TEST(Metrics, WorkedExample) {
    // |P1| = 4, |T1| = 6, overlap 3
    const Mask p = mask_from({1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
    const Mask t = mask_from({0, 1, 1, 1, 1, 1, 1, 0, 0, 0});
    EXPECT_DOUBLE_EQ(*dice(p, t), 0.6);
    EXPECT_DOUBLE_EQ(*sensitivity(p, t), 0.5);
    EXPECT_DOUBLE_EQ(*specificity(p, t), 3.0 / 4.0);
}

TEST(Metrics, EmptyPolicies) {
    const Mask empty = mask_from({0, 0, 0});
    const Mask full = mask_from({1, 1, 1});
    EXPECT_EQ(*dice(empty, empty), 1.0);
    EXPECT_FALSE(dice(empty, empty, EmptyPolicy::kUndefined).has_value());
    EXPECT_EQ(*sensitivity(empty, empty), 1.0);
    EXPECT_FALSE(sensitivity(full, empty).has_value());
    EXPECT_FALSE(specificity(empty, full).has_value());
    EXPECT_EQ(*dice(full, empty), 0.0);
}

TEST(Metrics, ShapeMismatchIsContractViolation) {
    EXPECT_THROW(dice(mask_from({1, 0}), mask_from({1, 0, 1})), ContractError);
}

TEST(Metrics, RandomMasksMatchCountingOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Mask p = random_mask(rng, 32, 32, 0.3), t = random_mask(rng, 32, 32, 0.4);
        const oracle::Counts c = oracle::count(p, t);
        const Confusion k = confusion(p, t);
        EXPECT_EQ(k.tp, c.tp);
        EXPECT_EQ(k.fp, c.fp);
        EXPECT_EQ(k.fn, c.fn);
        EXPECT_EQ(k.tn, c.tn);
        EXPECT_EQ(*dice(p, t), 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn));
        EXPECT_EQ(*sensitivity(p, t), c.tp / static_cast<double>(c.tp + c.fn));
        EXPECT_EQ(*specificity(p, t), c.tn / static_cast<double>(c.tn + c.fp));
    }
}

TEST(Metrics, SymmetryRangeAndHarmonicMean) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Mask p = random_mask(rng, 12, 12, 0.5), t = random_mask(rng, 12, 12, 0.5);
        const double d = *dice(p, t);
        EXPECT_EQ(d, *dice(t, p));
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
        const oracle::Counts c = oracle::count(p, t);
        const double precision = c.tp / static_cast<double>(c.tp + c.fp);
        const double sens = *sensitivity(p, t);
        if (precision + sens > 0) { EXPECT_NEAR(d, 2.0 * sens * precision / (sens + precision), 1e-12); }
    }
}

TEST(EvaluateDataset, PerfectPredictionsScoreOne) {
    LabelMap t(1, 4, 4, 0);
    t(0, 1, 1) = 1;
    t(0, 1, 2) = 2;
    t(0, 2, 2) = 4;
    const DatasetReport r = evaluate_dataset({"a"}, {t}, {t});
    for (int reg = 0; reg < 3; ++reg)
        for (int m = 0; m < 3; ++m) EXPECT_EQ(r.summary[reg][m].mean, 1.0);
}

TEST(EvaluateDataset, AllBackgroundPrediction) {
    LabelMap t(1, 4, 4, 0);
    t(0, 0, 0) = 4;
    const DatasetReport r = evaluate_dataset({"a"}, {LabelMap(1, 4, 4, 0)}, {t});
    EXPECT_EQ(r.get(Region::kWT, MetricKind::kSens).mean, 0.0);
    EXPECT_EQ(r.get(Region::kWT, MetricKind::kSpec).mean, 1.0);
}

TEST(EvaluateDataset, TwoCaseManualOracle) {
    // Case a: WT truth {0,1,2,3}, prediction {1,2,4} → tp 2, fp 1, fn 2, tn 3 over 8 pixels.
    const LabelMap ta(1, 1, 8, std::vector<std::uint8_t>{2, 2, 1, 1, 0, 0, 0, 0});
    const LabelMap pa(1, 1, 8, std::vector<std::uint8_t>{0, 2, 2, 0, 2, 0, 0, 0});
    // Case b: WT truth {0}, prediction {0,1} → tp 1, fp 1, fn 0, tn 6.
    const LabelMap tb(1, 1, 8, std::vector<std::uint8_t>{4, 0, 0, 0, 0, 0, 0, 0});
    const LabelMap pb(1, 1, 8, std::vector<std::uint8_t>{4, 4, 0, 0, 0, 0, 0, 0});
    const DatasetReport r = evaluate_dataset({"a", "b"}, {pa, pb}, {ta, tb});
    ASSERT_EQ(r.cases.size(), 2u);
    EXPECT_DOUBLE_EQ(*r.cases[0].get(Region::kWT, MetricKind::kDice), 4.0 / 7.0);
    EXPECT_DOUBLE_EQ(*r.cases[1].get(Region::kWT, MetricKind::kDice), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.get(Region::kWT, MetricKind::kDice).mean, (4.0 / 7.0 + 2.0 / 3.0) / 2.0);
    EXPECT_DOUBLE_EQ(r.get(Region::kWT, MetricKind::kSens).mean, (0.5 + 1.0) / 2.0);
    EXPECT_DOUBLE_EQ(r.get(Region::kWT, MetricKind::kSpec).mean, (0.75 + 6.0 / 7.0) / 2.0);
    // Case a has no ET in truth or prediction.
    EXPECT_EQ(*r.cases[0].get(Region::kET, MetricKind::kDice), 1.0);
}

TEST(EvaluateDataset, UndefinedValuesExcludedFromMeans) {
    const LabelMap empty(1, 2, 2, 0);
    LabelMap tumor(1, 2, 2, 0);
    tumor(0, 0, 0) = 2;
    const DatasetReport r = evaluate_dataset({"a", "b"}, {empty, tumor}, {empty, tumor}, EmptyPolicy::kUndefined);
    const MetricSummary& s = r.get(Region::kWT, MetricKind::kDice);
    EXPECT_EQ(s.defined, 1u);
    EXPECT_EQ(s.undefined, 1u);
    EXPECT_EQ(s.mean, 1.0);
}

TEST(EvaluateDataset, LengthMismatchRejected) {
    EXPECT_THROW(evaluate_dataset({"a", "b"}, {LabelMap(1, 1, 1)}, {LabelMap(1, 1, 1)}), InputError);
}

TEST(Report, CsvLayout) {
    const LabelMap t(1, 1, 2, std::vector<std::uint8_t>{1, 0});
    const DatasetReport r = evaluate_dataset({"x"}, {t}, {t});
    std::istringstream in(report_csv(r));
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header, "case_id,wt_dice,wt_sens,wt_spec,tc_dice,tc_sens,tc_spec,et_dice,et_sens,et_spec");
    EXPECT_EQ(row.substr(0, 2), "x,");
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 9);
}

TEST(Report, CsvWritesUndefinedAsNan) {
    const LabelMap e(1, 1, 2, 0);
    const DatasetReport r = evaluate_dataset({"x"}, {e}, {e}, EmptyPolicy::kUndefined);
    EXPECT_NE(report_csv(r).find("nan"), std::string::npos);
}

TEST(Report, JsonAggregate) {
    const LabelMap t(1, 1, 2, std::vector<std::uint8_t>{4, 0});
    const auto j = nlohmann::json::parse(report_json(evaluate_dataset({"x", "y"}, {t, t}, {t, t})));
    EXPECT_EQ(j.at("cases"), 2);
    EXPECT_EQ(j.at("et").at("dice").at("mean"), 1.0);
    EXPECT_EQ(j.at("tc").at("spec").at("defined"), 2);
}
