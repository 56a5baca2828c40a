#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cunet/errors.hpp"
#include "cunet/lws.hpp"
#include "cunet/ops.hpp"
#include "oracles.hpp"

using namespace cunet;

namespace {

LabelMap centered_square(std::size_t size, std::size_t side, std::uint8_t label) {
    LabelMap l(1, size, size, 0);
    const std::size_t lo = (size - side) / 2;
    for (std::size_t y = lo; y < lo + side; ++y)
        for (std::size_t x = lo; x < lo + side; ++x) l(0, y, x) = label;
    return l;
}

Mask tumor_of(const LabelMap& l) {
    Mask m(l.batch(), l.height(), l.width());
    for (std::size_t i = 0; i < l.size(); ++i) m[i] = l[i] != 0;
    return m;
}

void expect_disjoint_cover(const RegionPartition& p) {
    for (std::size_t i = 0; i < p.s1.size(); ++i) EXPECT_EQ(p.s1[i] + p.s2[i] + p.s3[i] + p.s4[i], 1) << i;
}

}  // namespace

TEST(Partition, NoTumorFullBrain) {
    const RegionPartition p = partition_regions(LabelMap(1, 8, 8, 0), Mask(1, 8, 8, 1), 2);
    EXPECT_EQ(p.count(2), 64u);
    EXPECT_EQ(p.count(1) + p.count(3) + p.count(4), 0u);
}

TEST(Partition, EmptyBrainIsAllBackground) {
    const RegionPartition p = partition_regions(LabelMap(1, 8, 8, 0), Mask(1, 8, 8, 0), 2);
    EXPECT_EQ(p.count(1), 64u);
}

TEST(Partition, CenteredSquareMatchesDistanceOracle) {
    const LabelMap labels = centered_square(16, 6, 2);
    const RegionPartition p = partition_regions(labels, Mask(1, 16, 16, 1), 2);
    expect_disjoint_cover(p);
    // 20 inner ring + 28 outer ring
    EXPECT_EQ(p.count(4), 48u);
    EXPECT_EQ(p.count(3), 16u);
    EXPECT_EQ(p.count(2), 192u);
    EXPECT_EQ(p.count(1), 0u);
    EXPECT_EQ(p.s4, oracle::chebyshev_band(tumor_of(labels), 1));
}

TEST(Partition, LabelOutsideBrainRejected) {
    LabelMap l(1, 4, 4, 0);
    l(0, 0, 0) = 1;
    Mask brain(1, 4, 4, 1);
    brain(0, 0, 0) = 0;
    EXPECT_THROW(partition_regions(l, brain, 2), InputError);
}

TEST(Partition, RandomBlobsSatisfyInvariants) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        LabelMap l(2, 12, 12, 0);
        Mask brain(2, 12, 12, 0);
        std::uniform_int_distribution<int> pick(0, 3);
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t y = 1; y < 11; ++y)
                for (std::size_t x = 1; x < 11; ++x) {
                    brain(n, y, x) = 1;
                    if (y > 3 && y < 9 && x > 2 && x < 10) l(n, y, x) = std::array<std::uint8_t, 4>{0, 1, 2, 4}[pick(rng)];
                }
        const std::size_t width = static_cast<std::size_t>(trial % 5);
        const RegionPartition p = partition_regions(l, brain, width);
        expect_disjoint_cover(p);
        Mask band = oracle::chebyshev_band(tumor_of(l), (width + 1) / 2);
        for (std::size_t i = 0; i < band.size(); ++i) {
            band[i] = band[i] && brain[i];
            EXPECT_EQ(p.s1[i], !brain[i]);
            if (l[i] != 0) { EXPECT_TRUE(p.s3[i] || p.s4[i]); }
        }
        EXPECT_EQ(p.s4, band);
    }
}

TEST(ContourBand, EmptyAndZeroWidth) {
    EXPECT_EQ(count_set(extract_contour_band(Mask(1, 5, 5, 0), 4)), 0u);
    const Mask one = tumor_of(centered_square(5, 1, 1));
    EXPECT_EQ(count_set(extract_contour_band(one, 0)), 0u);
}

TEST(ContourBand, SinglePixelWidthTwo) {
    const Mask one = tumor_of(centered_square(7, 1, 1));
    const Mask band = extract_contour_band(one, 2);
    EXPECT_EQ(count_set(band), 9u);
    EXPECT_EQ(band, oracle::chebyshev_band(one, 1));
}

TEST(ComputeP2, Examples) {
    EXPECT_EQ(compute_p2(1.5, 1.0, 1000, 30000), 0.05);
    EXPECT_EQ(compute_p2(1.0, 1.0, 700, 700), 1.0);
    EXPECT_EQ(compute_p2(2.0, 1.0, 900, 1000), 1.0);
    EXPECT_EQ(compute_p2(1.5, 1.0, 10, 0), 0.0);
}

TEST(Coverage, Examples) {
    EXPECT_EQ(coverage_check(1.5, 0.05, 50), Coverage::kPass);
    EXPECT_EQ(coverage_check(1.5, 0.01, 50), Coverage::kWarn);
    EXPECT_EQ(coverage_check(1.5, 1.0, 1), Coverage::kPass);
}

TEST(SamplingConfig, ValidationRejectsOutOfRange) {
    SamplingConfig c;
    c.alpha = 0.5;
    EXPECT_ANY_THROW(c.validate());
    c = SamplingConfig{};
    c.p3 = 1.5;
    EXPECT_ANY_THROW(c.validate());
    EXPECT_NO_THROW(SamplingConfig{}.validate());
}

TEST(SampleMatrix, AllOnesWhenEverythingSampled) {
    const RegionPartition p = partition_regions(centered_square(16, 6, 1), Mask(1, 16, 16, 1), 2);
    SamplingConfig c;
    c.p1 = c.p3 = c.p4 = 1.0;
    c.p2 = 1.0;
    std::mt19937_64 rng(1);
    const WeightMap w = sample_matrix(p, c, rng);
    for (double v : w.values()) EXPECT_EQ(v, 1.0);
}

TEST(SampleMatrix, ZeroP1ClearsBackground) {
    Mask brain(1, 8, 8, 0);
    for (std::size_t y = 2; y < 6; ++y)
        for (std::size_t x = 2; x < 6; ++x) brain(0, y, x) = 1;
    const RegionPartition p = partition_regions(LabelMap(1, 8, 8, 0), brain, 2);
    SamplingConfig c;
    c.p2 = 1.0;
    std::mt19937_64 rng(2);
    const WeightMap w = sample_matrix(p, c, rng);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w[i], brain[i] ? 1.0 : 0.0);
}

TEST(SampleMatrix, UnresolvedP2Rejected) {
    const RegionPartition p = partition_regions(LabelMap(1, 4, 4, 0), Mask(1, 4, 4, 1), 2);
    std::mt19937_64 rng(3);
    EXPECT_ANY_THROW(sample_matrix(p, SamplingConfig{}, rng));
}

TEST(SampleMatrix, BinomialCountsWithinThreeSigma) {
    RegionPartition p;
    p.s1 = p.s3 = p.s4 = Mask(1, 100, 100, 0);
    p.s2 = Mask(1, 100, 100, 1);
    SamplingConfig c;
    c.p2 = 0.05;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        const WeightMap w = sample_matrix(p, c, rng);
        for (double v : w.values()) total += v;
    }
    const double mean = total / 1000.0;
    const double sigma_of_mean = std::sqrt(10000 * 0.05 * 0.95 / 1000.0);
    EXPECT_LE(std::abs(mean - 500.0), 3.0 * sigma_of_mean);
}

TEST(SampleMatrix, DeterministicForSeed) {
    const RegionPartition p = partition_regions(centered_square(16, 6, 1), Mask(1, 16, 16, 1), 2);
    SamplingConfig c;
    c.p2 = 0.3;
    std::mt19937_64 a(5), b(5);
    EXPECT_EQ(sample_matrix(p, c, a), sample_matrix(p, c, b));
}

TEST(StageConfigs, SupportAndContourWeights) {
    const LabelMap labels = centered_square(16, 6, 4);
    Mask brain(1, 16, 16, 1);
    brain(0, 0, 0) = 0;
    const RegionPartition p = partition_regions(labels, brain, 2);
    const StageSampling s = stage_sampling_configs();
    EXPECT_EQ(s.unet1.alpha, 2.0);
    EXPECT_FALSE(s.unet1.p2.has_value());
    std::mt19937_64 rng(9);
    const WeightMap w1 = sample_matrix(p, resolve_sampling(s.unet1, p), rng);
    const WeightMap w2 = sample_matrix(p, resolve_sampling(s.unet2, p), rng);
    for (std::size_t i = 0; i < w1.size(); ++i) {
        if (p.s1[i]) {
            EXPECT_EQ(w1[i], 0.0);
            EXPECT_EQ(w2[i], 0.0);
        }
        if (p.s4[i]) { EXPECT_EQ(w1[i], 2.0); }
        if (!p.s3[i] && !p.s4[i]) { EXPECT_EQ(w2[i], 0.0); }
        if (p.s3[i] || p.s4[i]) { EXPECT_EQ(w2[i], 1.0); }
    }
}

TEST(StageConfigs, ResolvedP2FollowsBalanceRule) {
    const RegionPartition p = partition_regions(centered_square(16, 6, 1), Mask(1, 16, 16, 1), 2);
    const SamplingConfig r = resolve_sampling(stage_sampling_configs().unet1, p);
    ASSERT_TRUE(r.p2.has_value());
    EXPECT_DOUBLE_EQ(*r.p2, 1.5 * 16.0 / 192.0);
}

TEST(CrossEntropy, HalfHalfIsLnTwo) {
    const Tensor y(Shape{1, 2, 1, 1}, 0.5);
    const Tensor l(Shape{1, 2, 1, 1}, std::vector<double>{1.0, 0.0});
    EXPECT_NEAR(weighted_cross_entropy(y, l, WeightMap(1, 1, 1, 1.0)).item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, ExactPredictionIsZero) {
    LabelMap labels(1, 3, 3, 0);
    labels(0, 1, 1) = 2;
    const Tensor t = one_hot_substructures(labels);
    WeightMap w(1, 3, 3, 0.0);
    w(0, 1, 1) = 2.0;
    w(0, 0, 0) = 1.0;
    EXPECT_EQ(weighted_cross_entropy(t, t, w).item(), 0.0);
}

TEST(CrossEntropy, UnitWeightsEqualMeanCrossEntropy) {
    std::mt19937_64 rng(10);
    const Tensor y = softmax_channels(oracle::random_tensor({2, 4, 6, 5}, rng, 2.0));
    LabelMap classes(2, 6, 5), labels(2, 6, 5);
    std::uniform_int_distribution<int> pick(0, 3);
    for (std::size_t i = 0; i < classes.size(); ++i) {
        classes[i] = static_cast<std::uint8_t>(pick(rng));
        labels[i] = std::array<std::uint8_t, 4>{0, 1, 2, 4}[classes[i]];
    }
    const double loss = weighted_cross_entropy(y, one_hot_substructures(labels), WeightMap(2, 6, 5, 1.0)).item();
    EXPECT_NEAR(loss, oracle::mean_cross_entropy(y, classes), 1e-12);
}

TEST(CrossEntropy, ZeroWeightPixelsAreInert) {
    std::mt19937_64 rng(11);
    Tensor logits = oracle::random_tensor({1, 2, 8, 8}, rng);
    LabelMap labels(1, 8, 8, 0);
    WeightMap w(1, 8, 8, 0.0);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < w.size(); ++i) {
        labels[i] = coin(rng);
        w[i] = coin(rng) ? 1.0 : 0.0;
    }
    w[0] = 1.0;
    const Tensor target = one_hot_whole_tumor(labels);
    const double base = weighted_cross_entropy(softmax_channels(logits), target, w).item();
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] != 0.0) continue;
        logits.data()[i] += 37.0;
        logits.data()[64 + i] -= 11.0;
    }
    EXPECT_EQ(weighted_cross_entropy(softmax_channels(logits), target, w).item(), base);
}

TEST(CrossEntropy, ZeroWeightPixelsGetNoGradient) {
    std::mt19937_64 rng(12);
    Tensor logits = oracle::random_tensor({1, 2, 4, 4}, rng);
    logits.set_requires_grad(true);
    WeightMap w(1, 4, 4, 0.0);
    w(0, 1, 2) = 1.0;
    weighted_cross_entropy(softmax_channels(logits), one_hot_whole_tumor(LabelMap(1, 4, 4, 0)), w).backward();
    for (std::size_t i = 0; i < 16; ++i) {
        if (i == 6) continue;
        EXPECT_EQ(logits.grad()[i], 0.0);
        EXPECT_EQ(logits.grad()[16 + i], 0.0);
    }
    EXPECT_NE(logits.grad()[6], 0.0);
}

TEST(CrossEntropy, InvariantToUniformWeightScale) {
    std::mt19937_64 rng(13);
    const Tensor y = softmax_channels(oracle::random_tensor({1, 2, 4, 4}, rng));
    const Tensor t = one_hot_whole_tumor(centered_square(4, 2, 1));
    const double a = weighted_cross_entropy(y, t, WeightMap(1, 4, 4, 1.0)).item();
    const double b = weighted_cross_entropy(y, t, WeightMap(1, 4, 4, 2.0)).item();
    EXPECT_NEAR(a, b, 1e-15);
}

TEST(CrossEntropy, AllZeroWeightsAreDegenerate) {
    const Tensor y(Shape{1, 2, 2, 2}, 0.5);
    EXPECT_THROW(weighted_cross_entropy(y, y, WeightMap(1, 2, 2, 0.0)), DegenerateBatchError);
}

TEST(TotalLoss, Examples) {
    ParamSet none;
    const Tensor half = Tensor::scalar(0.5);
    EXPECT_DOUBLE_EQ(total_loss(half, half, {}, 0.0, 0.0, none).item(), 1.0);
    const std::vector<Tensor> aux(8, Tensor::scalar(1.0));
    EXPECT_DOUBLE_EQ(total_loss(half, half, aux, 0.1, 0.0, none).item(), 1.8);

    ParamSet p;
    p.add("w", Tensor(Shape{1, 1, 1, 3}, std::vector<double>{2.0, 0.0, 0.0}));
    const Tensor zero = Tensor::scalar(0.0);
    EXPECT_DOUBLE_EQ(total_loss(zero, zero, std::vector<Tensor>(2, zero), 0.1, 1.0, p).item(), 4.0);
}

TEST(OneHot, Layouts) {
    LabelMap l(1, 1, 4, std::vector<std::uint8_t>{0, 1, 2, 4});
    const Tensor wt = one_hot_whole_tumor(l);
    EXPECT_EQ(wt.shape(), (Shape{1, 2, 1, 4}));
    EXPECT_EQ(std::vector<double>(wt.data().begin(), wt.data().end()), (std::vector<double>{1, 0, 0, 0, 0, 1, 1, 1}));
    const Tensor sub = one_hot_substructures(l);
    EXPECT_EQ(sub.shape(), (Shape{1, 4, 1, 4}));
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t x = 0; x < 4; ++x) EXPECT_EQ(sub.at(0, c, 0, x), c == x ? 1.0 : 0.0);
    l(0, 0, 0) = 3;
    EXPECT_THROW(one_hot_substructures(l), InputError);
}
