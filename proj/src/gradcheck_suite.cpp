#include "cunet/gradcheck_suite.hpp"

#include <functional>
#include <random>

#include "cunet/gradcheck.hpp"
#include "cunet/lws.hpp"
#include "cunet/model.hpp"
#include "cunet/ops.hpp"
#include "cunet/train.hpp"

namespace cunet {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor randn(Shape s, Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor t(s);
    for (double& v : t.data()) v = d(rng);
    return t;
}

FdReport check(const std::function<Tensor()>& fn, std::vector<Tensor> wrt, double step,
               std::size_t max_coords = 0, std::uint64_t seed = 0, double floor = kDefaultDenominatorFloor) {
    return finite_difference_check(fn, std::move(wrt), step, max_coords, seed, floor);
}

// Biases start at zero, which parks pre-activations over dead input regions exactly on the ReLU kink.
void jitter_biases(ParamSet& params, Rng& rng) {
    std::normal_distribution<double> d(0.0, 0.1);
    for (auto& e : params.entries())
        if (e.name.ends_with(".bias"))
            for (double& v : e.value.data()) v = d(rng);
}

using Case = std::function<FdReport(Rng&, double step, std::uint64_t seed)>;

struct NamedCase {
    std::string name;
    double floor;
    Case run;
};

std::vector<NamedCase> cases() {
    std::vector<NamedCase> out;
    out.push_back({"conv2d", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
        const std::size_t stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
        const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 3, 6), pick(rng, 3, 6)};
        const Tensor x = randn(xs, rng), w = randn({pick(rng, 1, 3), xs.c, k, k}, rng);
        const Tensor b = randn({w.shape().n, 1, 1, 1}, rng);
        const Tensor r = randn(conv2d(x, w, b, stride, pad).shape(), rng);
        return check([&] { return sum(mul(conv2d(x, w, b, stride, pad), r)); }, {x, w, b}, step);
    }});
    out.push_back({"conv_transpose2d", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        static constexpr std::size_t kConfigs[3][2] = {{4, 2}, {2, 2}, {3, 1}};  // kernel, stride
        const auto& cfg = kConfigs[pick(rng, 0, 2)];
        const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
        const Tensor x = randn(xs, rng), w = randn({xs.c, pick(rng, 1, 3), cfg[0], cfg[0]}, rng);
        const Tensor r = randn(conv_transpose2d(x, w, cfg[1]).shape(), rng);
        return check([&] { return sum(mul(conv_transpose2d(x, w, cfg[1]), r)); }, {x, w}, step);
    }});
    out.push_back({"relu", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const Tensor x = randn({2, 2, 3, 3}, rng), r = randn({2, 2, 3, 3}, rng);
        return check([&] { return sum(mul(relu(x), r)); }, {x}, step);
    }});
    out.push_back({"max_pool2", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const Tensor x = randn({2, 2, 4, 6}, rng), r = randn({2, 2, 2, 3}, rng);
        return check([&] { return sum(mul(max_pool2(x), r)); }, {x}, step);
    }});
    out.push_back({"concat_add_scale", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const Tensor a = randn({2, 2, 3, 3}, rng), b = randn({2, 3, 3, 3}, rng), c = randn({2, 5, 3, 3}, rng);
        const Tensor r = randn({2, 5, 3, 3}, rng);
        return check([&] { return sum(mul(scale(add(concat_channels(a, b), c), 0.7), r)); }, {a, b, c}, step);
    }});
    out.push_back({"softmax_channels", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const Tensor x = randn({2, 4, 3, 3}, rng), r = randn({2, 4, 3, 3}, rng);
        return check([&] { return sum(mul(softmax_channels(x), r)); }, {x}, step);
    }});
    out.push_back({"weighted_cross_entropy", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const Shape s{2, 4, 4, 4};
        const Tensor logits = randn(s, rng);
        LabelMap labels(2, 4, 4);
        static constexpr std::uint8_t kVocab[4] = {0, 1, 2, 4};
        for (auto& v : labels.values()) v = kVocab[pick(rng, 0, 3)];
        WeightMap w(2, 4, 4);
        for (auto& v : w.values()) v = static_cast<double>(pick(rng, 0, 2));
        w[0] = 1.0;
        const Tensor target = one_hot_substructures(labels);
        return check([&] { return weighted_cross_entropy(softmax_channels(logits), target, w); }, {logits}, step);
    }});
    out.push_back({"sum_squares", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        const std::vector<Tensor> ps{randn({2, 1, 2, 2}, rng), randn({3, 1, 1, 1}, rng)};
        return check([&] { return sum_squares(ps); }, ps, step);
    }});
    out.push_back({"residual_block", kDefaultDenominatorFloor, [](Rng& rng, double step, std::uint64_t) {
        ParamSet params;
        const std::size_t in_c = pick(rng, 1, 3);
        const std::size_t out_c = pick(rng, 0, 1) ? in_c : pick(rng, 1, 3);
        ResidualBlock block(params, "block", in_c, out_c, rng);
        jitter_biases(params, rng);
        const Tensor x = randn({2, in_c, 4, 4}, rng), r = randn({2, out_c, 4, 4}, rng);
        auto wrt = params.tensors();
        wrt.push_back(x);
        return check([&] { return sum(mul(block.forward(x), r)); }, wrt, step);
    }});
    out.push_back({"cascade_loss", kComposedLossFloor, [](Rng& rng, double step, std::uint64_t seed) {
        CUNetConfig cfg;
        cfg.base_channels = 2;
        cfg.depth = 2;
        cfg.seed = seed;
        CUNet model(cfg);
        jitter_biases(model.params(), rng);
        const std::size_t size = 8;
        const Tensor x = randn({2, 4, size, size}, rng);
        // Brain covers the centre; a small random lesion inside it.
        Mask brain(2, size, size, 0);
        LabelMap labels(2, size, size, 0);
        static constexpr std::uint8_t kVocab[3] = {1, 2, 4};
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t y = 1; y + 1 < size; ++y)
                for (std::size_t xx = 1; xx + 1 < size; ++xx) {
                    brain(n, y, xx) = 1;
                    if (y >= 3 && y <= 5 && xx >= 3 && xx <= 5) labels(n, y, xx) = kVocab[pick(rng, 0, 2)];
                }
        const BatchWeights w = draw_batch_weights(labels, brain, stage_sampling_configs(), 2, rng);
        auto wrt = model.params().tensors();
        return check(
            [&] {
                const CascadeOutputs outputs = model.forward(x);
                return cascade_loss(outputs, labels, w.w1, w.w2, 0.1, 1e-3, model.params()).total;
            },
            wrt, step, 6, seed, kComposedLossFloor);
    }});
    return out;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
    std::vector<std::string> names;
    for (const auto& c : cases()) names.push_back(c.name);
    return names;
}

std::vector<GradcheckResult> run_gradcheck_suite(std::size_t seeds, double step, std::uint64_t first_seed) {
    std::vector<GradcheckResult> results;
    for (const auto& c : cases()) {
        GradcheckResult r;
        r.name = c.name;
        r.denominator_floor = c.floor;
        for (std::size_t i = 0; i < seeds; ++i) {
            const std::uint64_t seed = first_seed + i;
            Rng rng(seed);
            const FdReport rep = c.run(rng, step, seed);
            r.coords += rep.coords_checked;
            r.kinks_skipped += rep.kinks_skipped;
            ++r.seeds;
            if (rep.max_rel_error > r.max_rel_error || r.worst.empty()) {
                r.max_rel_error = rep.max_rel_error;
                r.worst = "seed " + std::to_string(seed) + " " + rep.worst;
            }
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace cunet
