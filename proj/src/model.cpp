#include "cunet/model.hpp"

#include <cmath>

#include "cunet/errors.hpp"
#include "cunet/ops.hpp"

namespace cunet {

namespace {

Tensor scaled_normal(Shape shape, double fan_in, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(fan_in));
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Tensor checked(Tensor t, const std::string& where) {
    check_finite(t, where);
    return t;
}

}  // namespace

void CUNetConfig::validate() const {
    if (in_channels == 0 || base_channels == 0) throw ConfigError("channel counts must be positive");
    if (depth < 1 || depth > 8) throw ConfigError("depth must be in 1..8, got " + std::to_string(depth));
    if (branch1_classes < 2) throw ConfigError("branch1_classes must be at least 2");
    if (branch2_classes != 4) throw ConfigError("branch2_classes must be 4 (background, NCR/NET, ED, ET)");
}

void CUNetConfig::check_input_extents(std::size_t height, std::size_t width) const {
    const std::size_t m = std::size_t{1} << depth;
    if (height == 0 || width == 0 || height % m != 0 || width % m != 0)
        throw ContractError("input extents " + std::to_string(height) + "x" + std::to_string(width) +
                            " not divisible by 2^depth = " + std::to_string(m));
}

Conv2d::Conv2d(ParamSet& params, const std::string& name, std::size_t in_c, std::size_t out_c,
               std::size_t kernel, std::mt19937_64& rng, double gain)
    : kernel_(scaled_normal(Shape{out_c, in_c, kernel, kernel}, static_cast<double>(in_c * kernel * kernel), gain,
                            rng)),
      bias_(Shape{out_c, 1, 1, 1}),
      pad_(kernel / 2) {
    params.add(name + ".weight", kernel_);
    params.add(name + ".bias", bias_);
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, kernel_, bias_, 1, pad_); }

Upsample2x::Upsample2x(ParamSet& params, const std::string& name, std::size_t in_c, std::size_t out_c,
                       std::mt19937_64& rng)
    // each output pixel sees (k/stride)^2 = 4 taps per input channel
    : kernel_(scaled_normal(Shape{in_c, out_c, 4, 4}, static_cast<double>(in_c * 4), kLinearGain, rng)) {
    params.add(name + ".weight", kernel_);
}

Tensor Upsample2x::forward(const Tensor& x) const { return conv_transpose2d(x, kernel_, 2); }

ResidualBlock::ResidualBlock(ParamSet& params, const std::string& name, std::size_t in_c, std::size_t out_c,
                             std::mt19937_64& rng)
    : name_(name), conv1_(params, name + ".conv1", in_c, out_c, 3, rng), conv2_(params, name + ".conv2", out_c, out_c, 3, rng, kResidualGain) {
    if (in_c != out_c) projection_.emplace(params, name + ".proj", in_c, out_c, 1, rng, kLinearGain);
}

Tensor ResidualBlock::forward(const Tensor& x) const {
    Tensor h = checked(relu(conv1_.forward(x)), name_ + ".conv1");
    h = checked(conv2_.forward(h), name_ + ".conv2");
    const Tensor shortcut = projection_ ? checked(projection_->forward(x), name_ + ".proj") : x;
    return relu(add(h, shortcut));
}

UNet::UNet(ParamSet& params, const std::string& name, std::size_t in_channels, std::size_t base_channels,
           std::size_t depth, std::size_t classes, std::vector<std::size_t> extra_channels, std::mt19937_64& rng)
    : name_(name), base_(base_channels), extra_(std::move(extra_channels)) {
    extra_.resize(depth, 0);
    for (std::size_t k = 0; k < depth; ++k) {
        const std::size_t in_c = (k == 0 ? in_channels : channels_at(k - 1)) + extra_[k];
        encoder_in_.push_back(in_c);
        encoders_.emplace_back(params, name + ".enc" + std::to_string(k), in_c, channels_at(k), rng);
    }
    bottleneck_ = ResidualBlock(params, name + ".bottleneck", channels_at(depth - 1), channels_at(depth), rng);
    up_.resize(depth);
    decoders_.resize(depth);
    for (std::size_t k = depth; k-- > 0;) {
        up_[k] = Upsample2x(params, name + ".up" + std::to_string(k), channels_at(k + 1), channels_at(k), rng);
        decoders_[k] =
            ResidualBlock(params, name + ".dec" + std::to_string(k), 2 * channels_at(k), channels_at(k), rng);
    }
    for (std::size_t r = depth; r >= 1; --r) {
        const std::string head = name + ".aux" + std::to_string(r);
        std::vector<Upsample2x> chain;
        for (std::size_t s = r; s >= 1; --s)
            chain.emplace_back(params, head + ".up" + std::to_string(s), channels_at(s), channels_at(s - 1), rng);
        aux_upsample_.push_back(std::move(chain));
        aux_heads_.emplace_back(params, head + ".head", channels_at(0), classes, 1, rng, kHeadGain);
    }
    branch_head_ = Conv2d(params, name + ".branch_head", channels_at(0), classes, 1, rng, kHeadGain);
}

UNet::Output UNet::forward(const Tensor& x, const std::vector<Tensor>& extra) const {
    const std::size_t depth = encoders_.size();
    std::vector<Tensor> skips(depth);
    Tensor h = x;
    for (std::size_t k = 0; k < depth; ++k) {
        if (k > 0) h = max_pool2(h);
        if (extra_[k] > 0) {
            if (k >= extra.size() || !extra[k].defined())
                throw ContractError(name_ + ": missing between-net input at level " + std::to_string(k));
            h = concat_channels(h, extra[k]);
        }
        h = encoders_[k].forward(h);
        skips[k] = h;
    }
    h = bottleneck_.forward(max_pool2(h));

    Output out;
    out.decoder.resize(depth);
    std::vector<Tensor> taps;  // decoding-layer inputs, deepest first
    for (std::size_t k = depth; k-- > 0;) {
        taps.push_back(h);
        const Tensor up = checked(up_[k].forward(h), name_ + ".up" + std::to_string(k));
        h = decoders_[k].forward(concat_channels(up, skips[k]));
        out.decoder[k] = h;
    }
    for (std::size_t i = 0; i < taps.size(); ++i) {
        Tensor a = taps[i];
        for (const auto& u : aux_upsample_[i]) a = u.forward(a);
        a = checked(aux_heads_[i].forward(a), name_ + ".aux" + std::to_string(depth - i));
        out.aux.push_back(softmax_channels(a));
    }
    out.probabilities = softmax_channels(checked(branch_head_.forward(h), name_ + ".branch_head"));
    return out;
}

CUNet::CUNet(const CUNetConfig& config, bool between_net_connections) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    const std::size_t depth = config_.depth;
    unet1_ = UNet(params_, "unet1", config_.in_channels, config_.base_channels, depth, config_.branch1_classes, {},
                  rng);
    std::vector<std::size_t> extra(depth, 0);
    if (between_net_connections)
        for (std::size_t k = 1; k < depth; ++k) extra[k] = config_.channels_at(k);
    unet2_ = UNet(params_, "unet2", config_.channels_at(0), config_.base_channels, depth, config_.branch2_classes,
                  extra, rng);
}

CascadeOutputs CUNet::forward(const Tensor& input) const {
    const Shape& s = input.shape();
    if (s.c != config_.in_channels)
        throw ContractError("input has " + std::to_string(s.c) + " channels, model expects " +
                            std::to_string(config_.in_channels));
    config_.check_input_extents(s.h, s.w);
    check_finite(input, "input");

    auto first = unet1_.forward(input);
    auto second = unet2_.forward(first.decoder[0], first.decoder);
    CascadeOutputs out;
    out.branch1 = std::move(first.probabilities);
    out.branch2 = std::move(second.probabilities);
    out.aux = std::move(first.aux);
    for (auto& a : second.aux) out.aux.push_back(std::move(a));
    return out;
}

std::size_t single_unet_parameter_count(const CUNetConfig& config) {
    ParamSet params;
    std::mt19937_64 rng(config.seed);
    UNet net(params, "unet", config.in_channels, config.base_channels, config.depth, config.branch2_classes, {},
             rng);
    return params.scalar_count();
}

LabelMap fuse_predictions(const Tensor& branch1, const Tensor& branch2, const Mask& nonbrain_mask) {
    const Shape& s1 = branch1.shape();
    const Shape& s2 = branch2.shape();
    if (s1.c < 2 || s2.c != 4) throw ContractError("fuse_predictions: expected 2+ and 4 channels");
    if (s1.n != s2.n || s1.h != s2.h || s1.w != s2.w || !nonbrain_mask.same_extents(s1.n, s1.h, s1.w))
        throw ContractError("fuse_predictions: extents differ " + s1.str() + " vs " + s2.str());
    static constexpr std::uint8_t kLabels[3] = {1, 2, 4};
    LabelMap out(s1.n, s1.h, s1.w, 0);
    for (std::size_t n = 0; n < s1.n; ++n) {
        for (std::size_t y = 0; y < s1.h; ++y) {
            for (std::size_t x = 0; x < s1.w; ++x) {
                if (nonbrain_mask(n, y, x)) continue;
                std::size_t best1 = 0;
                for (std::size_t c = 1; c < s1.c; ++c)
                    if (branch1.at(n, c, y, x) > branch1.at(n, best1, y, x)) best1 = c;
                if (best1 == 0) continue;
                std::size_t best2 = 1;
                for (std::size_t c = 2; c < 4; ++c)
                    if (branch2.at(n, c, y, x) > branch2.at(n, best2, y, x)) best2 = c;
                out(n, y, x) = kLabels[best2 - 1];
            }
        }
    }
    return out;
}

}  // namespace cunet
