#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cunet/grid.hpp"
#include "cunet/optim.hpp"
#include "cunet/tensor.hpp"

namespace cunet {

struct CUNetConfig {
    std::size_t in_channels = 4;
    std::size_t base_channels = 16;
    /// Number of 2× down-samplings per U-Net.
    std::size_t depth = 4;
    /// Tumor vs non-tumor.
    std::size_t branch1_classes = 2;
    /// Background, NCR/NET, ED, ET.
    std::size_t branch2_classes = 4;
    std::uint64_t seed = 0;

    void validate() const;
    /// Throws ContractError unless both extents are divisible by 2^depth.
    void check_input_extents(std::size_t height, std::size_t width) const;
    std::size_t channels_at(std::size_t level) const { return base_channels << level; }
    std::size_t aux_head_count() const { return 2 * depth; }
};

/// Initialization gains: weights ~ N(0, gain²/fan_in).
inline constexpr double kReluGain = 1.4142135623730951;  // He
inline constexpr double kLinearGain = 1.0;
inline constexpr double kResidualGain = 0.25;  // residual branches start small
inline constexpr double kHeadGain = 0.1;       // near-uniform initial predictions

/// 2-D convolution layer with bias; "same" padding for odd kernels.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamSet& params, const std::string& name, std::size_t in_c, std::size_t out_c, std::size_t kernel,
           std::mt19937_64& rng, double gain = kReluGain);
    Tensor forward(const Tensor& x) const;

    const Tensor& kernel() const { return kernel_; }
    const Tensor& bias() const { return bias_; }

private:
    Tensor kernel_;
    Tensor bias_;
    std::size_t pad_ = 0;
};

/// ×2 up-sampling transposed convolution (kernel 4, stride 2, padding 1), no bias.
class Upsample2x {
public:
    Upsample2x() = default;
    Upsample2x(ParamSet& params, const std::string& name, std::size_t in_c, std::size_t out_c, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;

private:
    Tensor kernel_;
};

/// y = relu(conv3×3(relu(conv3×3(x))) + shortcut(x)); the shortcut is the
/// identity when channel counts match and a 1×1 convolution otherwise.
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(ParamSet& params, const std::string& name, std::size_t in_c, std::size_t out_c,
                  std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;

    bool has_projection() const { return projection_.has_value(); }
    const Conv2d& conv1() const { return conv1_; }
    const Conv2d& conv2() const { return conv2_; }

private:
    std::string name_;
    Conv2d conv1_;
    Conv2d conv2_;
    std::optional<Conv2d> projection_;
};

/// One encoder/decoder stage stack with residual blocks, skip connections,
/// per-level auxiliary heads and a branch head.
///
/// Auxiliary heads tap every decoding layer's input below full resolution:
/// the bottleneck output (level depth) and decoder outputs at levels
/// depth−1 … 1. A head at level r applies r ×2 transposed convolutions and a
/// 1×1 convolution, so every head emits maps at input resolution.
class UNet {
public:
    struct Output {
        Tensor probabilities;             // softmax of the branch head
        std::vector<Tensor> aux;          // softmax of each auxiliary head, deepest first
        std::vector<Tensor> decoder;      // decoder features by level, index 0 is full resolution
    };

    UNet() = default;
    /// `extra_channels[k]` channels are concatenated onto the input of encoder level k.
    UNet(ParamSet& params, const std::string& name, std::size_t in_channels, std::size_t base_channels,
         std::size_t depth, std::size_t classes, std::vector<std::size_t> extra_channels, std::mt19937_64& rng);

    /// `extra[k]` is concatenated at encoder level k when extra_channels[k] > 0.
    Output forward(const Tensor& x, const std::vector<Tensor>& extra = {}) const;

    std::size_t depth() const { return encoders_.size(); }
    std::size_t channels_at(std::size_t level) const { return base_ << level; }
    /// Input channel count of each encoder residual block.
    const std::vector<std::size_t>& encoder_input_channels() const { return encoder_in_; }
    std::size_t aux_head_count() const { return aux_upsample_.size(); }

private:
    std::string name_;
    std::size_t base_ = 0;
    std::vector<std::size_t> extra_;
    std::vector<std::size_t> encoder_in_;
    std::vector<ResidualBlock> encoders_;
    ResidualBlock bottleneck_;
    std::vector<Upsample2x> up_;            // up_[k]: level k+1 → level k
    std::vector<ResidualBlock> decoders_;   // decoders_[k]: at level k
    std::vector<std::vector<Upsample2x>> aux_upsample_;
    std::vector<Conv2d> aux_heads_;
    Conv2d branch_head_;
};

struct CascadeOutputs {
    Tensor branch1;            // b × branch1_classes × l × w, softmax
    Tensor branch2;            // b × branch2_classes × l × w, softmax
    std::vector<Tensor> aux;   // first depth from U-Net1, remainder from U-Net2
};

/// Two cascaded U-Nets. U-Net2 consumes U-Net1's full-resolution decoder
/// feature map, and each U-Net2 encoder level k ≥ 1 concatenates U-Net1's
/// decoder feature at the same resolution (between-net connections).
class CUNet {
public:
    explicit CUNet(const CUNetConfig& config, bool between_net_connections = true);

    CUNet(const CUNet&) = delete;
    CUNet& operator=(const CUNet&) = delete;
    CUNet(CUNet&&) = default;
    CUNet& operator=(CUNet&&) = default;

    CascadeOutputs forward(const Tensor& input) const;

    const CUNetConfig& config() const { return config_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const UNet& unet1() const { return unet1_; }
    const UNet& unet2() const { return unet2_; }
    std::size_t aux_head_count() const { return unet1_.aux_head_count() + unet2_.aux_head_count(); }
    std::size_t branch_head_count() const { return 2; }

private:
    CUNetConfig config_;
    ParamSet params_;
    UNet unet1_;
    UNet unet2_;
};

/// Parameter count of a single U-Net built from the same config (branch2 classes).
std::size_t single_unet_parameter_count(const CUNetConfig& config);

/// Test-time label fusion. A pixel is 0 when the non-brain mask is set or
/// branch1's argmax is non-tumor (channel 0; ties go to non-tumor). Otherwise
/// the label comes from the argmax over branch2 channels 1..3 → labels 1, 2, 4,
/// ties going to the lower label.
LabelMap fuse_predictions(const Tensor& branch1, const Tensor& branch2, const Mask& nonbrain_mask);

}  // namespace cunet
