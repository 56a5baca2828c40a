#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cunet/grid.hpp"
#include "cunet/tensor.hpp"

namespace cunet {

inline constexpr std::size_t kModalities = 4;
enum class Modality : std::size_t { kFlair = 0, kT1 = 1, kT1ce = 2, kT2 = 3 };

/// One 2-D training case: four modality planes, labels over {0,1,2,4} and a brain mask.
struct VolumeSample {
    std::string id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> image;  // modality-major, kModalities × height × width
    LabelMap labels;           // 1 × height × width
    Mask brain_mask;           // 1 × height × width

    VolumeSample() = default;
    VolumeSample(std::string id, std::size_t height, std::size_t width);

    float& pixel(Modality m, std::size_t y, std::size_t x) {
        return image[(static_cast<std::size_t>(m) * height + y) * width + x];
    }
    float pixel(Modality m, std::size_t y, std::size_t x) const {
        return image[(static_cast<std::size_t>(m) * height + y) * width + x];
    }

    bool has_tumor() const;
    /// Throws InputError on any broken invariant (extents, vocabulary, label outside brain).
    void validate() const;

    bool operator==(const VolumeSample&) const = default;
};

struct PhantomOptions {
    std::size_t size = 64;
    double q_tumor = 0.7;
};

/// Elliptical brain with, with probability q_tumor, a nested lesion:
/// edema (2) containing a core split into necrosis (1) and an enhancing rim (4).
/// Background intensities are exactly 0 in every modality; brain pixels are
/// strictly positive.
VolumeSample generate_phantom(std::mt19937_64& rng, const PhantomOptions& options);

/// Phantoms "case00000", "case00001", … each drawn from its own seeded stream.
std::vector<VolumeSample> generate_phantoms(std::size_t count, const PhantomOptions& options, std::uint64_t seed);

/// Per-modality z-score over brain pixels (σ floored at 1e-8); non-brain pixels set to 0.
VolumeSample normalize_intensity(const VolumeSample& sample);

/// Pixels where every modality equals 0.
Mask extract_nonbrain_mask(const VolumeSample& sample);

/// `quarter_turns` counter-clockwise 90° rotations, then an optional
/// horizontal flip; applied identically to image, labels and mask.
VolumeSample transform(const VolumeSample& sample, unsigned quarter_turns, bool flip);

/// Random right-angle rotation (uniform over 0..3 quarter turns) and a
/// horizontal flip with probability 0.5.
VolumeSample augment(const VolumeSample& sample, std::mt19937_64& rng);

enum class SplitKind { kTrain, kVal, kTest };
std::string_view split_name(SplitKind kind);

/// Drops tumor-free samples from the training split; other splits are returned unchanged.
std::vector<VolumeSample> filter_tumorless(std::vector<VolumeSample> cases, SplitKind kind);

struct DatasetSplit {
    std::vector<std::string> train, val, test;
};

/// Seeded 3:1:1 shuffle split; validation and test each get round(n/5) cases.
DatasetSplit split_dataset(std::vector<std::string> ids, std::mt19937_64& rng);

// Case file layout (little-endian):
//   "CUNS"
//   u32 len + id bytes; u32 4 + u32 height; u32 4 + u32 width
//   f32 image planes (FLAIR, T1, T1ce, T2), u8 labels, u8 brain mask
std::string encode_sample(const VolumeSample& sample);
VolumeSample decode_sample(std::string_view bytes);
void write_sample(const std::string& path, const VolumeSample& sample);
VolumeSample read_sample(const std::string& path);

/// Writes `<dir>/{train,val,test}/<id>.cuns` for the cases named in `split`.
void write_dataset(const std::string& dir, const DatasetSplit& split, const std::vector<VolumeSample>& samples);
/// Reads every case file of one split, ordered by file name.
std::vector<VolumeSample> read_split(const std::string& dir, SplitKind kind);

/// Stacks samples into a b × 4 × h × w tensor.
Tensor to_tensor(const std::vector<VolumeSample>& samples);
LabelMap stack_labels(const std::vector<VolumeSample>& samples);
Mask stack_brain_masks(const std::vector<VolumeSample>& samples);

}  // namespace cunet
