#include "cunet/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cunet/errors.hpp"

namespace cunet {

Rgb label_color(std::uint8_t label) {
    switch (label) {
        case 0: return {128, 0, 128};
        case 1: return {0, 255, 0};
        case 2: return {0, 0, 255};
        case 4: return {255, 255, 0};
        default: throw InputError("label outside {0,1,2,4}: " + std::to_string(label));
    }
}

std::string encode_overlay_ppm(const VolumeSample& sample, const LabelMap& labels) {
    if (!labels.same_extents(1, sample.height, sample.width))
        throw ContractError("render_overlay: label extents differ from the sample");
    const std::size_t P = sample.height * sample.width;
    const float* flair = sample.image.data();
    const auto [lo, hi] = std::minmax_element(flair, flair + P);
    const double range = *hi - *lo;

    std::string out = "P6\n" + std::to_string(sample.width) + " " + std::to_string(sample.height) + "\n255\n";
    out.reserve(out.size() + 3 * P);
    for (std::size_t i = 0; i < P; ++i) {
        const double gray = range > 0.0 ? 255.0 * (flair[i] - *lo) / range : 0.0;
        const Rgb color = label_color(labels[i]);
        for (std::uint8_t c : color)
            out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(0.5 * gray + 0.5 * c))));
    }
    return out;
}

void render_overlay(const VolumeSample& sample, const LabelMap& labels, const std::string& path) {
    const std::string bytes = encode_overlay_ppm(sample, labels);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace cunet
