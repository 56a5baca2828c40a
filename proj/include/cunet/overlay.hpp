#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cunet/data.hpp"

namespace cunet {

using Rgb = std::array<std::uint8_t, 3>;

/// Label colors: 0 purple, 1 green (necrosis), 2 blue (edema), 4 yellow (enhancing).
Rgb label_color(std::uint8_t label);

/// Binary PPM (P6): FLAIR min-max scaled to gray, blended 50/50 with the
/// label color, rounded to nearest.
std::string encode_overlay_ppm(const VolumeSample& sample, const LabelMap& labels);

/// Throws IoError when `path` cannot be written.
void render_overlay(const VolumeSample& sample, const LabelMap& labels, const std::string& path);

}  // namespace cunet
