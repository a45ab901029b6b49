#pragma once

#include <string>

#include "gms/core_types.hpp"

namespace gms {

// Decodes PNG or PGM (sniffed from magic bytes); pixel values normalized to
// [0,1]. PNG palette/alpha/16-bit inputs are reduced to 8-bit gray or RGB.
ImageGrid load_image(const std::string& path);

// 8-bit encoders; values are clamped and rounded.
void save_image_png(const ImageGrid& img, const std::string& path);
void save_image_pgm(const ImageGrid& img, const std::string& path);

}  // namespace gms
