#pragma once

#include "del/render.hpp"

#include <filesystem>

namespace del {

double srgb_to_linear(double s);
double linear_to_srgb(double l);

/// 8-bit sRGB PNG <-> linear ImageBuffer. Values are clamped to [0, 1] on write.
void write_png(const std::filesystem::path& path, const ImageBuffer& image);
ImageBuffer read_png(const std::filesystem::path& path);

/// The image a write_png / read_png round trip would return.
ImageBuffer quantize_8bit(const ImageBuffer& image);

} // namespace del
