#pragma once

#include <filesystem>

#include "fundus/raster.hpp"

namespace fundus {

// Any PNG is accepted; colour inputs are reduced to luma for gray reads and
// gray inputs are replicated for RGB reads. 16-bit samples are truncated to 8.
Raster read_png_gray(const std::filesystem::path& path);
RgbRaster read_png_rgb(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Raster& img);
void write_png(const std::filesystem::path& path, const RgbRaster& img);
// Stored as 8-bit gray with {0,255}.
void write_png(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_png_mask(const std::filesystem::path& path);

}  // namespace fundus
