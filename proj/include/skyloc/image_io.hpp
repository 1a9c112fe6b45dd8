#pragma once

#include "skyloc/raster.hpp"

#include <filesystem>

namespace skyloc {

/// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path &path, const RgbImage &image);
RgbImage read_ppm(const std::filesystem::path &path);

/// Binary PGM (P5, maxval 255); values are rounded and clamped to [0, 255].
void write_pgm(const std::filesystem::path &path, const GrayImage &image);
GrayImage read_pgm(const std::filesystem::path &path);

/// Reads P6 as color or P5 as gray replicated to three channels.
RgbImage read_image(const std::filesystem::path &path);

}  // namespace skyloc
