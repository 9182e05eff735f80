#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sonar_oi/raster.hpp"

namespace sonar_oi {

struct Rgb {
  std::uint8_t r, g, b;
};

/// 8-bit grayscale PNG. Grid row 0 becomes the first (top) image row unless flip_rows is set.
void write_png_gray(const std::filesystem::path& path, const Grid<std::uint8_t>& img, bool flip_rows = false);
/// 8-bit palette PNG; pixel values are palette indices.
void write_png_indexed(const std::filesystem::path& path, const Grid<std::uint8_t>& img,
                       const std::vector<Rgb>& palette, bool flip_rows = false);
/// Reads 8-bit gray or palette PNGs as raw sample/index values.
[[nodiscard]] Grid<std::uint8_t> read_png(const std::filesystem::path& path, bool flip_rows = false);

/// Binary raster (0/1) to 0/255 grayscale and back (>= 128 counts as set).
void write_binary_png(const std::filesystem::path& path, const BinaryRaster& img);
[[nodiscard]] BinaryRaster read_binary_png(const std::filesystem::path& path);

}  // namespace sonar_oi
