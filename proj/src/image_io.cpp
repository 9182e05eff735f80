#include "sonar_oi/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "sonar_oi/error.hpp"

namespace sonar_oi {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("cannot open " + path.string());
  return f;
}

void write_png_impl(const std::filesystem::path& path, const Grid<std::uint8_t>& img, bool flip_rows,
                    const std::vector<Rgb>* palette) {
  if (img.rows() == 0 || img.cols() == 0) throw InvalidArgument("write_png: empty image");
  FilePtr f = open_file(path, "wb");
  std::vector<png_color> colors;
  if (palette) {
    for (const auto& c : *palette) colors.push_back({c.r, c.g, c.b});
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng error writing " + path.string());
  }
  png_init_io(png, f.get());
  const int color_type = palette ? PNG_COLOR_TYPE_PALETTE : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()), static_cast<png_uint_32>(img.rows()), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) {
    png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
  }
  png_write_info(png, info);
  const auto* base = img.data().data();
  for (int r = 0; r < img.rows(); ++r) {
    const int src = flip_rows ? img.rows() - 1 - r : r;
    png_write_row(png, const_cast<png_bytep>(base + static_cast<std::size_t>(src) * img.cols()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const Grid<std::uint8_t>& img, bool flip_rows) {
  write_png_impl(path, img, flip_rows, nullptr);
}

void write_png_indexed(const std::filesystem::path& path, const Grid<std::uint8_t>& img,
                       const std::vector<Rgb>& palette, bool flip_rows) {
  for (auto v : img.data()) {
    if (v >= palette.size()) throw InvalidArgument("write_png_indexed: value outside palette");
  }
  write_png_impl(path, img, flip_rows, &palette);
}

Grid<std::uint8_t> read_png(const std::filesystem::path& path, bool flip_rows) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng error reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth != 8 || (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_PALETTE)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: only 8-bit gray or palette images are supported: " + path.string());
  }
  Grid<std::uint8_t> img(static_cast<int>(height), static_cast<int>(width));
  std::vector<png_byte> row(width);
  for (int r = 0; r < img.rows(); ++r) {
    png_read_row(png, row.data(), nullptr);
    const int dst = flip_rows ? img.rows() - 1 - r : r;
    for (int c = 0; c < img.cols(); ++c) img(dst, c) = row[static_cast<std::size_t>(c)];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_binary_png(const std::filesystem::path& path, const BinaryRaster& img) {
  Grid<std::uint8_t> out(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i) out.data()[i] = img.data()[i] ? 255 : 0;
  write_png_gray(path, out);
}

BinaryRaster read_binary_png(const std::filesystem::path& path) {
  Grid<std::uint8_t> img = read_png(path);
  for (auto& v : img.data()) v = v >= 128 ? 1 : 0;
  return img;
}

}  // namespace sonar_oi
