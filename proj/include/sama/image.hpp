#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "sama/mask.hpp"

namespace sama {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB image.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {0, 0, 0});

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Binary netpbm (P6 / P5) readers and writers.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);
/// Any non-zero gray value counts as foreground.
BinaryMask read_pgm_mask(const std::filesystem::path& path);
void write_pgm_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Draws a rectangle outline of the given thickness inside `box`.
void draw_rect(Image& image, const Box& box, Rgb color, int thickness);

}  // namespace sama
