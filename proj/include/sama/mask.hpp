#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sama {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool well_ordered() const { return x0 < x1 && y0 < y1; }
  bool inside(int frame_width, int frame_height) const {
    return x0 >= 0 && y0 >= 0 && x1 <= frame_width && y1 <= frame_height;
  }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Row-major binary frame mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool on = true) { bits_[index(x, y)] = on ? 1 : 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  long count() const;
  bool empty() const { return count() == 0; }
  /// Tight bounding box of set pixels; nullopt for an empty mask.
  std::optional<Box> bounds() const;
  void fill_box(const Box& box);
  bool same_shape(const BinaryMask& other) const { return width_ == other.width_ && height_ == other.height_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x); }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Per-frame binary masks of one object across a video.
struct MaskTrack {
  std::vector<BinaryMask> masks;
  std::optional<std::string> object_id;

  std::size_t frames() const { return masks.size(); }
  /// Throws InputError unless every mask shares one resolution.
  void validate() const;
};

/// Uncompressed run-length code: row-major, alternating run lengths that
/// always start with a (possibly zero-length) run of 0 pixels.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask rle_encode(const BinaryMask& mask);
/// Throws InputError when the counts do not cover exactly width*height pixels.
BinaryMask rle_decode(const RleMask& rle);

/// Total set pixels summed over every frame of the track.
long track_pixel_count(const MaskTrack& track);

}  // namespace sama
