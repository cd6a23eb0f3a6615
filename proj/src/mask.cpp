#include "sama/mask.hpp"

#include "sama/errors.hpp"

#include <algorithm>
#include <numeric>

namespace sama {

BinaryMask::BinaryMask(int width, int height) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw InputError("mask dimensions must be non-negative");
  bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

long BinaryMask::count() const {
  return static_cast<long>(std::count_if(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; }));
}

std::optional<Box> BinaryMask::bounds() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return Box{x0, y0, x1 + 1, y1 + 1};
}

void BinaryMask::fill_box(const Box& box) {
  const int xa = std::max(0, box.x0), ya = std::max(0, box.y0);
  const int xb = std::min(width_, box.x1), yb = std::min(height_, box.y1);
  for (int y = ya; y < yb; ++y) {
    for (int x = xa; x < xb; ++x) set(x, y);
  }
}

void MaskTrack::validate() const {
  for (const BinaryMask& m : masks) {
    if (!m.same_shape(masks.front())) throw InputError("mask track frames differ in resolution");
  }
}

RleMask rle_encode(const BinaryMask& mask) {
  RleMask out{mask.width(), mask.height(), {}};
  std::uint8_t current = 0;
  std::int64_t run = 0;
  for (std::uint8_t b : mask.bits()) {
    const std::uint8_t v = b != 0 ? 1 : 0;
    if (v != current) {
      out.counts.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  out.counts.push_back(run);
  return out;
}

BinaryMask rle_decode(const RleMask& rle) {
  if (rle.width < 0 || rle.height < 0) throw InputError("rle: negative dimensions");
  BinaryMask mask(rle.width, rle.height);
  auto bits = mask.bits();
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::int64_t run : rle.counts) {
    if (run < 0) throw InputError("rle: negative run length");
    if (pos + static_cast<std::size_t>(run) > bits.size()) throw InputError("rle: runs exceed frame size");
    std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += static_cast<std::size_t>(run);
    value ^= 1;
  }
  if (pos != bits.size()) throw InputError("rle: runs cover " + std::to_string(pos) + " of " + std::to_string(bits.size()) + " pixels");
  return mask;
}

long track_pixel_count(const MaskTrack& track) {
  return std::accumulate(track.masks.begin(), track.masks.end(), 0L,
                         [](long acc, const BinaryMask& m) { return acc + m.count(); });
}

}  // namespace sama
