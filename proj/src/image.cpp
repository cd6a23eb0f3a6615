#include "sama/image.hpp"

#include "sama/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

namespace sama {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw InputError("image dimensions must be non-negative");
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) std::copy(fill.begin(), fill.end(), data_.begin() + static_cast<std::ptrdiff_t>(i));
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  const std::size_t i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  data_[i] = c[0];
  data_[i + 1] = c[1];
  data_[i + 2] = c[2];
}

namespace {

// Reads the netpbm header tokens (magic, width, height, maxval), skipping comments.
struct NetpbmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  NetpbmHeader h;
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  h.magic = next_token();
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw DataError("malformed netpbm header: " + path.string());
  }
  if (h.maxval <= 0 || h.maxval > 255) throw DataError("unsupported netpbm maxval in " + path.string());
  return h;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path.string());
  const NetpbmHeader h = read_header(in, path);
  if (h.magic != "P6") throw DataError("not a binary PPM (P6): " + path.string());
  Image img(h.width, h.height);
  in.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.data().size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data().size())) throw DataError("truncated PPM: " + path.string());
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image: " + path.string());
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data().data()), static_cast<std::streamsize>(image.data().size()));
}

BinaryMask read_pgm_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mask: " + path.string());
  const NetpbmHeader h = read_header(in, path);
  if (h.magic != "P5") throw DataError("not a binary PGM (P5): " + path.string());
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError("truncated PGM: " + path.string());
  BinaryMask m(h.width, h.height);
  auto bits = m.bits();
  for (std::size_t i = 0; i < buf.size(); ++i) bits[i] = buf[i] != 0 ? 1 : 0;
  return m;
}

void write_pgm_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write mask: " + path.string());
  out << "P5\n" << mask.width() << " " << mask.height() << "\n255\n";
  for (std::uint8_t b : mask.bits()) out.put(static_cast<char>(b != 0 ? 255 : 0));
}

void draw_rect(Image& image, const Box& box, Rgb color, int thickness) {
  const int x0 = std::max(0, box.x0), y0 = std::max(0, box.y0);
  const int x1 = std::min(image.width(), box.x1), y1 = std::min(image.height(), box.y1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const bool border = x < box.x0 + thickness || x >= box.x1 - thickness || y < box.y0 + thickness ||
                          y >= box.y1 - thickness;
      if (border) image.set(x, y, color);
    }
  }
}

}  // namespace sama
