#include "sama/frames.hpp"

#include <array>
#include <utility>

#include "sama/errors.hpp"

namespace sama {

namespace {

constexpr std::array<std::pair<std::string_view, Rgb>, 8> kNamedColors{{
    {"red", {230, 40, 40}},
    {"green", {40, 200, 60}},
    {"blue", {50, 80, 235}},
    {"yellow", {235, 220, 40}},
    {"cyan", {40, 220, 220}},
    {"magenta", {220, 50, 220}},
    {"orange", {245, 140, 30}},
    {"white", {245, 245, 245}},
}};

}  // namespace

std::optional<Rgb> named_color(std::string_view name) {
  for (const auto& [n, c] : kNamedColors) {
    if (n == name) return c;
  }
  return std::nullopt;
}

std::optional<Rgb> category_color(std::string_view category) {
  std::size_t i = 0;
  while (i < category.size()) {
    while (i < category.size() && category[i] == ' ') ++i;
    std::size_t j = i;
    while (j < category.size() && category[j] != ' ') ++j;
    if (auto c = named_color(category.substr(i, j - i))) return c;
    i = j;
  }
  return std::nullopt;
}

Image render_synthetic_frame(const GroundedDialogueRecord& record, int t) {
  Image img(record.frame_width(), record.frame_height(), kSyntheticBackground);
  for (const RecordObject& o : record.objects) {
    const auto color = category_color(o.category.value_or(""));
    if (!color) throw DataError("synthetic object " + o.object_id + " has no color word in its category");
    const BinaryMask m = rle_decode(o.masks.at(static_cast<std::size_t>(t)));
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        if (m.at(x, y)) img.set(x, y, *color);
      }
    }
  }
  return img;
}

std::vector<Image> load_record_frames(const GroundedDialogueRecord& record, const std::filesystem::path& base_dir) {
  std::vector<Image> out;
  for (std::size_t t = 0; t < record.sampled_frames.size(); ++t) {
    const std::string& ref = record.sampled_frames[t];
    if (ref.starts_with(kSyntheticScheme)) {
      out.push_back(render_synthetic_frame(record, static_cast<int>(t)));
      continue;
    }
    const std::filesystem::path p = base_dir / ref;
    if (!std::filesystem::exists(p)) throw DataError("record " + record.video_id + " references missing frame " + p.string());
    try {
      out.push_back(read_ppm(p));
    } catch (const InputError& e) {
      throw DataError(e.what());
    }
  }
  return out;
}

Image resize_nearest(const Image& image, int width, int height) {
  if (image.width() == width && image.height() == height) return image;
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.set(x, y, image.at(x * image.width() / width, y * image.height() / height));
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int width, int height) {
  if (mask.width() == width && mask.height() == height) return mask;
  BinaryMask out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.set(x, y, mask.at(x * mask.width() / width, y * mask.height() / height));
  }
  return out;
}

}  // namespace sama
