#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sama/datagen.hpp"
#include "sama/errors.hpp"

namespace sama {

bool SourceAnnotation::has_masks() const {
  return std::all_of(objects.begin(), objects.end(), [](const SourceObject& o) { return !o.masks.empty(); });
}

void SourceAnnotation::validate() const {
  const std::string where = "source " + video_id + ": ";
  if (video_id.empty()) throw DataError("source without video_id");
  if (frames.empty()) throw DataError(where + "no frames");
  if (objects.empty()) throw DataError(where + "no objects");
  if (width < 1 || height < 1) throw DataError(where + "invalid resolution");
  for (const SourceObject& o : objects) {
    if (o.masks.empty() == o.boxes.empty()) throw DataError(where + "object " + o.object_id + " needs either masks or boxes");
    const std::size_t n = o.masks.empty() ? o.boxes.size() : o.masks.size();
    if (n != frames.size()) throw DataError(where + "object " + o.object_id + " is not annotated on every frame");
    for (const BinaryMask& m : o.masks) {
      if (m.width() != width || m.height() != height) throw DataError(where + "mask resolution differs from the video");
    }
    for (const auto& b : o.boxes) {
      if (b && (!b->well_ordered() || !b->inside(width, height))) throw DataError(where + "box outside the frame");
    }
  }
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<SourceAnnotation> load_mask_index(const std::filesystem::path& index) {
  std::vector<SourceAnnotation> out;
  const std::filesystem::path base = index.parent_path();
  try {
    const auto j = nlohmann::json::parse(slurp(index));
    for (const auto& v : j.at("videos")) {
      SourceAnnotation s;
      s.video_id = v.at("video_id").get<std::string>();
      s.source = v.value("source", std::string("mask_index"));
      s.width = v.at("width").get<int>();
      s.height = v.at("height").get<int>();
      s.frames = v.at("frames").get<std::vector<std::string>>();
      for (const auto& oj : v.at("objects")) {
        SourceObject o;
        o.object_id = oj.at("object_id").get<std::string>();
        if (oj.contains("category")) o.category = oj.at("category").get<std::string>();
        if (oj.contains("expression")) o.expression = oj.at("expression").get<std::string>();
        for (const auto& m : oj.at("masks")) {
          if (m.is_null()) {
            o.masks.emplace_back(s.width, s.height);
          } else if (m.is_string()) {
            o.masks.push_back(read_pgm_mask(base / m.get<std::string>()));
          } else {
            RleMask rle;
            rle.width = m.at("width").get<int>();
            rle.height = m.at("height").get<int>();
            rle.counts = m.at("counts").get<std::vector<std::int64_t>>();
            o.masks.push_back(rle_decode(rle));
          }
        }
        s.objects.push_back(std::move(o));
      }
      s.validate();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("mask index " + index.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw DataError("mask index " + index.string() + ": " + e.what());
  }
  return out;
}

std::vector<SourceAnnotation> load_box_csv(const std::filesystem::path& csv) {
  std::istringstream in(slurp(csv));
  std::string line;
  std::getline(in, line);
  if (line.rfind("video_id,frame,frame_ref,width,height,object_id,category,x0,y0,x1,y1", 0) != 0) {
    throw DataError("box CSV " + csv.string() + ": unexpected header");
  }
  struct Row {
    int frame;
    std::string frame_ref;
    int width, height;
    std::string object_id, category;
    Box box;
  };
  std::map<std::string, std::vector<Row>> by_video;
  std::vector<std::string> order;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw DataError("box CSV " + csv.string() + " line " + std::to_string(line_no) + ": expected 11 fields");
    try {
      Row r{std::stoi(f[1]), f[2], std::stoi(f[3]), std::stoi(f[4]), f[5], f[6],
            Box{std::stoi(f[7]), std::stoi(f[8]), std::stoi(f[9]), std::stoi(f[10])}};
      if (!by_video.count(f[0])) order.push_back(f[0]);
      by_video[f[0]].push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DataError("box CSV " + csv.string() + " line " + std::to_string(line_no) + ": bad number");
    }
  }
  std::vector<SourceAnnotation> out;
  for (const std::string& vid : order) {
    const auto& rows = by_video[vid];
    SourceAnnotation s;
    s.video_id = vid;
    s.source = "box_csv";
    s.width = rows.front().width;
    s.height = rows.front().height;
    int frames = 0;
    for (const Row& r : rows) frames = std::max(frames, r.frame + 1);
    s.frames.assign(static_cast<std::size_t>(frames), "");
    std::vector<std::string> ids;
    for (const Row& r : rows) {
      if (r.width != s.width || r.height != s.height) throw DataError("box CSV: video " + vid + " changes resolution");
      if (r.frame < 0) throw DataError("box CSV: negative frame index in " + vid);
      s.frames[static_cast<std::size_t>(r.frame)] = r.frame_ref;
      if (std::find(ids.begin(), ids.end(), r.object_id) == ids.end()) ids.push_back(r.object_id);
    }
    for (const std::string& id : ids) {
      SourceObject o;
      o.object_id = id;
      o.boxes.assign(static_cast<std::size_t>(frames), std::nullopt);
      for (const Row& r : rows) {
        if (r.object_id != id) continue;
        if (!r.category.empty()) o.category = r.category;
        o.boxes[static_cast<std::size_t>(r.frame)] = r.box;
      }
      s.objects.push_back(std::move(o));
    }
    for (const std::string& f : s.frames) {
      if (f.empty()) throw DataError("box CSV: video " + vid + " has a frame without a reference");
    }
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::optional<BinaryMask> BoxFillSegmenter::segment(const std::string&, const Box& box, int width, int height) {
  BinaryMask m(width, height);
  m.fill_box(box);
  return m;
}

SourceAnnotation boxes_to_pseudomasks(const SourceAnnotation& source, PromptableSegmenter& segmenter, int interval,
                                      PseudomaskReport* report) {
  if (interval < 1) throw ConfigError("pseudomask interval must be positive");
  PseudomaskReport rep;
  SourceAnnotation out = source;
  out.frames.clear();
  std::vector<std::size_t> kept;
  for (std::size_t t = 0; t < source.frames.size(); t += static_cast<std::size_t>(interval)) {
    kept.push_back(t);
    out.frames.push_back(source.frames[t]);
  }
  for (std::size_t k = 0; k < source.objects.size(); ++k) {
    const SourceObject& in = source.objects[k];
    SourceObject& o = out.objects[k];
    if (in.boxes.empty()) {  // already has masks: subsample only
      o.masks.clear();
      for (std::size_t t : kept) o.masks.push_back(in.masks[t]);
      continue;
    }
    o.boxes.clear();
    o.masks.clear();
    for (std::size_t t : kept) {
      const auto& box = in.boxes[t];
      BinaryMask m(source.width, source.height);
      if (box) {
        ++rep.frames;
        auto seg = segmenter.segment(source.frames[t], *box, source.width, source.height);
        if (!seg || seg->width() != source.width || seg->height() != source.height) {
          ++rep.fallback_frames;
          m.fill_box(*box);
        } else {
          const int mx = static_cast<int>(std::ceil(0.1 * box->width())), my = static_cast<int>(std::ceil(0.1 * box->height()));
          const Box keep{std::max(0, box->x0 - mx), std::max(0, box->y0 - my), std::min(source.width, box->x1 + mx),
                         std::min(source.height, box->y1 + my)};
          bool clipped = false;
          for (int y = 0; y < source.height; ++y) {
            for (int x = 0; x < source.width; ++x) {
              if (!seg->at(x, y)) continue;
              if (x >= keep.x0 && x < keep.x1 && y >= keep.y0 && y < keep.y1) {
                m.set(x, y);
              } else {
                clipped = true;
              }
            }
          }
          if (clipped) ++rep.clipped_frames;
        }
      }
      o.masks.push_back(std::move(m));
    }
  }
  if (report != nullptr) *report = rep;
  return out;
}

std::vector<SourceAnnotation> load_sources(const std::filesystem::path& mask_index, const std::filesystem::path& box_csv,
                                           PromptableSegmenter& segmenter, int box_interval, PseudomaskReport* report) {
  std::vector<SourceAnnotation> out;
  if (!mask_index.empty()) out = load_mask_index(mask_index);
  if (!box_csv.empty()) {
    PseudomaskReport total;
    for (const SourceAnnotation& s : load_box_csv(box_csv)) {
      PseudomaskReport one;
      out.push_back(boxes_to_pseudomasks(s, segmenter, box_interval, &one));
      total.frames += one.frames;
      total.fallback_frames += one.fallback_frames;
      total.clipped_frames += one.clipped_frames;
    }
    if (report != nullptr) *report = total;
  }
  return out;
}

std::vector<SourceAnnotation> filter_sources(std::vector<SourceAnnotation> sources) {
  std::erase_if(sources, [](const SourceAnnotation& s) { return s.objects.size() < 2; });
  return sources;
}

// ------------------------------------------------------------------ palette

std::vector<Rgb> base_palette() {
  return {{255, 0, 0},   {0, 255, 0},     {0, 0, 255},     {255, 255, 0},   {255, 0, 255},
          {0, 255, 255}, {255, 128, 0},   {128, 0, 255},   {0, 128, 255},   {255, 0, 128},
          {128, 255, 0}, {0, 255, 128},   {128, 0, 0},     {0, 128, 0},     {0, 0, 128},
          {128, 128, 0}, {128, 0, 128},   {0, 128, 128},   {255, 128, 128}, {128, 128, 255}};
}

int chebyshev(const Rgb& a, const Rgb& b) {
  int d = 0;
  for (std::size_t i = 0; i < 3; ++i) d = std::max(d, std::abs(static_cast<int>(a[i]) - static_cast<int>(b[i])));
  return d;
}

namespace {

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s, hp = h * 6.0, x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  auto q = [&](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u + m, 0.0, 1.0) * 255.0)); };
  return {q(r), q(g), q(b)};
}

}  // namespace

std::vector<Rgb> make_palette(std::size_t count, std::vector<Rgb> base) {
  std::vector<Rgb> out;
  for (const Rgb& c : base) {
    if (out.size() == count) return out;
    out.push_back(c);
  }
  // Hue follows the golden-ratio sequence; saturation and value follow two
  // other low-discrepancy sequences so the candidates fill the color cube.
  constexpr double kGolden = 0.6180339887498949;
  const double r2 = std::sqrt(2.0), r3 = std::sqrt(3.0);
  const Rgb gray{128, 128, 128};
  for (long k = 1; out.size() < count; ++k) {
    if (k > 200000) throw ConfigError("cannot extend palette to " + std::to_string(count) + " distinct colors");
    const double h = std::fmod(k * kGolden, 1.0);
    const double sat = 1.0 - 0.55 * std::fmod(k * r2, 1.0);
    const double val = 1.0 - 0.65 * std::fmod(k * r3, 1.0);
    const Rgb c = hsv_to_rgb(h, sat, val);
    if (chebyshev(c, gray) < 64) continue;
    if (std::all_of(out.begin(), out.end(), [&](const Rgb& o) { return chebyshev(o, c) >= 64; })) out.push_back(c);
  }
  return out;
}

std::string to_hex(const Rgb& c) {
  static const char* digits = "0123456789abcdef";
  std::string s = "#";
  for (std::uint8_t v : c) {
    s += digits[v >> 4];
    s += digits[v & 15];
  }
  return s;
}

std::optional<Rgb> from_hex(std::string_view hex) {
  if (hex.size() != 7 || hex[0] != '#') return std::nullopt;
  Rgb c{};
  for (std::size_t i = 0; i < 3; ++i) {
    int v = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      const char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[1 + 2 * i + k])));
      const int d = ch >= '0' && ch <= '9' ? ch - '0' : ch >= 'a' && ch <= 'f' ? ch - 'a' + 10 : -1;
      if (d < 0) return std::nullopt;
      v = v * 16 + d;
    }
    c[i] = static_cast<std::uint8_t>(v);
  }
  return c;
}

std::vector<Rgb> load_palette(const std::filesystem::path& path) {
  std::vector<Rgb> out;
  try {
    for (const auto& v : nlohmann::json::parse(slurp(path))) {
      auto c = from_hex(v.get<std::string>());
      if (!c) throw ConfigError("palette " + path.string() + ": bad color " + v.dump());
      out.push_back(*c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("palette " + path.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (chebyshev(out[i], out[j]) < 64) throw ConfigError("palette " + path.string() + ": colors closer than 64");
    }
  }
  return out;
}

std::string color_word(const Rgb& c) {
  static const std::pair<const char*, Rgb> names[] = {
      {"red", {255, 0, 0}},      {"green", {0, 200, 0}},     {"blue", {0, 0, 255}},     {"yellow", {255, 255, 0}},
      {"magenta", {255, 0, 255}}, {"cyan", {0, 255, 255}},   {"orange", {255, 128, 0}}, {"purple", {128, 0, 255}},
      {"pink", {255, 128, 192}}, {"brown", {128, 64, 0}},    {"maroon", {128, 0, 0}},   {"navy", {0, 0, 128}},
      {"olive", {128, 128, 0}},  {"teal", {0, 128, 128}},    {"gray", {128, 128, 128}}, {"white", {255, 255, 255}},
      {"black", {0, 0, 0}}};
  const char* best = "gray";
  long best_d = -1;
  for (const auto& [name, ref] : names) {
    long d = 0;
    for (std::size_t i = 0; i < 3; ++i) d += (static_cast<long>(c[i]) - ref[i]) * (static_cast<long>(c[i]) - ref[i]);
    if (best_d < 0 || d < best_d) {
      best_d = d;
      best = name;
    }
  }
  return best;
}

// -------------------------------------------------------------- set-of-mark

std::vector<int> uniform_sample(int num_frames, int count) {
  std::vector<int> out;
  for (int i = 0; i < count; ++i) out.push_back(static_cast<int>(std::floor((i + 0.5) * num_frames / count)));
  return out;
}

SomFrames render_som_frames(const SourceAnnotation& source, const std::vector<Image>& images,
                            const std::vector<Rgb>& palette, int count) {
  if (!source.has_masks()) throw InputError("set-of-mark rendering needs masks for every object");
  if (images.size() != source.frames.size()) throw InputError("frame images do not match the source frames");
  SomFrames out;
  const std::vector<Rgb> colors =
      palette.size() >= source.objects.size() ? palette : make_palette(source.objects.size(), palette);
  for (std::size_t k = 0; k < source.objects.size(); ++k) out.colors[source.objects[k].object_id] = colors[k];
  out.frame_indices = uniform_sample(static_cast<int>(source.frames.size()), count);
  for (int t : out.frame_indices) {
    Image img = images[static_cast<std::size_t>(t)];
    for (std::size_t k = 0; k < source.objects.size(); ++k) {
      if (auto b = source.objects[k].masks[static_cast<std::size_t>(t)].bounds()) draw_rect(img, *b, colors[k], 3);
    }
    out.frames.push_back(std::move(img));
  }
  return out;
}

}  // namespace sama
