#include <algorithm>
#include <cstdio>
#include <random>

#include "sama/datagen.hpp"
#include "sama/errors.hpp"
#include "sama/autograd.hpp"
#include "sama/frames.hpp"

namespace sama {

namespace {

struct Shape {
  bool circle;
  int side;
  int x, y;    // top-left at frame 0
  int dx, dy;  // pixels per frame
  std::string color;
  std::string direction;
};

BinaryMask shape_mask(const Shape& s, int t, int size) {
  BinaryMask m(size, size);
  const int x0 = s.x + s.dx * t, y0 = s.y + s.dy * t;
  const double c = (s.side - 1) / 2.0, r2 = (s.side / 2.0) * (s.side / 2.0);
  for (int y = 0; y < s.side; ++y) {
    for (int x = 0; x < s.side; ++x) {
      const int px = x0 + x, py = y0 + y;
      if (px < 0 || py < 0 || px >= size || py >= size) continue;
      if (s.circle && (x - c) * (x - c) + (y - c) * (y - c) > r2) continue;
      m.set(px, py);
    }
  }
  return m;
}

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace

std::vector<GroundedDialogueRecord> generate_synthetic_corpus(int n_videos, std::uint64_t seed,
                                                              const SyntheticOptions& opt) {
  static const std::vector<std::string> kColors{"red", "green", "blue", "yellow", "cyan", "magenta", "orange", "white"};
  static const std::vector<std::string> kQuestions{"What is <region:{id}> doing?", "Where is <region:{id}> going?",
                                                   "Describe the motion of <region:{id}>."};
  if (n_videos < 0) throw ConfigError("synthetic video count must be non-negative");
  if (opt.frames < 1 || opt.size < 16) throw ConfigError("synthetic videos need >= 1 frame and size >= 16");
  if (opt.min_objects < 2 || opt.max_objects < opt.min_objects || opt.max_objects > static_cast<int>(kColors.size())) {
    throw ConfigError("synthetic object count range must lie within [2, 8]");
  }
  Rng rng(seed);
  const std::vector<Rgb> tags = make_palette(static_cast<std::size_t>(opt.max_objects));
  std::vector<GroundedDialogueRecord> out;
  for (int v = 0; v < n_videos; ++v) {
    char vid[32];
    std::snprintf(vid, sizeof vid, "syn%04d", v);
    GroundedDialogueRecord rec;
    rec.video_id = vid;
    rec.source = "synthetic";
    for (int t = 0; t < opt.frames; ++t) rec.sampled_frames.push_back(std::string(kSyntheticScheme) + vid + "/" + std::to_string(t));

    std::vector<std::string> colors = kColors;
    std::shuffle(colors.begin(), colors.end(), rng);
    const int n = uniform(rng, opt.min_objects, opt.max_objects);
    std::vector<Shape> shapes;
    for (int k = 0; k < n; ++k) {
      Shape s;
      s.circle = uniform(rng, 0, 1) == 1;
      s.side = uniform(rng, opt.size / 5, opt.size / 4 + 1);
      s.color = colors[static_cast<std::size_t>(k)];
      const int speed = uniform(rng, 1, 2);
      const int travel = speed * (opt.frames - 1);
      const int dir = uniform(rng, 0, 3);
      static const char* kDirs[] = {"right", "left", "down", "up"};
      s.direction = kDirs[dir];
      s.dx = dir == 0 ? speed : dir == 1 ? -speed : 0;
      s.dy = dir == 2 ? speed : dir == 3 ? -speed : 0;
      const int free_x = opt.size - s.side - (s.dx != 0 ? travel : 0);
      const int free_y = opt.size - s.side - (s.dy != 0 ? travel : 0);
      s.x = uniform(rng, 0, std::max(0, free_x)) + (s.dx < 0 ? travel : 0);
      s.y = uniform(rng, 0, std::max(0, free_y)) + (s.dy < 0 ? travel : 0);
      shapes.push_back(s);
    }

    // Visible pixels: a shape loses whatever later shapes paint over.
    std::vector<std::vector<BinaryMask>> visible(shapes.size());
    for (int t = 0; t < opt.frames; ++t) {
      BinaryMask covered(opt.size, opt.size);
      for (std::size_t k = shapes.size(); k-- > 0;) {
        BinaryMask m = shape_mask(shapes[k], t, opt.size);
        for (std::size_t i = 0; i < m.bits().size(); ++i) {
          if (covered.bits()[i]) m.bits()[i] = 0;
          if (m.bits()[i]) covered.bits()[i] = 1;
        }
        visible[k].push_back(std::move(m));
      }
    }
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      RecordObject o;
      o.object_id = "o" + std::to_string(k);
      o.color_tag = to_hex(tags[k]);
      o.category = shapes[k].color + (shapes[k].circle ? " circle" : " square");
      for (const BinaryMask& m : visible[k]) o.masks.push_back(rle_encode(m));
      rec.descriptions.push_back({o.object_id, "A " + *o.category + " moving " + shapes[k].direction + "."});
      rec.objects.push_back(std::move(o));
    }

    std::vector<std::size_t> order(shapes.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t q = 0; q < 2; ++q) {
      const std::size_t k = order[q];
      const std::string& id = rec.objects[k].object_id;
      const std::string& tmpl = kQuestions[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(kQuestions.size()) - 1))];
      rec.conversation.push_back({"user", fill_template(tmpl, {{"id", id}})});
      rec.conversation.push_back(
          {"assistant", "<p>the " + *rec.objects[k].category + "</p>[SEG:" + id + "] moves " + shapes[k].direction + "."});
    }
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace sama
