#include "sama/toy_encoder.hpp"

#include <cmath>

#include "sama/errors.hpp"
#include "sama/frames.hpp"

namespace sama {

void EncoderConfig::validate() const {
  if (grid < 1 || image_size < grid || image_size % grid != 0) {
    throw ConfigError("encoder: image_size must be a positive multiple of grid");
  }
  if (visual_dim < 1) throw ConfigError("encoder: visual_dim must be positive");
}

ToyEncoder::ToyEncoder(EncoderConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) { cfg_.validate(); }

void ToyEncoder::init_params(ParamStore& params, Rng& rng) const {
  const int p = cfg_.grid * cfg_.grid;
  params.add(prefix_ + ".proj", normal_init(cfg_.patch_dim(), cfg_.visual_dim, 1.0 / std::sqrt(cfg_.patch_dim() / 4.0), rng),
             false);
  params.add(prefix_ + ".pos", normal_init(p, cfg_.visual_dim, 0.5, rng), false);
}

Matrix ToyEncoder::encode(const ParamStore& params, const Image& frame) const {
  const Image img = resize_nearest(frame, cfg_.image_size, cfg_.image_size);
  const int ps = cfg_.patch_size();
  Matrix patches(cfg_.grid * cfg_.grid, cfg_.patch_dim());
  for (int r = 0; r < cfg_.grid; ++r) {
    for (int c = 0; c < cfg_.grid; ++c) {
      int k = 0;
      for (int y = r * ps; y < (r + 1) * ps; ++y) {
        for (int x = c * ps; x < (c + 1) * ps; ++x) {
          const Rgb px = img.at(x, y);
          for (int ch = 0; ch < 3; ++ch) patches(r * cfg_.grid + c, k++) = px[static_cast<std::size_t>(ch)] / 255.0 - 0.5;
        }
      }
    }
  }
  return patches * params.get(prefix_ + ".proj") + params.get(prefix_ + ".pos");
}

VideoFeatures ToyEncoder::encode_video(const ParamStore& params, const std::vector<Image>& frames) const {
  std::vector<Matrix> feats;
  feats.reserve(frames.size());
  for (const Image& f : frames) feats.push_back(encode(params, f));
  return VideoFeatures::from_frames(std::move(feats));
}

}  // namespace sama
