#pragma once

// Frozen stand-in for a pretrained visual encoder: frames are resized to a
// square working resolution, cut into a patch grid, and every flattened patch
// (pixels scaled to [-0.5, 0.5]) is mapped to D_v by a fixed random linear
// map plus a fixed random per-patch position code.

#include <string>
#include <vector>

#include "sama/autograd.hpp"
#include "sama/image.hpp"
#include "sama/referring_prompts.hpp"
#include "sama/stc_aggregator.hpp"

namespace sama {

struct EncoderConfig {
  int image_size = 32;  // working resolution, square
  int grid = 4;         // patches per side
  int visual_dim = 32;  // D_v

  int patch_size() const { return image_size / grid; }
  int patch_dim() const { return patch_size() * patch_size() * 3; }
  PatchGrid patch_grid() const { return {grid, grid}; }
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

class ToyEncoder {
 public:
  explicit ToyEncoder(EncoderConfig cfg, std::string prefix = "encoder");

  const EncoderConfig& config() const { return cfg_; }
  /// Adds the projection and position code as non-trainable tensors.
  void init_params(ParamStore& params, Rng& rng) const;

  /// [grid*grid, D_v] features of one frame.
  Matrix encode(const ParamStore& params, const Image& frame) const;
  VideoFeatures encode_video(const ParamStore& params, const std::vector<Image>& frames) const;

 private:
  EncoderConfig cfg_;
  std::string prefix_;
};

}  // namespace sama
