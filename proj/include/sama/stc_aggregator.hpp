#pragma once

// Spatial-temporal-context aggregator: compresses long-range frame features
// into one language-space token per frame.
//
//   spatial:  K_S learnable queries cross-attend to each frame's patches (+FFN)
//   temporal: per sliding window, K_T learnable queries concatenated with the
//             question/object embeddings attend among themselves, then
//             cross-attend to the window's spatial tokens (+FFN); only the
//             K_T query slots are kept
//   context:  frame patches attend to the temporal tokens, are mean-pooled per
//             frame and projected to the language width

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sama/autograd.hpp"

namespace sama {

struct AggregatorConfig {
  int spatial_queries = 32;   // K_S
  int temporal_queries = 8;   // K_T
  int window = 4;             // W_T, frames per temporal window
  int stride = 4;             // frames between window starts
  int heads = 4;              // spatial and temporal stages
  int context_heads = 1;
  int visual_dim = 32;        // D_v
  int llm_dim = 128;          // D_llm
  int ffn_mult = 4;
  int long_frame_step = 1;    // F_long = every k-th frame
  bool enabled = true;        // false reproduces the "w/o STC" configuration

  /// Throws ConfigError on violated invariants.
  void validate() const;
  friend bool operator==(const AggregatorConfig&, const AggregatorConfig&) = default;
};

/// Per-frame patch features [N][P x D_v] with their source frame indices.
struct VideoFeatures {
  std::vector<Matrix> frames;
  std::vector<int> frame_indices;

  int num_frames() const { return static_cast<int>(frames.size()); }
  int patches() const { return frames.empty() ? 0 : static_cast<int>(frames.front().rows()); }
  int channels() const { return frames.empty() ? 0 : static_cast<int>(frames.front().cols()); }
  /// Throws InputError for empty, ragged, non-finite or mis-indexed features.
  void validate() const;
  /// Frames whose position is a multiple of `step`.
  VideoFeatures select_every(int step) const;
  static VideoFeatures from_frames(std::vector<Matrix> frames);
};

struct SpatialTokens {
  std::vector<Matrix> frames;  // N_L x [K_S x D_v]
};

/// Inclusive-exclusive frame range [start, end) of one temporal window.
struct WindowSpan {
  int start = 0;
  int end = 0;
  friend bool operator==(const WindowSpan&, const WindowSpan&) = default;
};

struct TemporalTokens {
  Matrix data;  // [num_windows * K_T, D_v]
  std::vector<WindowSpan> windows;
};

struct AggregatedContext {
  Matrix data;  // [N_L, D_llm]
};

/// Windows start at 0 and advance by `stride`; each spans `window` frames
/// clipped to the clip end. Enumeration stops at the first window that reaches
/// the last frame, so a trailing partial window is kept but never a window
/// that is contained in its predecessor.
std::vector<WindowSpan> enumerate_windows(int num_frames, int window, int stride);

/// Attention rows recorded per stage.
struct AggregatorProbe {
  ad::AttentionProbe spatial;
  ad::AttentionProbe temporal_self;
  ad::AttentionProbe temporal_cross;
  ad::AttentionProbe context;
};

class StcAggregator {
 public:
  explicit StcAggregator(AggregatorConfig cfg, std::string prefix = "aggregator");

  const AggregatorConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

  /// Queries ~ N(0, 0.02^2), projections Xavier-uniform, biases zero.
  void init_params(ParamStore& params, Rng& rng) const;
  std::vector<std::string> param_names() const;

  std::vector<ad::Var> spatial(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> frames,
                               AggregatorProbe* probe = nullptr) const;

  struct TemporalResult {
    ad::Var tokens;
    std::vector<WindowSpan> windows;
  };
  /// `question` and `objects` may have zero rows.
  TemporalResult temporal(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> spatial_tokens,
                          ad::Var question, ad::Var objects, AggregatorProbe* probe = nullptr) const;

  ad::Var context(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> frames, ad::Var temporal_tokens,
                  AggregatorProbe* probe = nullptr) const;

  /// Full pipeline. Returns a [0, D_llm] tensor when the aggregator is disabled.
  ad::Var aggregate(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> frames, ad::Var question,
                    ad::Var objects, AggregatorProbe* probe = nullptr) const;

 private:
  std::string name(const std::string& leaf) const { return prefix_ + "." + leaf; }
  ad::Var ffn(ad::Tape& tape, const ParamStore& params, const std::string& stage, ad::Var x) const;

  AggregatorConfig cfg_;
  std::string prefix_;
};

// Value-level entry points; parameters are read from `params` under the
// "aggregator" prefix.
SpatialTokens spatial_aggregate(const VideoFeatures& frames, const AggregatorConfig& cfg, const ParamStore& params,
                                AggregatorProbe* probe = nullptr);
TemporalTokens temporal_aggregate(const SpatialTokens& spatial, const Matrix& question,
                                  const std::optional<Matrix>& object_embeds, const AggregatorConfig& cfg,
                                  const ParamStore& params, AggregatorProbe* probe = nullptr);
AggregatedContext context_aggregate(const VideoFeatures& frames, const TemporalTokens& temporal,
                                    const AggregatorConfig& cfg, const ParamStore& params,
                                    AggregatorProbe* probe = nullptr);
AggregatedContext aggregate(const VideoFeatures& frames, const Matrix& question,
                            const std::optional<Matrix>& object_embeds, const AggregatorConfig& cfg,
                            const ParamStore& params, AggregatorProbe* probe = nullptr);

}  // namespace sama
