#pragma once

// End-to-end toy model: frozen encoder -> spatial-temporal-context
// aggregator -> interleaved token stream -> causal LM -> [SEG]-driven mask
// decoder, plus the training objective and loop.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sama/grounding_head.hpp"
#include "sama/record.hpp"
#include "sama/referring_prompts.hpp"
#include "sama/stc_aggregator.hpp"
#include "sama/tokenizer.hpp"
#include "sama/toy_encoder.hpp"
#include "sama/toy_lm.hpp"

namespace sama {

struct ModelConfig {
  AggregatorConfig aggregator;
  EncoderConfig encoder;
  LmConfig lm;
  int keyframes = 5;
  PromptKind prompt_kind = PromptKind::box;
  int point_radius = 1;
  double min_patch_coverage = 0.05;
  int max_new_tokens = 48;

  /// Cross-checks widths between the encoder, aggregator and LM.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 4e-5;
  int steps = 500;
  int batch_size = 1;
  double text_loss_weight = 1.0;  // lambda
  double bce_weight = 1.0;
  double dice_weight = 1.0;
  double grad_clip = 1.0;         // global L2 norm; <= 0 disables
  int warmup_steps = 0;
  bool cosine_decay = false;
  std::uint64_t seed = 0;
  bool ablate_stc = false;
  bool freeze_lm = false;
  int smooth_window = 20;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// A record turned into model inputs: encoded frames, the token sequence
/// `<bos> (<user> q | <assistant> a <eos>)*`, supervision targets and
/// visual prompts for every referenced object.
struct PreparedSample {
  std::string video_id;
  VideoFeatures features;
  int frame_width = 0;
  int frame_height = 0;
  std::vector<int> ids;
  std::vector<int> targets;       // indices into ids that are predicted
  int prompt_length = 0;          // ids[0, prompt_length) ends with <assistant>
  std::vector<int> question_ids;  // user-turn tokens, in order

  struct Region {
    int index = 0;  // object embedding is spliced before ids[index]
    std::string object_id;
  };
  std::vector<Region> regions;

  struct Seg {
    int index = 0;
    std::optional<std::string> object_id;
  };
  std::vector<Seg> segs;

  std::map<std::string, ObjectPrompt> prompts;
  /// Ground-truth masks at the encoder resolution, frames stacked: [N*S*S, 1].
  std::map<std::string, Matrix> mask_targets;
};

/// Box / mask / point prompt on the first frame where the object is visible.
ObjectPrompt derive_prompt(const MaskTrack& track, PromptKind kind);

struct ForwardOutput {
  ad::Var text_logits;              // [targets, V]
  std::vector<int> text_targets;
  std::vector<ad::Var> mask_logits; // one per supervised [SEG], [N*S*S, 1]
  std::vector<Matrix> mask_targets;
  TokenStream stream;
  ad::Var hidden;
};

struct LossBreakdown {
  ad::Var total_var;
  double total = 0.0;
  double ce = 0.0;
  double bce = 0.0;
  double dice = 0.0;
};

/// lambda * ce + w_bce * bce + w_dice * dice.
double combine_loss(double ce, double bce, double dice, const TrainConfig& cfg);

struct Generation {
  std::vector<int> response_ids;  // without the terminating <eos>
  std::string text;
  std::vector<GroundedPhrase> phrases;  // masks at the source frame resolution
  bool markup_error = false;
};

class SamaModel {
 public:
  SamaModel(ModelConfig cfg, Tokenizer tokenizer);

  const ModelConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const ToyEncoder& encoder() const { return encoder_; }
  const StcAggregator& aggregator() const { return aggregator_; }
  const ToyCausalLM& lm() const { return lm_; }
  const ToyMaskDecoder& decoder() const { return decoder_; }

  /// Every tensor of the model; the encoder is frozen. Aggregator tensors are
  /// omitted when the aggregator is disabled.
  ParamStore init_params(std::uint64_t seed) const;

  /// Throws DataError for records the model cannot consume.
  PreparedSample prepare(const GroundedDialogueRecord& record, const ParamStore& params,
                         const std::filesystem::path& frame_dir = {}) const;

  ForwardOutput forward(ad::Tape& tape, const ParamStore& params, const PreparedSample& sample,
                        AggregatorProbe* probe = nullptr) const;
  LossBreakdown loss(ad::Tape& tape, const ForwardOutput& out, const TrainConfig& cfg) const;

  /// Greedy decoding from the sample prompt, or scoring of `forced` response
  /// ids when given; [SEG] states are grounded through the decoder.
  Generation generate(const ParamStore& params, const PreparedSample& sample,
                      const std::optional<std::vector<int>>& forced = std::nullopt) const;

 private:
  struct Visual {
    ad::Var keyframes;
    ad::Var aggregated;
    std::vector<ObjectSlot> slots;
  };
  Visual encode_visual(ad::Tape& tape, const ParamStore& params, const PreparedSample& sample,
                       AggregatorProbe* probe) const;
  std::vector<int> keyframe_indices(int num_frames) const;

  ModelConfig cfg_;
  Tokenizer tokenizer_;
  ToyEncoder encoder_;
  StcAggregator aggregator_;
  ToyCausalLM lm_;
  ToyMaskDecoder decoder_;
};

// ---------------------------------------------------------------- training

struct LossPoint {
  int step = 0;
  double total = 0.0;
  double ce = 0.0;
  double bce = 0.0;
  double dice = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  double initial_smoothed = 0.0;  // mean total over the first smooth_window steps
  double final_smoothed = 0.0;    // mean total over the last smooth_window steps
};

/// Marks the encoder (and the LM when freeze_lm is set) as frozen; every other
/// tensor stays as the caller left it.
void apply_trainability(ParamStore& params, const TrainConfig& cfg);

/// Adam with optional global-norm clipping, linear warmup and cosine decay.
/// Throws DivergenceError on a non-finite loss or gradient.
TrainResult train(const SamaModel& model, ParamStore& params, const std::vector<PreparedSample>& data,
                  const TrainConfig& cfg, const std::function<void(const LossPoint&)>& on_step = {});

/// Model config with the ablation switch of `train` applied.
ModelConfig effective_model_config(ModelConfig model, const TrainConfig& train);

// -------------------------------------------------------------- checkpoints

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> vocab;
  ParamStore params;
};

/// Layout: "SAMACKPT", uint64 header length, JSON header (configs, vocab,
/// tensor index), then every tensor as little-endian float64 in index order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

}  // namespace sama
