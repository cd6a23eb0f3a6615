#pragma once

#include <span>
#include <string>
#include <vector>

#include "sama/autograd.hpp"
#include "sama/mask.hpp"
#include "sama/referring_prompts.hpp"
#include "sama/stc_aggregator.hpp"

namespace sama {

struct SegHiddenState {
  Matrix data;  // [1, D_llm]
  int response_position = 0;
  int turn_index = 0;
};

/// One state per `seg_vocab_id` occurrence, in generation order. The turn
/// index counts tokens from `turn_marker_ids` seen so far (first marker opens
/// turn 0); without markers every state is in turn 0.
std::vector<SegHiddenState> extract_seg_states(std::span<const int> response_ids, const Matrix& hidden_states,
                                               int seg_vocab_id, std::span<const int> turn_marker_ids = {});

/// Seam for a promptable mask decoder driven by a [SEG] hidden state.
class MaskDecoder {
 public:
  virtual ~MaskDecoder() = default;

  /// Per-frame pixel logits, each [H*W, 1] in row-major pixel order.
  virtual std::vector<ad::Var> decode_logits(ad::Tape& tape, const ParamStore& params, ad::Var hidden,
                                             std::span<const ad::Var> frame_features) const = 0;
  virtual int output_width() const = 0;
  virtual int output_height() const = 0;

  /// Binary masks: pixel logit > 0.
  MaskTrack decode(const ParamStore& params, const SegHiddenState& hidden, const VideoFeatures& frames) const;
};

/// logits(frame) = upsample_nearest(F_frame W h^T), F_frame [P, D_v],
/// W [D_v, D_llm].
class ToyMaskDecoder final : public MaskDecoder {
 public:
  ToyMaskDecoder(PatchGrid grid, int width, int height, int visual_dim, int llm_dim, std::string prefix = "decoder");

  void init_params(ParamStore& params, Rng& rng) const;
  std::string weight_name() const { return prefix_ + ".w"; }

  std::vector<ad::Var> decode_logits(ad::Tape& tape, const ParamStore& params, ad::Var hidden,
                                     std::span<const ad::Var> frame_features) const override;
  int output_width() const override { return width_; }
  int output_height() const override { return height_; }

  /// Patch index of each output pixel (row-major).
  const std::vector<int>& pixel_to_patch() const { return pixel_to_patch_; }

 private:
  PatchGrid grid_;
  int width_;
  int height_;
  int visual_dim_;
  int llm_dim_;
  std::string prefix_;
  std::vector<int> pixel_to_patch_;
};

/// Phrase with its optional [SEG] marker, parsed from `<p>...</p>[SEG]`
/// markup.
struct PhraseSpan {
  std::string phrase;
  bool has_seg = false;
  bool dangling = false;  // [SEG] with no preceding phrase
  std::optional<std::string> object_id;
  std::size_t offset = 0;
};

/// Throws ParseError for nested or unclosed `<p>` (offset of the open tag) and
/// for `</p>` with no open phrase (offset of the close tag).
std::vector<PhraseSpan> parse_grounded_phrases(std::string_view text);

struct GroundedPhrase {
  std::string phrase;
  MaskTrack track;
  bool dangling = false;
};

/// Binds the i-th [SEG] of `response` to the i-th hidden state and decodes
/// it. Phrases without [SEG] yield nothing.
std::vector<GroundedPhrase> ground_response(std::string_view response, std::span<const SegHiddenState> seg_states,
                                            const MaskDecoder& decoder, const ParamStore& params,
                                            const VideoFeatures& frames);

}  // namespace sama
