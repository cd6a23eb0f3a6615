#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "sama/autograd.hpp"
#include "sama/mask.hpp"

namespace sama {

enum class PromptKind { box, mask, points };

std::string_view to_string(PromptKind kind);
PromptKind prompt_kind_from_string(std::string_view s);

struct Point {
  int x = 0;
  int y = 0;
};

/// Visual prompt on a single frame.
struct ObjectPrompt {
  PromptKind kind = PromptKind::box;
  int frame_index = 0;
  Box box;                   // kind == box
  BinaryMask mask;           // kind == mask
  std::vector<Point> points; // kind == points, 1/2/4/8 points

  /// Throws InputError when the prompt is degenerate or leaves the frame.
  void validate(int frame_width, int frame_height) const;
};

/// Box -> filled rectangle; points -> union of disks (Euclidean distance <=
/// radius); mask -> the mask itself.
BinaryMask prompt_to_mask(const ObjectPrompt& prompt, int frame_width, int frame_height, int point_radius = 1);

struct PatchGrid {
  int rows = 1;
  int cols = 1;
  int patches() const { return rows * cols; }
};

/// Pixel bounds [x0,x1) x [y0,y1) of one patch cell of the grid over a frame.
Box patch_cell(const PatchGrid& grid, int frame_width, int frame_height, int patch);

/// Patches whose cell is covered by at least `min_coverage` of mask pixels;
/// when none qualifies, the single patch with the largest overlap. Throws
/// InputError for an all-zero mask.
std::vector<int> select_patches(const BinaryMask& mask, const PatchGrid& grid, double min_coverage = 0.05);

struct ObjectEmbedding {
  Matrix data;          // [1, D_llm]
  Matrix pooled;        // [1, D_v], before projection
  ObjectPrompt source_prompt;
};

/// Mean of the selected patch features projected by `projection` [D_v x D_llm].
ad::Var mask_pool(ad::Tape& tape, ad::Var frame_features, const BinaryMask& mask, const PatchGrid& grid,
                  ad::Var projection, ad::Var* pooled_out = nullptr, double min_coverage = 0.05);
ObjectEmbedding mask_pool(const Matrix& frame_features, const BinaryMask& mask, const PatchGrid& grid,
                          const Matrix& projection, double min_coverage = 0.05);

enum class Segment { keyframe_visual, aggregated_visual, text, object_ref, seg_token };
std::string_view to_string(Segment s);

struct ObjectSlot {
  int position = 0;  // insertion index into the text token sequence, 0..len
  ad::Var embedding;
};

/// Interleaved multimodal embedding sequence: [keyframes][aggregated][text].
struct TokenStream {
  ad::Var embeddings;               // [L, D_llm]
  std::vector<Segment> segment_map; // one label per position
  std::vector<int> object_slots;    // stream positions of inserted object embeddings
  std::vector<int> seg_positions;   // stream positions of [SEG] text tokens
  std::vector<int> text_positions;  // stream position of every input text token
  int keyframe_tokens = 0;
  int aggregated_tokens = 0;

  int length() const { return static_cast<int>(segment_map.size()); }
  int visual_prefix() const { return keyframe_tokens + aggregated_tokens; }
  /// Every position sees the visual prefix; text positions are causal.
  bool attention_allowed(int query, int key) const { return key < visual_prefix() || key <= query; }
  Matrix attention_mask() const;
};

/// Object embeddings are spliced in before the text token at their position,
/// in position order (ties keep list order). Throws InputError for an
/// out-of-range position.
TokenStream assemble_stream(ad::Tape& tape, ad::Var keyframe_tokens, ad::Var aggregated, std::span<const int> text_ids,
                            ad::Var embedding_table, std::span<const ObjectSlot> objects, int seg_vocab_id);

struct StreamValue {
  Matrix embeddings;
  std::vector<Segment> segment_map;
  std::vector<int> object_slots;
  std::vector<int> seg_positions;
};
StreamValue assemble_stream(const Matrix& keyframe_tokens, const Matrix& aggregated, std::span<const int> text_ids,
                            const Matrix& embedding_table, std::span<const std::pair<int, Matrix>> objects,
                            int seg_vocab_id);

}  // namespace sama
