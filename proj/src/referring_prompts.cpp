#include "sama/referring_prompts.hpp"

#include "sama/errors.hpp"

#include <algorithm>
#include <numeric>

namespace sama {

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::box: return "box";
    case PromptKind::mask: return "mask";
    case PromptKind::points: return "points";
  }
  return "box";
}

PromptKind prompt_kind_from_string(std::string_view s) {
  if (s == "box") return PromptKind::box;
  if (s == "mask") return PromptKind::mask;
  if (s == "points") return PromptKind::points;
  throw ConfigError("unknown prompt kind: " + std::string(s));
}

void ObjectPrompt::validate(int frame_width, int frame_height) const {
  switch (kind) {
    case PromptKind::box:
      if (!box.well_ordered()) throw InputError("box prompt has zero area");
      if (!box.inside(frame_width, frame_height)) throw InputError("box prompt leaves the frame");
      break;
    case PromptKind::mask:
      if (mask.width() != frame_width || mask.height() != frame_height) throw InputError("mask prompt resolution differs from frame");
      if (mask.empty()) throw InputError("mask prompt is empty");
      break;
    case PromptKind::points: {
      const std::size_t n = points.size();
      if (n != 1 && n != 2 && n != 4 && n != 8) throw InputError("point prompt needs 1, 2, 4 or 8 points");
      for (const Point& p : points) {
        if (p.x < 0 || p.y < 0 || p.x >= frame_width || p.y >= frame_height) throw InputError("point prompt leaves the frame");
      }
      break;
    }
  }
}

BinaryMask prompt_to_mask(const ObjectPrompt& prompt, int frame_width, int frame_height, int point_radius) {
  prompt.validate(frame_width, frame_height);
  BinaryMask out(frame_width, frame_height);
  switch (prompt.kind) {
    case PromptKind::box:
      out.fill_box(prompt.box);
      break;
    case PromptKind::mask:
      out = prompt.mask;
      break;
    case PromptKind::points: {
      const long r2 = static_cast<long>(point_radius) * point_radius;
      for (const Point& p : prompt.points) {
        for (int y = std::max(0, p.y - point_radius); y <= std::min(frame_height - 1, p.y + point_radius); ++y) {
          for (int x = std::max(0, p.x - point_radius); x <= std::min(frame_width - 1, p.x + point_radius); ++x) {
            const long dx = x - p.x, dy = y - p.y;
            if (dx * dx + dy * dy <= r2) out.set(x, y);
          }
        }
      }
      break;
    }
  }
  return out;
}

Box patch_cell(const PatchGrid& grid, int frame_width, int frame_height, int patch) {
  const int r = patch / grid.cols, c = patch % grid.cols;
  return Box{c * frame_width / grid.cols, r * frame_height / grid.rows, (c + 1) * frame_width / grid.cols,
             (r + 1) * frame_height / grid.rows};
}

std::vector<int> select_patches(const BinaryMask& mask, const PatchGrid& grid, double min_coverage) {
  if (grid.rows < 1 || grid.cols < 1) throw ConfigError("patch grid must be at least 1x1");
  if (mask.width() < grid.cols || mask.height() < grid.rows) throw ConfigError("mask smaller than patch grid");
  if (mask.empty()) throw InputError("mask pooling: all-zero mask");
  std::vector<int> selected;
  int best = -1;
  long best_overlap = 0;
  for (int p = 0; p < grid.patches(); ++p) {
    const Box cell = patch_cell(grid, mask.width(), mask.height(), p);
    long overlap = 0;
    for (int y = cell.y0; y < cell.y1; ++y) {
      for (int x = cell.x0; x < cell.x1; ++x) overlap += mask.at(x, y) ? 1 : 0;
    }
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = p;
    }
    if (overlap > 0 && static_cast<double>(overlap) >= min_coverage * static_cast<double>(cell.area())) {
      selected.push_back(p);
    }
  }
  if (selected.empty()) selected.push_back(best);
  return selected;
}

ad::Var mask_pool(ad::Tape& tape, ad::Var frame_features, const BinaryMask& mask, const PatchGrid& grid,
                  ad::Var projection, ad::Var* pooled_out, double min_coverage) {
  if (frame_features.rows() != grid.patches()) {
    throw ConfigError("mask pooling: feature rows " + std::to_string(frame_features.rows()) + " != grid patches " +
                      std::to_string(grid.patches()));
  }
  if (projection.rows() != frame_features.cols()) throw ConfigError("mask pooling: projection width mismatch");
  const std::vector<int> selected = select_patches(mask, grid, min_coverage);
  Matrix weights = Matrix::Zero(1, grid.patches());
  for (int p : selected) weights(0, p) = 1.0 / static_cast<double>(selected.size());
  ad::Var pooled = tape.matmul(tape.constant(std::move(weights)), frame_features);
  if (pooled_out != nullptr) *pooled_out = pooled;
  return tape.matmul(pooled, projection);
}

ObjectEmbedding mask_pool(const Matrix& frame_features, const BinaryMask& mask, const PatchGrid& grid,
                          const Matrix& projection, double min_coverage) {
  ad::Tape tape;
  ad::Var pooled;
  ad::Var out = mask_pool(tape, tape.constant(frame_features), mask, grid, tape.constant(projection), &pooled, min_coverage);
  ObjectEmbedding emb;
  emb.data = out.value();
  emb.pooled = pooled.value();
  emb.source_prompt.kind = PromptKind::mask;
  emb.source_prompt.mask = mask;
  if (!emb.data.allFinite()) throw InputError("mask pooling produced non-finite embedding");
  return emb;
}

std::string_view to_string(Segment s) {
  switch (s) {
    case Segment::keyframe_visual: return "keyframe_visual";
    case Segment::aggregated_visual: return "aggregated_visual";
    case Segment::text: return "text";
    case Segment::object_ref: return "object_ref";
    case Segment::seg_token: return "seg_token";
  }
  return "text";
}

Matrix TokenStream::attention_mask() const {
  const int n = length();
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) m(i, j) = attention_allowed(i, j) ? 1.0 : 0.0;
  }
  return m;
}

namespace {

// Text index -> objects inserted before it, in list order.
std::vector<std::vector<std::size_t>> bucket_slots(std::span<const int> positions, std::size_t text_len) {
  std::vector<std::vector<std::size_t>> buckets(text_len + 1);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || static_cast<std::size_t>(p) > text_len) {
      throw InputError("object insertion position " + std::to_string(p) + " outside text of length " +
                       std::to_string(text_len));
    }
    buckets[static_cast<std::size_t>(p)].push_back(i);
  }
  return buckets;
}

}  // namespace

TokenStream assemble_stream(ad::Tape& tape, ad::Var keyframe_tokens, ad::Var aggregated, std::span<const int> text_ids,
                            ad::Var embedding_table, std::span<const ObjectSlot> objects, int seg_vocab_id) {
  const Eigen::Index d = embedding_table.cols();
  if (keyframe_tokens.rows() > 0 && keyframe_tokens.cols() != d) throw ConfigError("keyframe tokens not in language width");
  if (aggregated.rows() > 0 && aggregated.cols() != d) throw ConfigError("aggregated tokens not in language width");
  std::vector<int> positions;
  for (const ObjectSlot& o : objects) {
    if (o.embedding.rows() != 1 || o.embedding.cols() != d) throw ConfigError("object embedding not a [1, D_llm] row");
    positions.push_back(o.position);
  }
  const auto buckets = bucket_slots(positions, text_ids.size());

  TokenStream s;
  s.keyframe_tokens = static_cast<int>(keyframe_tokens.rows());
  s.aggregated_tokens = static_cast<int>(aggregated.rows());
  s.segment_map.assign(static_cast<std::size_t>(s.keyframe_tokens), Segment::keyframe_visual);
  s.segment_map.insert(s.segment_map.end(), static_cast<std::size_t>(s.aggregated_tokens), Segment::aggregated_visual);

  std::vector<ad::Var> parts{keyframe_tokens, aggregated};
  ad::Var text = tape.gather_rows(embedding_table, text_ids);
  int pos = s.visual_prefix();
  std::size_t run_start = 0;
  auto flush_text = [&](std::size_t end) {
    if (end > run_start) parts.push_back(tape.slice_rows(text, static_cast<Eigen::Index>(run_start),
                                                         static_cast<Eigen::Index>(end - run_start)));
    run_start = end;
  };
  for (std::size_t i = 0; i <= text_ids.size(); ++i) {
    if (!buckets[i].empty()) {
      flush_text(i);
      for (std::size_t obj : buckets[i]) {
        parts.push_back(objects[obj].embedding);
        s.object_slots.push_back(pos++);
        s.segment_map.push_back(Segment::object_ref);
      }
    }
    if (i == text_ids.size()) break;
    const bool is_seg = text_ids[i] == seg_vocab_id;
    if (is_seg) s.seg_positions.push_back(pos);
    s.text_positions.push_back(pos);
    s.segment_map.push_back(is_seg ? Segment::seg_token : Segment::text);
    ++pos;
  }
  flush_text(text_ids.size());
  s.embeddings = tape.concat_rows(parts, d);
  return s;
}

StreamValue assemble_stream(const Matrix& keyframe_tokens, const Matrix& aggregated, std::span<const int> text_ids,
                            const Matrix& embedding_table, std::span<const std::pair<int, Matrix>> objects,
                            int seg_vocab_id) {
  ad::Tape tape;
  std::vector<ObjectSlot> slots;
  for (const auto& [position, emb] : objects) slots.push_back({position, tape.constant(emb)});
  const Eigen::Index d = embedding_table.cols();
  ad::Var kf = keyframe_tokens.size() == 0 ? tape.constant(Matrix::Zero(0, d)) : tape.constant(keyframe_tokens);
  ad::Var ag = aggregated.size() == 0 ? tape.constant(Matrix::Zero(0, d)) : tape.constant(aggregated);
  TokenStream s = assemble_stream(tape, kf, ag, text_ids, tape.constant(embedding_table), slots, seg_vocab_id);
  return StreamValue{s.embeddings.value(), s.segment_map, s.object_slots, s.seg_positions};
}

}  // namespace sama
