#include "sama/grounding_head.hpp"

#include "sama/errors.hpp"
#include "sama/markup.hpp"

#include <algorithm>
#include <cctype>

namespace sama {

std::vector<SegHiddenState> extract_seg_states(std::span<const int> response_ids, const Matrix& hidden_states,
                                               int seg_vocab_id, std::span<const int> turn_marker_ids) {
  if (static_cast<Eigen::Index>(response_ids.size()) != hidden_states.rows()) {
    throw ConfigError("hidden states are not aligned with response tokens");
  }
  std::vector<SegHiddenState> out;
  int turn = -1;
  for (std::size_t i = 0; i < response_ids.size(); ++i) {
    const int id = response_ids[i];
    if (std::find(turn_marker_ids.begin(), turn_marker_ids.end(), id) != turn_marker_ids.end()) ++turn;
    if (id != seg_vocab_id) continue;
    out.push_back({hidden_states.row(static_cast<Eigen::Index>(i)), static_cast<int>(i), std::max(turn, 0)});
  }
  return out;
}

MaskTrack MaskDecoder::decode(const ParamStore& params, const SegHiddenState& hidden, const VideoFeatures& frames) const {
  ad::Tape tape;
  std::vector<ad::Var> feats;
  for (const Matrix& f : frames.frames) feats.push_back(tape.constant(f));
  const auto logits = decode_logits(tape, params, tape.constant(hidden.data), feats);
  MaskTrack track;
  for (const ad::Var& l : logits) {
    BinaryMask m(output_width(), output_height());
    auto bits = m.bits();
    for (Eigen::Index i = 0; i < l.value().rows(); ++i) bits[static_cast<std::size_t>(i)] = l.value()(i, 0) > 0.0 ? 1 : 0;
    track.masks.push_back(std::move(m));
  }
  return track;
}

ToyMaskDecoder::ToyMaskDecoder(PatchGrid grid, int width, int height, int visual_dim, int llm_dim, std::string prefix)
    : grid_(grid), width_(width), height_(height), visual_dim_(visual_dim), llm_dim_(llm_dim), prefix_(std::move(prefix)) {
  if (grid.rows < 1 || grid.cols < 1 || width < grid.cols || height < grid.rows) {
    throw ConfigError("toy decoder: output smaller than patch grid");
  }
  pixel_to_patch_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int r = y * grid.rows / height, c = x * grid.cols / width;
      pixel_to_patch_[static_cast<std::size_t>(y * width + x)] = r * grid.cols + c;
    }
  }
}

void ToyMaskDecoder::init_params(ParamStore& params, Rng& rng) const {
  params.add(weight_name(), xavier_uniform(visual_dim_, llm_dim_, rng));
}

std::vector<ad::Var> ToyMaskDecoder::decode_logits(ad::Tape& tape, const ParamStore& params, ad::Var hidden,
                                                   std::span<const ad::Var> frame_features) const {
  if (hidden.rows() != 1 || hidden.cols() != llm_dim_) throw ConfigError("toy decoder: hidden state width mismatch");
  ad::Var direction = tape.matmul_nt(tape.param(params, weight_name()), hidden);  // [D_v, 1]
  std::vector<ad::Var> out;
  out.reserve(frame_features.size());
  for (const ad::Var& f : frame_features) {
    if (f.rows() != grid_.patches() || f.cols() != visual_dim_) throw ConfigError("toy decoder: frame feature shape mismatch");
    ad::Var patch_logits = tape.matmul(f, direction);
    out.push_back(tape.gather_rows(patch_logits, pixel_to_patch_));
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace

std::vector<PhraseSpan> parse_grounded_phrases(std::string_view text) {
  std::vector<PhraseSpan> out;
  std::optional<std::size_t> open_at;
  std::string phrase;
  bool last_was_close = false;
  for (const MarkupToken& t : lex_markup(text)) {
    switch (t.kind) {
      case MarkupKind::phrase_open:
        if (open_at) throw ParseError("nested <p> inside an open phrase", *open_at);
        open_at = t.offset;
        phrase.clear();
        last_was_close = false;
        break;
      case MarkupKind::phrase_close:
        if (!open_at) throw ParseError("</p> without an open phrase", t.offset);
        out.push_back({trim(phrase), false, false, std::nullopt, *open_at});
        open_at.reset();
        last_was_close = true;
        break;
      case MarkupKind::seg:
        if (open_at) throw ParseError("unclosed <p> before [SEG]", *open_at);
        if (last_was_close && !out.empty() && !out.back().has_seg) {
          out.back().has_seg = true;
          out.back().object_id = t.object_id;
        } else {
          out.push_back({"", true, true, t.object_id, t.offset});
        }
        last_was_close = false;
        break;
      case MarkupKind::text:
        if (open_at) {
          phrase += t.text;
        } else if (!trim(t.text).empty()) {
          last_was_close = false;
        }
        break;
      case MarkupKind::region:
        if (open_at) phrase += t.text;
        last_was_close = false;
        break;
    }
  }
  if (open_at) throw ParseError("unclosed <p>", *open_at);
  return out;
}

std::vector<GroundedPhrase> ground_response(std::string_view response, std::span<const SegHiddenState> seg_states,
                                            const MaskDecoder& decoder, const ParamStore& params,
                                            const VideoFeatures& frames) {
  std::vector<GroundedPhrase> out;
  std::size_t next = 0;
  for (const PhraseSpan& p : parse_grounded_phrases(response)) {
    if (!p.has_seg) continue;
    if (next >= seg_states.size()) throw InputError("response has more [SEG] markers than hidden states");
    out.push_back({p.phrase, decoder.decode(params, seg_states[next++], frames), p.dangling});
  }
  return out;
}

}  // namespace sama
