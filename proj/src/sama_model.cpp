#include "sama/sama_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sama/errors.hpp"
#include "sama/frames.hpp"
#include "sama/markup.hpp"

namespace sama {

void ModelConfig::validate() const {
  aggregator.validate();
  encoder.validate();
  lm.validate();
  if (aggregator.visual_dim != encoder.visual_dim) throw ConfigError("aggregator.visual_dim must equal encoder.visual_dim");
  if (aggregator.llm_dim != lm.dim) throw ConfigError("aggregator.llm_dim must equal lm.dim");
  if (keyframes < 1) throw ConfigError("model.keyframes must be positive");
  if (point_radius < 0) throw ConfigError("model.point_radius must be non-negative");
  if (min_patch_coverage < 0.0 || min_patch_coverage > 1.0) throw ConfigError("model.min_patch_coverage must lie in [0,1]");
  if (max_new_tokens < 1) throw ConfigError("model.max_new_tokens must be positive");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be a finite non-negative number");
  if (steps < 0) throw ConfigError("train.steps must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (!(text_loss_weight > 0.0)) throw ConfigError("train.text_loss_weight must be positive");
  if (bce_weight < 0.0 || dice_weight < 0.0) throw ConfigError("mask loss weights must be non-negative");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be non-negative");
  if (smooth_window < 1) throw ConfigError("train.smooth_window must be positive");
}

double combine_loss(double ce, double bce, double dice, const TrainConfig& cfg) {
  return cfg.text_loss_weight * ce + cfg.bce_weight * bce + cfg.dice_weight * dice;
}

ModelConfig effective_model_config(ModelConfig model, const TrainConfig& train) {
  if (train.ablate_stc) model.aggregator.enabled = false;
  return model;
}

ObjectPrompt derive_prompt(const MaskTrack& track, PromptKind kind) {
  for (std::size_t t = 0; t < track.masks.size(); ++t) {
    const BinaryMask& m = track.masks[t];
    const auto bounds = m.bounds();
    if (!bounds) continue;
    ObjectPrompt p;
    p.kind = kind;
    p.frame_index = static_cast<int>(t);
    switch (kind) {
      case PromptKind::box: p.box = *bounds; break;
      case PromptKind::mask: p.mask = m; break;
      case PromptKind::points: {
        // Set pixel closest to the box centre.
        const double cx = (bounds->x0 + bounds->x1 - 1) / 2.0, cy = (bounds->y0 + bounds->y1 - 1) / 2.0;
        Point best;
        double best_d = 1e300;
        for (int y = bounds->y0; y < bounds->y1; ++y) {
          for (int x = bounds->x0; x < bounds->x1; ++x) {
            const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (m.at(x, y) && d < best_d) {
              best_d = d;
              best = {x, y};
            }
          }
        }
        p.points = {best};
        break;
      }
    }
    return p;
  }
  throw DataError("object " + track.object_id.value_or("?") + " is empty in every frame");
}

SamaModel::SamaModel(ModelConfig cfg, Tokenizer tokenizer)
    : cfg_(cfg),
      tokenizer_(std::move(tokenizer)),
      encoder_(cfg.encoder),
      aggregator_(cfg.aggregator),
      lm_(cfg.lm, tokenizer_.size()),
      decoder_(cfg.encoder.patch_grid(), cfg.encoder.image_size, cfg.encoder.image_size, cfg.encoder.visual_dim,
               cfg.lm.dim) {
  cfg_.validate();
}

ParamStore SamaModel::init_params(std::uint64_t seed) const {
  ParamStore params;
  Rng rng(seed);
  encoder_.init_params(params, rng);
  lm_.init_params(params, rng);
  const int dv = cfg_.encoder.visual_dim, d = cfg_.lm.dim;
  params.add("kf_proj.w", xavier_uniform(dv, d, rng));
  params.add("kf_proj.b", Matrix::Zero(1, d));
  params.add("obj_proj.w", xavier_uniform(dv, d, rng));
  decoder_.init_params(params, rng);
  if (cfg_.aggregator.enabled) {
    aggregator_.init_params(params, rng);
    params.add("aggregator.question_proj", xavier_uniform(d, dv, rng));
  }
  return params;
}

std::vector<int> SamaModel::keyframe_indices(int num_frames) const {
  const int k = std::min(cfg_.keyframes, num_frames);
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(static_cast<int>(std::floor((i + 0.5) * num_frames / k)));
  return out;
}

PreparedSample SamaModel::prepare(const GroundedDialogueRecord& record, const ParamStore& params,
                                  const std::filesystem::path& frame_dir) const {
  record.validate();
  PreparedSample s;
  s.video_id = record.video_id;
  s.features = encoder_.encode_video(params, load_record_frames(record, frame_dir));
  s.frame_width = record.frame_width();
  s.frame_height = record.frame_height();

  std::set<std::string> referenced, grounded;
  s.ids.push_back(SpecialTokens::bos);
  for (const Turn& turn : record.conversation) {
    const bool user = turn.role == "user";
    s.ids.push_back(user ? SpecialTokens::user : SpecialTokens::assistant);
    const TokenizedText tt = tokenizer_.encode(turn.text);
    const int base = static_cast<int>(s.ids.size());
    if (user) {
      for (const auto& r : tt.regions) {
        if (!r.object_id) throw DataError(record.video_id + ": <region> without an object id");
        if (!record.find_object(*r.object_id)) throw DataError(record.video_id + ": unknown region object " + *r.object_id);
        s.regions.push_back({base + r.position, *r.object_id});
        referenced.insert(*r.object_id);
      }
      s.question_ids.insert(s.question_ids.end(), tt.ids.begin(), tt.ids.end());
    }
    std::size_t seg_no = 0;
    for (std::size_t i = 0; i < tt.ids.size(); ++i) {
      const int index = static_cast<int>(s.ids.size());
      s.ids.push_back(tt.ids[i]);
      if (!user) s.targets.push_back(index);
      if (tt.ids[i] == SpecialTokens::seg) {
        std::optional<std::string> obj = tt.seg_objects[seg_no++];
        if (obj && !record.find_object(*obj)) obj.reset();
        if (!user && obj) grounded.insert(*obj);
        if (!user) s.segs.push_back({index, obj});
      }
    }
    if (!user) {
      s.targets.push_back(static_cast<int>(s.ids.size()));
      s.ids.push_back(SpecialTokens::eos);
    }
  }
  // Prompt: everything before the final assistant turn's content.
  if (!record.conversation.empty() && record.conversation.back().role == "user") {
    s.ids.push_back(SpecialTokens::assistant);
    s.prompt_length = static_cast<int>(s.ids.size());
  } else {
    const auto it = std::find(s.ids.rbegin(), s.ids.rend(), SpecialTokens::assistant);
    s.prompt_length = it == s.ids.rend() ? static_cast<int>(s.ids.size()) : static_cast<int>(s.ids.rend() - it);
  }

  for (const std::string& id : referenced) {
    s.prompts.emplace(id, derive_prompt(record.track(id), cfg_.prompt_kind));
  }
  const int size = cfg_.encoder.image_size;
  for (const std::string& id : grounded) {
    const MaskTrack track = record.track(id);
    Matrix target(static_cast<Eigen::Index>(track.masks.size()) * size * size, 1);
    Eigen::Index k = 0;
    for (const BinaryMask& m : track.masks) {
      const BinaryMask r = resize_nearest(m, size, size);
      for (std::uint8_t b : r.bits()) target(k++, 0) = b ? 1.0 : 0.0;
    }
    s.mask_targets.emplace(id, std::move(target));
  }
  return s;
}

SamaModel::Visual SamaModel::encode_visual(ad::Tape& tape, const ParamStore& params, const PreparedSample& sample,
                                           AggregatorProbe* probe) const {
  std::vector<ad::Var> frames;
  for (const Matrix& f : sample.features.frames) frames.push_back(tape.constant(f));
  const Eigen::Index dv = cfg_.encoder.visual_dim, d = cfg_.lm.dim;

  Visual v;
  std::vector<ad::Var> kf;
  for (int i : keyframe_indices(sample.features.num_frames())) kf.push_back(frames[static_cast<std::size_t>(i)]);
  v.keyframes = tape.add_row(tape.matmul(tape.concat_rows(kf, dv), tape.param(params, "kf_proj.w")),
                             tape.param(params, "kf_proj.b"));

  ad::Var obj_proj = tape.param(params, "obj_proj.w");
  std::map<std::string, std::pair<ad::Var, ad::Var>> pooled;  // id -> (embedding, pooled D_v row)
  std::vector<ad::Var> object_rows;
  for (const PreparedSample::Region& r : sample.regions) {
    auto it = pooled.find(r.object_id);
    if (it == pooled.end()) {
      const ObjectPrompt& prompt = sample.prompts.at(r.object_id);
      const BinaryMask mask = prompt_to_mask(prompt, sample.frame_width, sample.frame_height, cfg_.point_radius);
      ad::Var raw;
      ad::Var emb = mask_pool(tape, frames.at(static_cast<std::size_t>(prompt.frame_index)), mask,
                              cfg_.encoder.patch_grid(), obj_proj, &raw, cfg_.min_patch_coverage);
      it = pooled.emplace(r.object_id, std::make_pair(emb, raw)).first;
      object_rows.push_back(raw);
    }
    v.slots.push_back({r.index, it->second.first});
  }

  if (cfg_.aggregator.enabled) {
    ad::Var table = lm_.embedding_table(tape, params);
    ad::Var question = sample.question_ids.empty()
                           ? tape.constant(Matrix::Zero(0, dv))
                           : tape.matmul(tape.gather_rows(table, sample.question_ids),
                                         tape.param(params, "aggregator.question_proj"));
    ad::Var objects = tape.concat_rows(object_rows, dv);
    v.aggregated = aggregator_.aggregate(tape, params, frames, question, objects, probe);
  } else {
    v.aggregated = tape.constant(Matrix::Zero(0, d));
  }
  return v;
}

ForwardOutput SamaModel::forward(ad::Tape& tape, const ParamStore& params, const PreparedSample& sample,
                                 AggregatorProbe* probe) const {
  const Visual v = encode_visual(tape, params, sample, probe);
  ForwardOutput out;
  out.stream = assemble_stream(tape, v.keyframes, v.aggregated, sample.ids, lm_.embedding_table(tape, params), v.slots,
                               SpecialTokens::seg);
  out.hidden = lm_.hidden(tape, params, out.stream.embeddings, out.stream.visual_prefix());

  std::vector<int> rows;
  for (int t : sample.targets) {
    rows.push_back(out.stream.text_positions[static_cast<std::size_t>(t)] - 1);
    out.text_targets.push_back(sample.ids[static_cast<std::size_t>(t)]);
  }
  out.text_logits = lm_.logits(tape, params, tape.gather_rows(out.hidden, rows));

  std::vector<ad::Var> frames;
  for (const Matrix& f : sample.features.frames) frames.push_back(tape.constant(f));
  for (const PreparedSample::Seg& seg : sample.segs) {
    if (!seg.object_id) continue;
    const int pos = out.stream.text_positions[static_cast<std::size_t>(seg.index)];
    ad::Var h = tape.slice_rows(out.hidden, pos, 1);
    const std::vector<ad::Var> per_frame = decoder_.decode_logits(tape, params, h, frames);
    out.mask_logits.push_back(tape.concat_rows(per_frame, 1));
    out.mask_targets.push_back(sample.mask_targets.at(*seg.object_id));
  }
  return out;
}

LossBreakdown SamaModel::loss(ad::Tape& tape, const ForwardOutput& out, const TrainConfig& cfg) const {
  LossBreakdown b;
  ad::Var ce = out.text_targets.empty() ? tape.constant(Matrix::Zero(1, 1))
                                        : tape.cross_entropy(out.text_logits, out.text_targets);
  ad::Var bce = tape.constant(Matrix::Zero(1, 1));
  ad::Var dice = tape.constant(Matrix::Zero(1, 1));
  if (!out.mask_logits.empty()) {
    Eigen::Index total_rows = 0;
    for (const Matrix& t : out.mask_targets) total_rows += t.rows();
    Matrix all_targets(total_rows, 1);
    Eigen::Index k = 0;
    for (const Matrix& t : out.mask_targets) {
      all_targets.middleRows(k, t.rows()) = t;
      k += t.rows();
    }
    bce = tape.bce_with_logits(tape.concat_rows(out.mask_logits, 1), all_targets);
    std::vector<ad::Var> dices;
    for (std::size_t i = 0; i < out.mask_logits.size(); ++i) dices.push_back(tape.dice_loss(out.mask_logits[i], out.mask_targets[i]));
    dice = tape.scale(tape.sum(tape.concat_rows(dices, 1)), 1.0 / static_cast<double>(dices.size()));
  }
  b.ce = ce.value()(0, 0);
  b.bce = bce.value()(0, 0);
  b.dice = dice.value()(0, 0);
  b.total_var = tape.add(tape.add(tape.scale(ce, cfg.text_loss_weight), tape.scale(bce, cfg.bce_weight)),
                         tape.scale(dice, cfg.dice_weight));
  b.total = combine_loss(b.ce, b.bce, b.dice, cfg);
  return b;
}

Generation SamaModel::generate(const ParamStore& params, const PreparedSample& sample,
                               const std::optional<std::vector<int>>& forced) const {
  // The visual prefix and object embeddings do not depend on generated text.
  ad::Tape vtape;
  const Visual vv = encode_visual(vtape, params, sample, nullptr);
  const Matrix keyframes = vv.keyframes.value(), aggregated = vv.aggregated.value();
  std::vector<std::pair<int, Matrix>> slot_values;
  for (const ObjectSlot& s : vv.slots) {
    if (s.position <= sample.prompt_length) slot_values.emplace_back(s.position, s.embedding.value());
  }

  std::vector<int> ids(sample.ids.begin(), sample.ids.begin() + sample.prompt_length);
  auto run = [&](ad::Tape& tape, const std::vector<int>& seq) {
    std::vector<ObjectSlot> slots;
    for (const auto& [p, e] : slot_values) slots.push_back({p, tape.constant(e)});
    TokenStream st = assemble_stream(tape, tape.constant(keyframes), tape.constant(aggregated), seq,
                                     lm_.embedding_table(tape, params), slots, SpecialTokens::seg);
    ad::Var h = lm_.hidden(tape, params, st.embeddings, st.visual_prefix());
    return std::make_pair(st, h);
  };

  Generation g;
  if (forced) {
    g.response_ids = *forced;
    ids.insert(ids.end(), forced->begin(), forced->end());
  } else {
    const int limit = std::min(cfg_.max_new_tokens, cfg_.lm.max_seq_len - static_cast<int>(keyframes.rows() + aggregated.rows() + slot_values.size() + ids.size()));
    for (int step = 0; step < limit; ++step) {
      ad::Tape tape;
      auto [st, h] = run(tape, ids);
      const Matrix logits = lm_.logits(tape, params, tape.slice_rows(h, h.rows() - 1, 1)).value();
      Eigen::Index next = 0;
      logits.row(0).maxCoeff(&next);
      if (next == SpecialTokens::eos) break;
      ids.push_back(static_cast<int>(next));
      g.response_ids.push_back(static_cast<int>(next));
    }
  }
  g.text = tokenizer_.decode(g.response_ids);

  ad::Tape tape;
  auto [st, h] = run(tape, ids);
  Matrix response_hidden(static_cast<Eigen::Index>(g.response_ids.size()), cfg_.lm.dim);
  for (std::size_t i = 0; i < g.response_ids.size(); ++i) {
    const int pos = st.text_positions[static_cast<std::size_t>(sample.prompt_length) + i];
    response_hidden.row(static_cast<Eigen::Index>(i)) = h.value().row(pos);
  }
  const std::vector<SegHiddenState> states = extract_seg_states(g.response_ids, response_hidden, SpecialTokens::seg);
  std::vector<GroundedPhrase> phrases;
  try {
    phrases = ground_response(g.text, states, decoder_, params, sample.features);
  } catch (const ParseError&) {
    g.markup_error = true;
    for (const SegHiddenState& s : states) phrases.push_back({"", decoder_.decode(params, s, sample.features), true});
  }
  for (GroundedPhrase& p : phrases) {
    for (BinaryMask& m : p.track.masks) m = resize_nearest(m, sample.frame_width, sample.frame_height);
  }
  g.phrases = std::move(phrases);
  return g;
}

}  // namespace sama
