#include "sama/stc_aggregator.hpp"

#include "sama/errors.hpp"

#include <algorithm>

namespace sama {

void AggregatorConfig::validate() const {
  if (spatial_queries < 1) throw ConfigError("aggregator: spatial_queries must be >= 1");
  if (temporal_queries < 1) throw ConfigError("aggregator: temporal_queries must be >= 1");
  if (window < 1) throw ConfigError("aggregator: window must be >= 1");
  if (stride < 1 || stride > window) throw ConfigError("aggregator: stride must lie in [1, window]");
  if (heads < 1 || context_heads < 1) throw ConfigError("aggregator: head counts must be >= 1");
  if (visual_dim < 1 || llm_dim < 1) throw ConfigError("aggregator: widths must be >= 1");
  if (visual_dim % heads != 0) throw ConfigError("aggregator: visual_dim must be divisible by heads");
  if (visual_dim % context_heads != 0) throw ConfigError("aggregator: visual_dim must be divisible by context_heads");
  if (ffn_mult < 1) throw ConfigError("aggregator: ffn_mult must be >= 1");
  if (long_frame_step < 1) throw ConfigError("aggregator: long_frame_step must be >= 1");
}

void VideoFeatures::validate() const {
  if (frames.empty()) throw InputError("video features: no frames");
  const Eigen::Index p = frames.front().rows(), d = frames.front().cols();
  if (p < 1 || d < 1) throw InputError("video features: empty frame tensor");
  for (const Matrix& f : frames) {
    if (f.rows() != p || f.cols() != d) throw InputError("video features: frames differ in shape");
    if (!f.allFinite()) throw InputError("video features: non-finite entry");
  }
  if (frame_indices.size() != frames.size()) throw InputError("video features: frame index count mismatch");
  for (std::size_t i = 1; i < frame_indices.size(); ++i) {
    if (frame_indices[i] <= frame_indices[i - 1]) throw InputError("video features: frame indices not strictly increasing");
  }
}

VideoFeatures VideoFeatures::select_every(int step) const {
  VideoFeatures out;
  for (std::size_t i = 0; i < frames.size(); i += static_cast<std::size_t>(step)) {
    out.frames.push_back(frames[i]);
    out.frame_indices.push_back(frame_indices[i]);
  }
  return out;
}

VideoFeatures VideoFeatures::from_frames(std::vector<Matrix> frames) {
  VideoFeatures out;
  out.frames = std::move(frames);
  out.frame_indices.resize(out.frames.size());
  for (std::size_t i = 0; i < out.frame_indices.size(); ++i) out.frame_indices[i] = static_cast<int>(i);
  return out;
}

std::vector<WindowSpan> enumerate_windows(int num_frames, int window, int stride) {
  if (num_frames < 1) throw InputError("temporal windows: no frames");
  if (window < 1 || stride < 1) throw ConfigError("temporal windows: window and stride must be >= 1");
  std::vector<WindowSpan> out;
  for (int start = 0; start < num_frames; start += stride) {
    const int end = std::min(start + window, num_frames);
    out.push_back({start, end});
    if (end == num_frames) break;
  }
  return out;
}

StcAggregator::StcAggregator(AggregatorConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
  cfg_.validate();
}

std::vector<std::string> StcAggregator::param_names() const {
  std::vector<std::string> out;
  const auto attn = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) out.push_back(name(p + "." + w));
  };
  const auto ffn = [&](const std::string& p) {
    for (const char* w : {"w1", "b1", "w2", "b2"}) out.push_back(name(p + "." + w));
  };
  out.push_back(name("spatial.queries"));
  attn("spatial.cross");
  ffn("spatial.ffn");
  out.push_back(name("temporal.queries"));
  attn("temporal.self");
  attn("temporal.cross");
  ffn("temporal.ffn");
  for (const char* w : {"context.wq", "context.wk", "context.wv", "context.wp"}) out.push_back(name(w));
  return out;
}

void StcAggregator::init_params(ParamStore& params, Rng& rng) const {
  const int d = cfg_.visual_dim, h = cfg_.visual_dim * cfg_.ffn_mult;
  const auto attn = [&](const std::string& p) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) params.add(name(p + "." + w), xavier_uniform(d, d, rng));
  };
  const auto ffn = [&](const std::string& p) {
    params.add(name(p + ".w1"), xavier_uniform(d, h, rng));
    params.add(name(p + ".b1"), Matrix::Zero(1, h));
    params.add(name(p + ".w2"), xavier_uniform(h, d, rng));
    params.add(name(p + ".b2"), Matrix::Zero(1, d));
  };
  params.add(name("spatial.queries"), normal_init(cfg_.spatial_queries, d, 0.02, rng));
  attn("spatial.cross");
  ffn("spatial.ffn");
  params.add(name("temporal.queries"), normal_init(cfg_.temporal_queries, d, 0.02, rng));
  attn("temporal.self");
  attn("temporal.cross");
  ffn("temporal.ffn");
  params.add(name("context.wq"), xavier_uniform(d, d, rng));
  params.add(name("context.wk"), xavier_uniform(d, d, rng));
  params.add(name("context.wv"), xavier_uniform(d, d, rng));
  params.add(name("context.wp"), xavier_uniform(d, cfg_.llm_dim, rng));
}

ad::Var StcAggregator::ffn(ad::Tape& tape, const ParamStore& params, const std::string& stage, ad::Var x) const {
  ad::Var hidden = tape.gelu(tape.add_row(tape.matmul(x, tape.param(params, name(stage + ".w1"))),
                                          tape.param(params, name(stage + ".b1"))));
  ad::Var out = tape.add_row(tape.matmul(hidden, tape.param(params, name(stage + ".w2"))),
                             tape.param(params, name(stage + ".b2")));
  return tape.add(x, out);
}

namespace {

// Residual attention block: x + MHA(x Wq, kv Wk, kv Wv) Wo.
ad::Var attention_block(ad::Tape& tape, const ParamStore& params, const std::string& p, ad::Var x, ad::Var kv,
                        int heads, ad::AttentionProbe* probe) {
  ad::Var q = tape.matmul(x, tape.param(params, p + ".wq"));
  ad::Var k = tape.matmul(kv, tape.param(params, p + ".wk"));
  ad::Var v = tape.matmul(kv, tape.param(params, p + ".wv"));
  ad::Var attended = ad::multi_head_attend(tape, q, k, v, heads, nullptr, probe);
  return tape.add(x, tape.matmul(attended, tape.param(params, p + ".wo")));
}

void check_channels(ad::Var v, int expected, const char* what) {
  if (v.cols() != expected) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(expected) + " channels, got " +
                      std::to_string(v.cols()));
  }
}

}  // namespace

std::vector<ad::Var> StcAggregator::spatial(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> frames,
                                            AggregatorProbe* probe) const {
  if (frames.empty()) throw InputError("spatial aggregation: no frames");
  ad::Var queries = tape.param(params, name("spatial.queries"));
  std::vector<ad::Var> out;
  out.reserve(frames.size());
  for (const ad::Var& f : frames) {
    check_channels(f, cfg_.visual_dim, "spatial aggregation");
    if (f.rows() < 1) throw InputError("spatial aggregation: frame without patches");
    if (!f.value().allFinite()) throw InputError("spatial aggregation: non-finite frame features");
    ad::Var x = attention_block(tape, params, name("spatial.cross"), queries, f, cfg_.heads,
                                probe ? &probe->spatial : nullptr);
    out.push_back(ffn(tape, params, "spatial.ffn", x));
  }
  return out;
}

StcAggregator::TemporalResult StcAggregator::temporal(ad::Tape& tape, const ParamStore& params,
                                                      std::span<const ad::Var> spatial_tokens, ad::Var question,
                                                      ad::Var objects, AggregatorProbe* probe) const {
  if (spatial_tokens.empty()) throw InputError("temporal aggregation: empty spatial input");
  const int d = cfg_.visual_dim;
  if (question.rows() > 0) check_channels(question, d, "temporal aggregation question");
  if (objects.rows() > 0) check_channels(objects, d, "temporal aggregation objects");
  for (const ad::Var& s : spatial_tokens) check_channels(s, d, "temporal aggregation");

  TemporalResult result;
  result.windows = enumerate_windows(static_cast<int>(spatial_tokens.size()), cfg_.window, cfg_.stride);
  ad::Var queries = tape.param(params, name("temporal.queries"));
  std::vector<ad::Var> query_side{queries, question, objects};
  ad::Var query_in = tape.concat_rows(query_side, d);

  std::vector<ad::Var> outputs;
  for (const WindowSpan& w : result.windows) {
    std::vector<ad::Var> members(spatial_tokens.begin() + w.start, spatial_tokens.begin() + w.end);
    ad::Var window_tokens = tape.concat_rows(members, d);
    ad::Var x = attention_block(tape, params, name("temporal.self"), query_in, query_in, cfg_.heads,
                                probe ? &probe->temporal_self : nullptr);
    x = attention_block(tape, params, name("temporal.cross"), x, window_tokens, cfg_.heads,
                        probe ? &probe->temporal_cross : nullptr);
    x = ffn(tape, params, "temporal.ffn", x);
    outputs.push_back(tape.slice_rows(x, 0, cfg_.temporal_queries));
  }
  result.tokens = tape.concat_rows(outputs, d);
  return result;
}

ad::Var StcAggregator::context(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> frames,
                               ad::Var temporal_tokens, AggregatorProbe* probe) const {
  if (frames.empty()) throw InputError("context aggregation: no frames");
  const int d = cfg_.visual_dim;
  if (temporal_tokens.cols() != frames.front().cols()) {
    throw ConfigError("context aggregation: frame and temporal token channels differ");
  }
  check_channels(temporal_tokens, d, "context aggregation");
  if (temporal_tokens.rows() < 1) throw InputError("context aggregation: no temporal tokens");
  const Eigen::Index patches = frames.front().rows();
  for (const ad::Var& f : frames) {
    check_channels(f, d, "context aggregation");
    if (f.rows() != patches) throw InputError("context aggregation: frames differ in patch count");
  }

  // All frames share keys/values, so the patch queries of every frame are
  // stacked into one attention call and split again for pooling.
  ad::Var stacked = tape.concat_rows(std::vector<ad::Var>(frames.begin(), frames.end()), d);
  ad::Var q = tape.matmul(stacked, tape.param(params, name("context.wq")));
  ad::Var k = tape.matmul(temporal_tokens, tape.param(params, name("context.wk")));
  ad::Var v = tape.matmul(temporal_tokens, tape.param(params, name("context.wv")));
  ad::Var enhanced = ad::multi_head_attend(tape, q, k, v, cfg_.context_heads, nullptr, probe ? &probe->context : nullptr);

  std::vector<ad::Var> pooled;
  pooled.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    pooled.push_back(tape.mean_rows(tape.slice_rows(enhanced, static_cast<Eigen::Index>(i) * patches, patches)));
  }
  ad::Var per_frame = tape.concat_rows(pooled, d);
  return tape.matmul(per_frame, tape.param(params, name("context.wp")));
}

ad::Var StcAggregator::aggregate(ad::Tape& tape, const ParamStore& params, std::span<const ad::Var> frames,
                                 ad::Var question, ad::Var objects, AggregatorProbe* probe) const {
  if (!cfg_.enabled) return tape.constant(Matrix::Zero(0, cfg_.llm_dim));
  std::vector<ad::Var> selected;
  for (std::size_t i = 0; i < frames.size(); i += static_cast<std::size_t>(cfg_.long_frame_step)) {
    selected.push_back(frames[i]);
  }
  std::vector<ad::Var> spatial_tokens = spatial(tape, params, selected, probe);
  TemporalResult temporal_out = temporal(tape, params, spatial_tokens, question, objects, probe);
  return context(tape, params, selected, temporal_out.tokens, probe);
}

namespace {

std::vector<ad::Var> frame_constants(ad::Tape& tape, const std::vector<Matrix>& frames) {
  std::vector<ad::Var> out;
  out.reserve(frames.size());
  for (const Matrix& f : frames) out.push_back(tape.constant(f));
  return out;
}

ad::Var optional_rows(ad::Tape& tape, const std::optional<Matrix>& m, int cols) {
  return m ? tape.constant(*m) : tape.constant(Matrix::Zero(0, cols));
}

void check_config_width(const VideoFeatures& frames, const AggregatorConfig& cfg) {
  if (frames.channels() != cfg.visual_dim) {
    throw ConfigError("video features have " + std::to_string(frames.channels()) + " channels, config expects " +
                      std::to_string(cfg.visual_dim));
  }
}

}  // namespace

SpatialTokens spatial_aggregate(const VideoFeatures& frames, const AggregatorConfig& cfg, const ParamStore& params,
                                AggregatorProbe* probe) {
  frames.validate();
  check_config_width(frames, cfg);
  StcAggregator agg(cfg);
  ad::Tape tape;
  auto vars = frame_constants(tape, frames.frames);
  SpatialTokens out;
  for (const ad::Var& v : agg.spatial(tape, params, vars, probe)) out.frames.push_back(v.value());
  return out;
}

TemporalTokens temporal_aggregate(const SpatialTokens& spatial, const Matrix& question,
                                  const std::optional<Matrix>& object_embeds, const AggregatorConfig& cfg,
                                  const ParamStore& params, AggregatorProbe* probe) {
  if (spatial.frames.empty()) throw InputError("temporal aggregation: empty spatial input");
  for (const Matrix& s : spatial.frames) {
    if (s.rows() != cfg.spatial_queries) throw ConfigError("temporal aggregation: spatial token count differs from K_S");
  }
  StcAggregator agg(cfg);
  ad::Tape tape;
  auto vars = frame_constants(tape, spatial.frames);
  ad::Var q = question.rows() > 0 ? tape.constant(question) : tape.constant(Matrix::Zero(0, cfg.visual_dim));
  auto res = agg.temporal(tape, params, vars, q, optional_rows(tape, object_embeds, cfg.visual_dim), probe);
  return TemporalTokens{res.tokens.value(), res.windows};
}

AggregatedContext context_aggregate(const VideoFeatures& frames, const TemporalTokens& temporal,
                                    const AggregatorConfig& cfg, const ParamStore& params, AggregatorProbe* probe) {
  frames.validate();
  if (temporal.data.cols() != frames.channels()) {
    throw ConfigError("context aggregation: frame and temporal token channels differ");
  }
  check_config_width(frames, cfg);
  StcAggregator agg(cfg);
  ad::Tape tape;
  auto vars = frame_constants(tape, frames.frames);
  return AggregatedContext{agg.context(tape, params, vars, tape.constant(temporal.data), probe).value()};
}

AggregatedContext aggregate(const VideoFeatures& frames, const Matrix& question,
                            const std::optional<Matrix>& object_embeds, const AggregatorConfig& cfg,
                            const ParamStore& params, AggregatorProbe* probe) {
  if (!cfg.enabled) return AggregatedContext{Matrix::Zero(0, cfg.llm_dim)};
  frames.validate();
  check_config_width(frames, cfg);
  StcAggregator agg(cfg);
  ad::Tape tape;
  auto vars = frame_constants(tape, frames.frames);
  ad::Var q = question.rows() > 0 ? tape.constant(question) : tape.constant(Matrix::Zero(0, cfg.visual_dim));
  return AggregatedContext{
      agg.aggregate(tape, params, vars, q, optional_rows(tape, object_embeds, cfg.visual_dim), probe).value()};
}

}  // namespace sama
