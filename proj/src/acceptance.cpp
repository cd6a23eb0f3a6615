#include "sama/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "sama/datagen.hpp"
#include "sama/errors.hpp"
#include "sama/metrics.hpp"
#include "sama/oracles.hpp"
#include "sama/sama_model.hpp"

#ifndef SAMA_SOURCE_DIR
#define SAMA_SOURCE_DIR "."
#endif

namespace sama {

namespace {

Matrix gaussian(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

VideoFeatures random_video(int frames, int patches, int dim, Rng& rng) {
  std::vector<Matrix> out;
  for (int i = 0; i < frames; ++i) out.push_back(gaussian(patches, dim, rng));
  return VideoFeatures::from_frames(std::move(out));
}

int pick(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

CheckResult result(int id, bool pass, std::string detail) { return {id, "", pass, std::move(detail), 0.0}; }

// ------------------------------------------------------------------ 1

CheckResult context_oracle(const AcceptanceOptions&) {
  AggregatorConfig cfg;
  cfg.visual_dim = 3;
  cfg.llm_dim = 4;
  cfg.spatial_queries = 2;
  cfg.temporal_queries = 2;
  cfg.window = 2;
  cfg.stride = 2;
  cfg.heads = 1;
  cfg.context_heads = 1;
  Rng rng(20240);
  ParamStore params;
  StcAggregator(cfg).init_params(params, rng);
  const Matrix wq = gaussian(3, 3, rng), wk = gaussian(3, 3, rng), wv = gaussian(3, 3, rng), wp = gaussian(3, 4, rng);
  params.get_mut("aggregator.context.wq") = wq;
  params.get_mut("aggregator.context.wk") = wk;
  params.get_mut("aggregator.context.wv") = wv;
  params.get_mut("aggregator.context.wp") = wp;
  const Matrix f0 = gaussian(2, 3, rng), f1 = gaussian(2, 3, rng), z = gaussian(2, 3, rng);
  const AggregatedContext got =
      context_aggregate(VideoFeatures::from_frames({f0, f1}), TemporalTokens{z, {}}, cfg, params);
  const auto want = oracle::context_attention({oracle::to_grid(f0), oracle::to_grid(f1)}, oracle::to_grid(z),
                                              oracle::to_grid(wq), oracle::to_grid(wk), oracle::to_grid(wv),
                                              oracle::to_grid(wp));
  double worst = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 4; ++j) {
      worst = std::max(worst, std::abs(got.data(i, j) - want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
    }
  }
  return result(1, got.data.rows() == 2 && worst <= 1e-6, "max abs diff " + fmt(worst));
}

// ------------------------------------------------------------------ 2

ModelConfig micro_config() {
  ModelConfig m;
  m.encoder.image_size = 4;
  m.encoder.grid = 2;
  m.encoder.visual_dim = 4;
  m.aggregator.visual_dim = 4;
  m.aggregator.llm_dim = 8;
  m.aggregator.spatial_queries = 2;
  m.aggregator.temporal_queries = 2;
  m.aggregator.window = 2;
  m.aggregator.stride = 2;
  m.aggregator.heads = 2;
  m.aggregator.ffn_mult = 2;
  m.lm.dim = 8;
  m.lm.heads = 2;
  m.lm.layers = 1;
  m.lm.ffn_mult = 2;
  m.keyframes = 2;
  m.min_patch_coverage = 0.0;
  return m;
}

Tokenizer conversation_tokenizer(const std::vector<GroundedDialogueRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    for (const auto& t : r.conversation) texts.push_back(t.text);
  }
  return Tokenizer::build(texts);
}

CheckResult gradient_suite(const AcceptanceOptions&) {
  const auto records = generate_synthetic_corpus(1, 3, {2, 32, 2, 3});
  const SamaModel model(micro_config(), conversation_tokenizer(records));
  ParamStore params = model.init_params(3);
  const PreparedSample s = model.prepare(records[0], params);
  const TrainConfig tc;
  ad::Tape tape;
  tape.backward(model.loss(tape, model.forward(tape, params, s), tc).total_var);
  const auto analytic = tape.param_grads();
  const auto loss = [&](const ParamStore& p) {
    ad::Tape t;
    return model.loss(t, model.forward(t, p, s), tc).total;
  };
  const auto checks = oracle::finite_difference_check(params, loss, analytic);
  std::size_t trainable = 0;
  for (const auto& n : params.names()) trainable += params.trainable(n) ? 1 : 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : checks) {
    if (c.relative_error > worst) {
      worst = c.relative_error;
      worst_name = c.name;
    }
  }
  const bool covered = checks.size() == trainable && analytic.size() == trainable;
  return result(2, covered && worst <= 1e-4,
                std::to_string(checks.size()) + " tensors, max rel err " + fmt(worst) + " (" + worst_name + ")");
}

// ------------------------------------------------------------------ 3

CheckResult attention_rows(const AcceptanceOptions&) {
  Rng rng(31337);
  double worst = 0.0;
  long rows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    AggregatorConfig cfg;
    const int heads = pick(rng, 1, 3);
    cfg.heads = heads;
    cfg.visual_dim = heads * pick(rng, 1, 3) * 2;
    cfg.context_heads = cfg.visual_dim % 2 == 0 && pick(rng, 0, 1) == 1 ? 2 : 1;
    cfg.llm_dim = pick(rng, 2, 8);
    cfg.spatial_queries = pick(rng, 1, 4);
    cfg.temporal_queries = pick(rng, 1, 3);
    cfg.window = pick(rng, 1, 5);
    cfg.stride = pick(rng, 1, cfg.window);
    cfg.ffn_mult = pick(rng, 1, 2);
    ParamStore params;
    StcAggregator(cfg).init_params(params, rng);
    const VideoFeatures video = random_video(pick(rng, 1, 9), pick(rng, 1, 6), cfg.visual_dim, rng);
    const Matrix question = gaussian(pick(rng, 1, 4), cfg.visual_dim, rng);
    std::optional<Matrix> objects;
    if (pick(rng, 0, 1) == 1) objects = gaussian(pick(rng, 1, 2), cfg.visual_dim, rng);
    AggregatorProbe probe;
    aggregate(video, question, objects, cfg, params, &probe);
    for (const auto* stage : {&probe.spatial, &probe.temporal_self, &probe.temporal_cross, &probe.context}) {
      if (stage->weights.empty()) return result(3, false, "a stage recorded no attention in trial " + std::to_string(trial));
      for (const Matrix& w : stage->weights) {
        worst = std::max(worst, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
        rows += w.rows();
      }
    }
  }
  return result(3, worst <= 1e-6, std::to_string(rows) + " rows, max |sum-1| " + fmt(worst));
}

// ------------------------------------------------------------------ 4

CheckResult window_arithmetic(const AcceptanceOptions&) {
  Rng rng(4242);
  for (int trial = 0; trial < 50; ++trial) {
    AggregatorConfig cfg;
    cfg.visual_dim = 4;
    cfg.heads = 2;
    cfg.llm_dim = 4;
    cfg.spatial_queries = 2;
    cfg.temporal_queries = pick(rng, 1, 4);
    cfg.window = pick(rng, 1, 9);
    cfg.stride = pick(rng, 1, cfg.window);
    cfg.ffn_mult = 1;
    const int n = pick(rng, 1, 40);
    ParamStore params;
    StcAggregator(cfg).init_params(params, rng);
    const SpatialTokens spatial = spatial_aggregate(random_video(n, 2, 4, rng), cfg, params);
    const TemporalTokens t = temporal_aggregate(spatial, gaussian(1, 4, rng), std::nullopt, cfg, params);
    const auto want = oracle::windows(n, cfg.window, cfg.stride);
    bool same = t.windows.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) {
      same = t.windows[i].start == want[i].first && t.windows[i].end == want[i].second;
    }
    const auto k_final = static_cast<Eigen::Index>(want.size()) * cfg.temporal_queries;
    if (!same || t.data.rows() != k_final) {
      return result(4, false,
                    "mismatch at N_L=" + std::to_string(n) + " W_T=" + std::to_string(cfg.window) +
                        " stride=" + std::to_string(cfg.stride));
    }
  }
  return result(4, true, "50 triples agree");
}

// ------------------------------------------------------------------ 5

CheckResult ablation_contract(const AcceptanceOptions&) {
  const auto records = generate_synthetic_corpus(1, 5);
  const Tokenizer tok = conversation_tokenizer(records);
  TrainConfig ablate;
  ablate.ablate_stc = true;
  const SamaModel full(ModelConfig{}, tok), reduced(effective_model_config(ModelConfig{}, ablate), tok);
  const ParamStore pf = full.init_params(5), pr = reduced.init_params(5);
  ad::Tape ta, tb;
  const ForwardOutput fa = full.forward(ta, pf, full.prepare(records[0], pf));
  const ForwardOutput fb = reduced.forward(tb, pr, reduced.prepare(records[0], pr));
  tb.backward(reduced.loss(tb, fb, ablate).total_var);
  int aggregator_grads = 0;
  for (const auto& [name, g] : tb.param_grads()) aggregator_grads += name.rfind("aggregator.", 0) == 0 ? 1 : 0;
  int aggregator_tensors = 0;
  for (const auto& name : pr.names()) aggregator_tensors += name.rfind("aggregator.", 0) == 0 ? 1 : 0;
  const int shortened = fa.stream.length() - fb.stream.length();
  const bool pass = fa.stream.aggregated_tokens > 0 && fb.stream.aggregated_tokens == 0 &&
                    shortened == fa.stream.aggregated_tokens && aggregator_grads == 0 && aggregator_tensors == 0;
  return result(5, pass,
                "stream " + std::to_string(fa.stream.length()) + " -> " + std::to_string(fb.stream.length()) +
                    " (aggregated " + std::to_string(fa.stream.aggregated_tokens) + "), aggregator grads " +
                    std::to_string(aggregator_grads));
}

// ------------------------------------------------------------------ 6

CheckResult toy_training(const AcceptanceOptions&) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig defaults;
  const int n_train = defaults.data.synthetic_videos, n_held = defaults.data.heldout;
  const auto records = generate_synthetic_corpus(n_train + n_held, defaults.seed,
                                                 {defaults.data.synthetic_frames, defaults.data.synthetic_size, 2, 4});
  const SamaModel model(defaults.model, conversation_tokenizer(records));
  ParamStore params = model.init_params(defaults.seed);
  std::vector<PreparedSample> train_set, held;
  for (int i = 0; i < n_train + n_held; ++i) {
    (i < n_train ? train_set : held).push_back(model.prepare(records[static_cast<std::size_t>(i)], params));
  }
  const TrainResult res = train(model, params, train_set, defaults.train);
  int with_seg = 0;
  for (const PreparedSample& s : held) {
    const Generation g = model.generate(params, s);
    with_seg += std::count(g.response_ids.begin(), g.response_ids.end(), SpecialTokens::seg) > 0 ? 1 : 0;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ratio = res.final_smoothed / res.initial_smoothed;
  const double seg_rate = static_cast<double>(with_seg) / static_cast<double>(held.size());
  return result(6, ratio <= 0.5 && seg_rate >= 0.8 && seconds < 600.0,
                "loss ratio " + fmt(ratio) + ", [SEG] in " + std::to_string(with_seg) + "/" +
                    std::to_string(held.size()) + ", " + fmt(seconds) + " s");
}

// ------------------------------------------------------------------ 7

MaskTrack random_track(Rng& rng, int frames, int w, int h) {
  std::bernoulli_distribution on(std::uniform_real_distribution<double>(0.05, 0.6)(rng));
  MaskTrack t;
  for (int f = 0; f < frames; ++f) {
    BinaryMask m(w, h);
    for (auto& b : m.bits()) b = on(rng) ? 1 : 0;
    t.masks.push_back(m);
  }
  return t;
}

CheckResult metric_oracles(const AcceptanceOptions&) {
  Rng rng(777);
  int exact = 0;
  for (int i = 0; i < 100; ++i) {
    const int frames = pick(rng, 1, 4), w = pick(rng, 1, 12), h = pick(rng, 1, 12);
    const MaskTrack a = random_track(rng, frames, w, h), b = random_track(rng, frames, w, h);
    exact += st_iou(a, b) == oracle::st_iou(oracle::track_to_pixels(a), oracle::track_to_pixels(b)) ? 1 : 0;
  }
  const double m = meteor("cat", {"cat"}, MeteorParams{0.9, 3.0, 0.5});
  const CiderScores c =
      cider({"a red car drives right", "the blue ball falls down"}, {{"a red car drives right"}, {"the blue ball falls down"}});
  const double cider_err = std::abs(c.per_sample[0] - 10.0);
  return result(7, exact == 100 && m == 0.5 && cider_err <= 1e-9,
                "st_iou exact " + std::to_string(exact) + "/100, METEOR " + fmt(m) + ", CIDEr err " + fmt(cider_err));
}

// ------------------------------------------------------------------ 8

CheckResult loss_weight_identity(const AcceptanceOptions&) {
  const auto records = generate_synthetic_corpus(1, 8);
  const SamaModel model(ModelConfig{}, conversation_tokenizer(records));
  const ParamStore params = model.init_params(8);
  ad::Tape tape;
  const ForwardOutput out = model.forward(tape, params, model.prepare(records[0], params));
  TrainConfig one, three_halves;
  three_halves.text_loss_weight = 1.5;
  const LossBreakdown a = model.loss(tape, out, one), b = model.loss(tape, out, three_halves);
  const double err = std::abs((b.total - a.total) - 0.5 * a.ce);
  return result(8, a.ce > 0.0 && err <= 1e-9, "CE " + fmt(a.ce) + ", identity err " + fmt(err));
}

// ------------------------------------------------------------------ 9

std::map<std::string, std::string> file_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[std::filesystem::relative(e.path(), dir).string()] = ss.str();
  }
  return out;
}

CheckResult data_pipeline(const AcceptanceOptions& o) {
  const auto base = o.scratch_dir / "datagen";
  std::filesystem::remove_all(base);
  std::map<std::string, std::string> trees[2];
  std::size_t records = 0;
  int invalid = 0;
  for (int run = 0; run < 2; ++run) {
    BoxFillSegmenter segmenter;
    const auto sources = filter_sources(load_sources(o.sources_dir / "mask_index.json", o.sources_dir / "boxes.csv", segmenter, 4));
    PipelineOptions opts;
    opts.frame_dir = o.sources_dir;
    opts.out_dir = base / std::to_string(run);
    opts.templates = PromptTemplates::load(o.template_dir);
    FixtureClient client = FixtureClient::from_file(o.sources_dir / "fixture_replies.json");
    const PipelineResult res = run_annotation_pipeline(sources, client, opts);
    emit_jsonl(res.records, opts.out_dir / "corpus.jsonl");
    for (const auto& r : res.records) {
      std::vector<std::string> ids;
      for (const auto& obj : r.objects) ids.push_back(obj.object_id);
      invalid += validate_conversation(r.conversation, ids).ok() && color_bijection(r) ? 0 : 1;
    }
    records = res.records.size();
    trees[run] = file_tree(opts.out_dir);
  }
  const bool deterministic = trees[0] == trees[1] && !trees[0].empty();

  const auto corpus = generate_synthetic_corpus(1000, 9);
  const auto path = base / "roundtrip.jsonl";
  emit_jsonl(corpus, path);
  const bool round_trip = load_jsonl(path) == corpus;
  std::filesystem::remove_all(base);
  return result(9, records == 3 && deterministic && invalid == 0 && round_trip,
                std::to_string(records) + " videos, " + std::to_string(trees[0].size()) + " files, deterministic " +
                    (deterministic ? "yes" : "no") + ", invalid " + std::to_string(invalid) + ", round trip " +
                    (round_trip ? "identity" : "differs"));
}

// ------------------------------------------------------------------ 10

CheckResult prompt_parity(const AcceptanceOptions&) {
  Rng rng(1010);
  const Matrix features = gaussian(16, 32, rng);
  const Matrix projection = gaussian(32, 128, rng);
  double worst = 0.0;
  int boxes = 0;
  while (boxes < 50) {
    const int x0 = pick(rng, 0, 31), x1 = pick(rng, 0, 32), y0 = pick(rng, 0, 31), y1 = pick(rng, 0, 32);
    if (x0 >= x1 || y0 >= y1) continue;
    ++boxes;
    ObjectPrompt box;
    box.kind = PromptKind::box;
    box.box = {x0, y0, x1, y1};
    ObjectPrompt mask;
    mask.kind = PromptKind::mask;
    mask.mask = BinaryMask(32, 32);
    mask.mask.fill_box(box.box);
    const ObjectEmbedding a = mask_pool(features, prompt_to_mask(box, 32, 32), {4, 4}, projection);
    const ObjectEmbedding b = mask_pool(features, prompt_to_mask(mask, 32, 32), {4, 4}, projection);
    worst = std::max({worst, (a.data - b.data).cwiseAbs().maxCoeff(), (a.pooled - b.pooled).cwiseAbs().maxCoeff()});
  }
  return result(10, worst <= 1e-9, "50 boxes, max abs diff " + fmt(worst));
}

}  // namespace

AcceptanceOptions AcceptanceOptions::from_source_tree() {
  AcceptanceOptions o;
  const std::filesystem::path root(SAMA_SOURCE_DIR);
  o.sources_dir = root / "tests" / "data" / "sources";
  o.template_dir = root / "assets" / "prompts" / "v1";
  o.scratch_dir = std::filesystem::temp_directory_path() / ("sama_acceptance_" + std::to_string(std::random_device{}()));
  return o;
}

const std::vector<AcceptanceCheck>& acceptance_checks() {
  static const std::vector<AcceptanceCheck> checks{
      {1, "context aggregation matches the explicit-loop oracle", false, context_oracle},
      {2, "end-to-end analytic gradients match finite differences", false, gradient_suite},
      {3, "attention rows sum to one in every aggregator stage", false, attention_rows},
      {4, "temporal windows and K_final match the enumeration oracle", false, window_arithmetic},
      {5, "ablation shortens the stream and silences aggregator gradients", false, ablation_contract},
      {6, "toy training halves the loss and emits [SEG]", true, toy_training},
      {7, "metrics agree with their oracles", false, metric_oracles},
      {8, "text loss weight scales only the cross-entropy term", false, loss_weight_identity},
      {9, "fixture datagen is deterministic and valid; JSONL round-trips", false, data_pipeline},
      {10, "box and filled-box mask prompts embed identically", false, prompt_parity},
  };
  return checks;
}

std::vector<CheckResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out) {
  std::vector<CheckResult> results;
  std::filesystem::create_directories(options.scratch_dir);
  for (const AcceptanceCheck& check : acceptance_checks()) {
    if (check.slow && !options.include_training) continue;
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = check.run(options);
    } catch (const std::exception& e) {
      r = result(check.id, false, std::string("exception: ") + e.what());
    }
    r.id = check.id;
    r.name = check.name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << (r.pass ? "PASS" : "FAIL") << "  [" << std::setw(2) << r.id << "] " << r.name << "  (" << r.detail << "; "
        << std::fixed << std::setprecision(2) << r.seconds << " s)" << std::defaultfloat << std::endl;
    results.push_back(std::move(r));
  }
  std::error_code ec;
  std::filesystem::remove_all(options.scratch_dir, ec);
  return results;
}

int run_selfcheck(std::ostream& log) {
  AcceptanceOptions o = AcceptanceOptions::from_source_tree();
  o.include_training = false;
  int failures = 0;
  for (const CheckResult& r : run_acceptance(o, log)) failures += r.pass ? 0 : 1;

  Rng rng(55);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    BinaryMask m(pick(rng, 1, 40), pick(rng, 1, 40));
    std::bernoulli_distribution on(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
    for (auto& b : m.bits()) b = on(rng) ? 1 : 0;
    mismatches += rle_decode(rle_encode(m)) == m ? 0 : 1;
  }
  log << (mismatches == 0 ? "PASS" : "FAIL") << "  [rle] mask run-length codec round-trips  (200 random masks, "
      << mismatches << " mismatches)" << std::endl;
  failures += mismatches == 0 ? 0 : 1;
  return failures;
}

}  // namespace sama
