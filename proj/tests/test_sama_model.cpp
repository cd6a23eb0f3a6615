#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "sama/datagen.hpp"
#include "sama/errors.hpp"
#include "sama/oracles.hpp"
#include "sama/sama_model.hpp"

using namespace sama;

namespace {

// Two-frame, four-pixel instance small enough for finite differences.
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

Tokenizer tokenizer_for(const std::vector<GroundedDialogueRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& r : records) {
    for (const auto& t : r.conversation) texts.push_back(t.text);
  }
  return Tokenizer::build(texts);
}

struct Fixture {
  std::vector<GroundedDialogueRecord> records;
  SamaModel model;
  ParamStore params;
  explicit Fixture(ModelConfig cfg, int n = 4, int frames = 8, std::uint64_t seed = 1)
      : records(generate_synthetic_corpus(n, seed, {frames, 32, 2, 3})),
        model(cfg, tokenizer_for(records)),
        params(model.init_params(seed)) {}
  PreparedSample sample(std::size_t i = 0) const { return model.prepare(records[i], params); }
};

double total_loss(const SamaModel& model, const ParamStore& params, const PreparedSample& s, const TrainConfig& tc) {
  ad::Tape tape;
  return model.loss(tape, model.forward(tape, params, s), tc).total;
}

}  // namespace

TEST_CASE("prepared samples follow the turn layout") {
  Fixture f(ModelConfig{});
  const PreparedSample s = f.sample();
  CHECK(s.ids.front() == SpecialTokens::bos);
  CHECK(s.ids.back() == SpecialTokens::eos);
  CHECK(s.ids[static_cast<std::size_t>(s.prompt_length) - 1] == SpecialTokens::assistant);
  REQUIRE(s.segs.size() == 2);
  for (const auto& seg : s.segs) {
    CHECK(s.ids[static_cast<std::size_t>(seg.index)] == SpecialTokens::seg);
    REQUIRE(seg.object_id.has_value());
    CHECK(s.mask_targets.at(*seg.object_id).rows() == 8 * 32 * 32);
  }
  CHECK(s.regions.size() == 2);
  for (int t : s.targets) CHECK(t > 0);
  CHECK(s.features.num_frames() == 8);
  CHECK(s.features.patches() == 16);
  CHECK(s.features.channels() == 32);
}

TEST_CASE("forward shapes and stream composition at the default scale") {
  Fixture f(ModelConfig{});
  const PreparedSample s = f.sample();
  ad::Tape tape;
  const ForwardOutput out = f.model.forward(tape, f.params, s);
  // 5 keyframes x 16 patches, then 8 windows' worth of K_T queries over N=8 frames.
  CHECK(out.stream.keyframe_tokens == 80);
  CHECK(out.stream.aggregated_tokens > 0);
  CHECK(out.stream.length() ==
        out.stream.visual_prefix() + static_cast<int>(s.ids.size()) + static_cast<int>(s.regions.size()));
  CHECK(out.text_logits.value().rows() == static_cast<Eigen::Index>(s.targets.size()));
  CHECK(out.text_logits.value().cols() == f.model.tokenizer().size());
  CHECK(out.mask_logits.size() == 2);
  CHECK(out.hidden.value().rows() == out.stream.length());
}

TEST_CASE("initialization is deterministic per seed") {
  Fixture f(ModelConfig{});
  const ParamStore a = f.model.init_params(7), b = f.model.init_params(7), c = f.model.init_params(8);
  REQUIRE(a.names() == b.names());
  bool differs = false;
  for (const auto& n : a.names()) {
    CHECK(a.get(n) == b.get(n));
    differs = differs || a.get(n) != c.get(n);
  }
  CHECK(differs);
  CHECK_FALSE(a.trainable("encoder.proj"));
  CHECK(a.trainable("kf_proj.w"));
}

TEST_CASE("text loss weight scales only the cross-entropy term") {
  Fixture f(ModelConfig{});
  const PreparedSample s = f.sample();
  ad::Tape tape;
  const ForwardOutput out = f.model.forward(tape, f.params, s);
  TrainConfig one, three_halves;
  three_halves.text_loss_weight = 1.5;
  const LossBreakdown a = f.model.loss(tape, out, one), b = f.model.loss(tape, out, three_halves);
  CHECK(std::abs((b.total - a.total) - 0.5 * a.ce) < 1e-9);
  CHECK(a.total == doctest::Approx(a.ce + a.bce + a.dice).epsilon(1e-12));
  CHECK(combine_loss(2.0, 3.0, 4.0, three_halves) == doctest::Approx(10.0));
}

TEST_CASE("unsupervised [SEG] leaves the mask terms at zero") {
  Fixture f(ModelConfig{});
  GroundedDialogueRecord r = f.records[0];
  r.conversation = {{"user", "What is <region:o0> doing?"}, {"assistant", "moves right."}};
  const PreparedSample s = f.model.prepare(r, f.params);
  ad::Tape tape;
  const LossBreakdown l = f.model.loss(tape, f.model.forward(tape, f.params, s), TrainConfig{});
  CHECK(l.bce == 0.0);
  CHECK(l.dice == 0.0);
  CHECK(l.total == doctest::Approx(l.ce).epsilon(1e-12));
}

TEST_CASE("ablation removes exactly the aggregated tokens and the aggregator tensors") {
  ModelConfig full = ModelConfig{};
  TrainConfig ablate;
  ablate.ablate_stc = true;
  Fixture with(full), without(effective_model_config(full, ablate));
  const PreparedSample a = with.sample(), b = without.sample();
  ad::Tape ta, tb;
  const ForwardOutput fa = with.model.forward(ta, with.params, a);
  const ForwardOutput fb = without.model.forward(tb, without.params, b);
  CHECK(fb.stream.aggregated_tokens == 0);
  CHECK(fa.stream.length() - fb.stream.length() == fa.stream.aggregated_tokens);
  for (const auto& n : without.params.names()) CHECK(n.rfind("aggregator.", 0) != 0);

  tb.backward(without.model.loss(tb, fb, ablate).total_var);
  for (const auto& [name, g] : tb.param_grads()) CHECK(name.rfind("aggregator.", 0) != 0);
}

TEST_CASE("lr zero leaves every tensor unchanged") {
  Fixture f(ModelConfig{}, 2);
  const ParamStore before = f.params;
  TrainConfig tc;
  tc.lr = 0.0;
  tc.steps = 3;
  train(f.model, f.params, {f.sample(0), f.sample(1)}, tc);
  for (const auto& n : before.names()) CHECK(before.get(n) == f.params.get(n));
}

TEST_CASE("frozen tensors stay fixed while trainable ones move") {
  Fixture f(ModelConfig{}, 2);
  f.params.set_all_trainable(false);
  f.params.set_trainable("obj_proj.w", true);
  const ParamStore before = f.params;
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.steps = 3;
  train(f.model, f.params, {f.sample(0)}, tc);
  for (const auto& n : before.names()) {
    INFO(n);
    if (n == "obj_proj.w") {
      CHECK(before.get(n) != f.params.get(n));
    } else {
      CHECK(before.get(n) == f.params.get(n));
    }
  }
}

TEST_CASE("freeze_lm keeps the language model fixed") {
  Fixture f(ModelConfig{}, 2);
  const ParamStore before = f.params;
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.steps = 2;
  tc.freeze_lm = true;
  train(f.model, f.params, {f.sample(0)}, tc);
  CHECK(before.get("lm.tok_emb") == f.params.get("lm.tok_emb"));
  CHECK(before.get("kf_proj.w") != f.params.get("kf_proj.w"));
  CHECK(before.get("encoder.proj") == f.params.get("encoder.proj"));
}

TEST_CASE("training is deterministic for a fixed seed") {
  Fixture a(ModelConfig{}, 3), b(ModelConfig{}, 3);
  TrainConfig tc;
  tc.steps = 4;
  tc.lr = 1e-3;
  const std::vector<PreparedSample> da{a.sample(0), a.sample(1), a.sample(2)};
  const std::vector<PreparedSample> db{b.sample(0), b.sample(1), b.sample(2)};
  const TrainResult ra = train(a.model, a.params, da, tc), rb = train(b.model, b.params, db, tc);
  REQUIRE(ra.curve.size() == 4);
  for (std::size_t i = 0; i < ra.curve.size(); ++i) CHECK(ra.curve[i].total == rb.curve[i].total);
}

TEST_CASE("text predictions are causal in the response") {
  Fixture f(ModelConfig{});
  const PreparedSample s = f.sample();
  ad::Tape t1;
  const Matrix base = f.model.forward(t1, f.params, s).text_logits.value();
  PreparedSample changed = s;
  const int last = s.targets.back() - 1;  // last content token before the final <eos>
  changed.ids[static_cast<std::size_t>(last)] = SpecialTokens::unk;
  ad::Tape t2;
  const Matrix after = f.model.forward(t2, f.params, changed).text_logits.value();
  // Rows predicting tokens up to and including `last` see only earlier inputs.
  for (std::size_t k = 0; k < s.targets.size(); ++k) {
    if (s.targets[k] <= last) CHECK((base.row(static_cast<Eigen::Index>(k)) - after.row(static_cast<Eigen::Index>(k))).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((base.bottomRows(1) - after.bottomRows(1)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("end-to-end gradients match central differences on a micro instance") {
  Fixture f(micro_config(), 1, 2, 3);
  const PreparedSample s = f.sample();
  TrainConfig tc;
  ad::Tape tape;
  tape.backward(f.model.loss(tape, f.model.forward(tape, f.params, s), tc).total_var);
  const auto analytic = tape.param_grads();
  const auto checks = oracle::finite_difference_check(
      f.params, [&](const ParamStore& p) { return total_loss(f.model, p, s, tc); }, analytic);
  CHECK(checks.size() > 10);
  for (const auto& c : checks) {
    INFO(c.name << " numeric norm " << c.numeric_norm);
    CHECK(analytic.count(c.name) == 1);
    CHECK(c.relative_error <= 1e-4);
  }
}

TEST_CASE("forced decoding of a grounded answer yields one track at source resolution") {
  Fixture f(ModelConfig{});
  const PreparedSample s = f.sample();
  const std::vector<int> forced(s.ids.begin() + s.prompt_length, s.ids.end() - 1);
  const Generation g = f.model.generate(f.params, s, forced);
  CHECK(g.response_ids == forced);
  REQUIRE(g.phrases.size() == 1);
  CHECK_FALSE(g.markup_error);
  CHECK(g.phrases[0].track.frames() == 8);
  CHECK(g.phrases[0].track.masks[0].width() == 32);
}

TEST_CASE("greedy generation stops within the token budget") {
  ModelConfig cfg;
  cfg.max_new_tokens = 5;
  Fixture f(cfg);
  const Generation g = f.model.generate(f.params, f.sample());
  CHECK(g.response_ids.size() <= 5);
}

TEST_CASE("checkpoints round-trip configs, vocabulary and tensors") {
  Fixture f(micro_config(), 2, 2);
  Checkpoint ck{f.model.config(), TrainConfig{}, f.model.tokenizer().vocab(), f.params};
  ck.train.lr = 0.125;
  const auto path = std::filesystem::temp_directory_path() / "sama_ckpt_test.bin";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back.model == ck.model);
  CHECK(back.train == ck.train);
  CHECK(back.vocab == ck.vocab);
  REQUIRE(back.params.names() == ck.params.names());
  for (const auto& n : ck.params.names()) {
    CHECK(back.params.get(n) == ck.params.get(n));
    CHECK(back.params.trainable(n) == ck.params.trainable(n));
  }
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), DataError);
}

TEST_CASE("records the model cannot consume are rejected") {
  Fixture f(ModelConfig{});
  GroundedDialogueRecord r = f.records[0];
  r.conversation[0].text = "What is <region:zz> doing?";
  CHECK_THROWS_AS(f.model.prepare(r, f.params), DataError);
  ModelConfig bad;
  bad.lm.dim = 64;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
