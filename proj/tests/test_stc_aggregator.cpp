#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sama/errors.hpp"
#include "sama/oracles.hpp"
#include "sama/stc_aggregator.hpp"

using namespace sama;

namespace {

VideoFeatures random_video(int n, int p, int d, Rng& rng) {
  std::vector<Matrix> frames;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Matrix f(p, d);
    for (Eigen::Index k = 0; k < f.size(); ++k) f.data()[k] = g(rng);
    frames.push_back(f);
  }
  return VideoFeatures::from_frames(std::move(frames));
}

AggregatorConfig small_config() {
  AggregatorConfig cfg;
  cfg.spatial_queries = 4;
  cfg.temporal_queries = 2;
  cfg.window = 2;
  cfg.stride = 2;
  cfg.heads = 2;
  cfg.visual_dim = 8;
  cfg.llm_dim = 6;
  cfg.ffn_mult = 2;
  return cfg;
}

ParamStore init(const AggregatorConfig& cfg, std::uint64_t seed) {
  ParamStore params;
  Rng rng(seed);
  StcAggregator(cfg).init_params(params, rng);
  return params;
}

}  // namespace

TEST_CASE("config invariants are enforced") {
  AggregatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.spatial_queries == 32);
  cfg.stride = cfg.window + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AggregatorConfig{};
  cfg.visual_dim = 30;
  cfg.heads = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AggregatorConfig{};
  cfg.spatial_queries = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("spatial aggregation keeps K_S tokens per frame") {
  AggregatorConfig cfg;  // K_S = 32, D_v = 32
  Rng rng(7);
  const VideoFeatures video = random_video(16, 64, 32, rng);
  const SpatialTokens out = spatial_aggregate(video, cfg, init(cfg, 1));
  REQUIRE(out.frames.size() == 16);
  long total = 0;
  for (const Matrix& f : out.frames) {
    CHECK(f.rows() == 32);
    CHECK(f.cols() == 32);
    CHECK(f.allFinite());
    total += f.rows();
  }
  CHECK(total == 512);
}

TEST_CASE("single-key attention returns the value vector") {
  AggregatorConfig cfg = small_config();
  cfg.spatial_queries = 1;
  cfg.heads = 1;
  ParamStore params = init(cfg, 3);
  params.get_mut("aggregator.spatial.cross.wv") = Matrix::Identity(8, 8);
  Rng rng(5);
  const VideoFeatures video = random_video(1, 1, 8, rng);
  AggregatorProbe probe;
  spatial_aggregate(video, cfg, params, &probe);
  REQUIRE(probe.spatial.weights.size() == 1);
  CHECK(probe.spatial.weights[0](0, 0) == 1.0);
  CHECK((probe.spatial.attended[0] - video.frames[0]).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("two-key scaled attention matches the scalar softmax oracle") {
  // Q=[1,0], K={[1,0],[0,1]}, V={[2,0],[0,2]}, scale sqrt(2).
  const double e = std::exp(1.0 / std::sqrt(2.0));
  const double w0 = e / (e + 1.0), w1 = 1.0 / (e + 1.0);
  CHECK(w0 == doctest::Approx(0.6698).epsilon(1e-4));
  CHECK(w1 == doctest::Approx(0.3302).epsilon(1e-4));

  ad::Tape tape;
  Matrix q(1, 2), k(2, 2), v(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 2, 0, 0, 2;
  ad::AttentionProbe probe;
  ad::Var out = ad::multi_head_attend(tape, tape.constant(q), tape.constant(k), tape.constant(v), 1, nullptr, &probe);
  CHECK(probe.weights[0](0, 0) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(probe.weights[0](0, 1) == doctest::Approx(w1).epsilon(1e-12));
  CHECK(out.value()(0, 0) == doctest::Approx(2 * w0).epsilon(1e-12));
  CHECK(out.value()(0, 1) == doctest::Approx(2 * w1).epsilon(1e-12));
  CHECK(out.value()(0, 0) == doctest::Approx(1.3396).epsilon(1e-4));
}

TEST_CASE("spatial aggregation is frame-permutation equivariant") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 11);
  Rng rng(12);
  const VideoFeatures video = random_video(5, 6, 8, rng);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<Matrix> permuted;
  for (int i : perm) permuted.push_back(video.frames[static_cast<std::size_t>(i)]);
  const SpatialTokens a = spatial_aggregate(video, cfg, params);
  const SpatialTokens b = spatial_aggregate(VideoFeatures::from_frames(permuted), cfg, params);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK((b.frames[i] - a.frames[static_cast<std::size_t>(perm[i])]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("temporal windows follow the enumeration rule") {
  CHECK(enumerate_windows(8, 4, 4) == std::vector<WindowSpan>{{0, 4}, {4, 8}});
  CHECK(enumerate_windows(6, 4, 4) == std::vector<WindowSpan>{{0, 4}, {4, 6}});
  CHECK(enumerate_windows(3, 4, 4) == std::vector<WindowSpan>{{0, 3}});
  CHECK(enumerate_windows(8, 4, 2) == std::vector<WindowSpan>{{0, 4}, {2, 6}, {4, 8}});
  CHECK_THROWS_AS(enumerate_windows(0, 4, 4), InputError);

  Rng rng(99);
  std::uniform_int_distribution<int> n_dist(1, 40), w_dist(1, 9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = n_dist(rng), w = w_dist(rng);
    const int s = std::uniform_int_distribution<int>(1, w)(rng);
    const auto got = enumerate_windows(n, w, s);
    const auto want = oracle::windows(n, w, s);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].start == want[i].first);
      CHECK(got[i].end == want[i].second);
    }
    CHECK(got.front().start == 0);
    CHECK(got.back().end == n);
  }
}

TEST_CASE("temporal aggregation emits K_T tokens per window") {
  AggregatorConfig cfg = small_config();
  Rng rng(21);

  cfg.window = 4;
  cfg.stride = 4;
  cfg.temporal_queries = 8;
  SpatialTokens s8 = spatial_aggregate(random_video(8, 5, 8, rng), cfg, init(cfg, 2));
  TemporalTokens t8 = temporal_aggregate(s8, Matrix::Zero(0, 8), std::nullopt, cfg, init(cfg, 2));
  CHECK(t8.windows.size() == 2);
  CHECK(t8.data.rows() == 16);

  cfg.temporal_queries = 2;
  SpatialTokens s6 = spatial_aggregate(random_video(6, 5, 8, rng), cfg, init(cfg, 2));
  TemporalTokens t6 = temporal_aggregate(s6, Matrix::Random(3, 8), std::nullopt, cfg, init(cfg, 2));
  CHECK(t6.windows == std::vector<WindowSpan>{{0, 4}, {4, 6}});
  CHECK(t6.data.rows() == 4);
  CHECK(t6.data.cols() == 8);

  CHECK_THROWS_AS(temporal_aggregate(SpatialTokens{}, Matrix::Zero(0, 8), std::nullopt, cfg, init(cfg, 2)), InputError);
}

TEST_CASE("temporal aggregation is question-aware") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 31);
  Rng rng(32);
  const SpatialTokens s = spatial_aggregate(random_video(4, 6, 8, rng), cfg, params);
  const Matrix q1 = Matrix::Random(3, 8), q2 = Matrix::Random(3, 8);
  const TemporalTokens a = temporal_aggregate(s, q1, std::nullopt, cfg, params);
  const TemporalTokens b = temporal_aggregate(s, q2, std::nullopt, cfg, params);
  const TemporalTokens c = temporal_aggregate(s, q1, Matrix::Random(1, 8), cfg, params);
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() > 1e-6);
  CHECK((a.data - c.data).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("context aggregation gives one language token per frame") {
  AggregatorConfig cfg = small_config();
  cfg.visual_dim = 32;
  cfg.llm_dim = 64;
  cfg.heads = 4;
  ParamStore params = init(cfg, 41);
  Rng rng(42);
  const VideoFeatures video = random_video(5, 16, 32, rng);
  TemporalTokens t{Matrix::Random(8, 32), {}};
  const AggregatedContext out = context_aggregate(video, t, cfg, params);
  CHECK(out.data.rows() == 5);
  CHECK(out.data.cols() == 64);

  TemporalTokens narrow{Matrix::Random(8, 16), {}};
  CHECK_THROWS_AS(context_aggregate(video, narrow, cfg, params), ConfigError);
}

TEST_CASE("a single temporal token receives all attention") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 51);
  Rng rng(52);
  const VideoFeatures video = random_video(3, 4, 8, rng);
  TemporalTokens t{Matrix::Random(1, 8), {}};
  AggregatorProbe probe;
  const AggregatedContext out = context_aggregate(video, t, cfg, params, &probe);
  REQUIRE(probe.context.weights.size() == 1);
  CHECK((probe.context.weights[0].array() == 1.0).all());
  const Matrix value = t.data * params.get("aggregator.context.wv");
  const Matrix expected = value * params.get("aggregator.context.wp");
  for (Eigen::Index i = 0; i < out.data.rows(); ++i) {
    CHECK((out.data.row(i) - expected.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("context aggregation matches the explicit-loop oracle") {
  AggregatorConfig cfg = small_config();
  cfg.visual_dim = 2;
  cfg.llm_dim = 3;
  cfg.heads = 1;
  ParamStore params = init(cfg, 61);
  Matrix wq(2, 2), wk(2, 2), wv(2, 2), wp(2, 3);
  wq << 0.5, -0.2, 0.1, 0.9;
  wk << 1.1, 0.3, -0.4, 0.7;
  wv << 0.2, 0.8, -0.6, 0.5;
  wp << 0.3, -0.1, 0.4, 0.25, 0.6, -0.35;
  params.get_mut("aggregator.context.wq") = wq;
  params.get_mut("aggregator.context.wk") = wk;
  params.get_mut("aggregator.context.wv") = wv;
  params.get_mut("aggregator.context.wp") = wp;
  Matrix f0(2, 2), f1(2, 2), z(2, 2);
  f0 << 1.0, -0.5, 0.3, 2.0;
  f1 << -1.2, 0.4, 0.8, 0.1;
  z << 0.6, -0.9, 1.5, 0.2;
  const VideoFeatures video = VideoFeatures::from_frames({f0, f1});
  const AggregatedContext got = context_aggregate(video, TemporalTokens{z, {}}, cfg, params);
  const auto want = oracle::context_attention({oracle::to_grid(f0), oracle::to_grid(f1)}, oracle::to_grid(z),
                                              oracle::to_grid(wq), oracle::to_grid(wk), oracle::to_grid(wv),
                                              oracle::to_grid(wp));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(std::abs(got.data(i, j) - want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) < 1e-12);
  }
}

TEST_CASE("pooled context output is invariant under patch permutation") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 71);
  Rng rng(72);
  VideoFeatures video = random_video(2, 6, 8, rng);
  TemporalTokens t{Matrix::Random(4, 8), {}};
  const AggregatedContext a = context_aggregate(video, t, cfg, params);
  const std::vector<int> perm{5, 2, 0, 4, 1, 3};
  for (Matrix& f : video.frames) {
    Matrix p(f.rows(), f.cols());
    for (std::size_t r = 0; r < perm.size(); ++r) p.row(static_cast<Eigen::Index>(r)) = f.row(perm[r]);
    f = p;
  }
  const AggregatedContext b = context_aggregate(video, t, cfg, params);
  CHECK((a.data - b.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("every attention row in all stages sums to one") {
  Rng rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    AggregatorConfig cfg = small_config();
    cfg.window = std::uniform_int_distribution<int>(1, 4)(rng);
    cfg.stride = std::uniform_int_distribution<int>(1, cfg.window)(rng);
    cfg.context_heads = trial % 2 == 0 ? 1 : 2;
    ParamStore params = init(cfg, static_cast<std::uint64_t>(trial));
    const int n = std::uniform_int_distribution<int>(1, 7)(rng);
    AggregatorProbe probe;
    aggregate(random_video(n, 5, 8, rng), Matrix::Random(2, 8), Matrix::Random(1, 8), cfg, params, &probe);
    for (const auto* stage : {&probe.spatial, &probe.temporal_self, &probe.temporal_cross, &probe.context}) {
      REQUIRE_FALSE(stage->weights.empty());
      for (const Matrix& w : stage->weights) {
        CHECK(((w.rowwise().sum().array() - 1.0).abs() < 1e-12).all());
      }
    }
  }
}

TEST_CASE("aggregate composes the stages deterministically") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 91);
  Rng rng(92);
  const VideoFeatures video = random_video(5, 4, 8, rng);
  const Matrix q = Matrix::Random(2, 8);
  const AggregatedContext full = aggregate(video, q, std::nullopt, cfg, params);
  const SpatialTokens s = spatial_aggregate(video, cfg, params);
  const TemporalTokens t = temporal_aggregate(s, q, std::nullopt, cfg, params);
  const AggregatedContext staged = context_aggregate(video, t, cfg, params);
  CHECK((full.data - staged.data).cwiseAbs().maxCoeff() == 0.0);
  const AggregatedContext again = aggregate(video, q, std::nullopt, cfg, init(cfg, 91));
  CHECK((full.data - again.data).cwiseAbs().maxCoeff() == 0.0);
  CHECK(full.data.rows() == 5);
  CHECK(full.data.cols() == 6);
}

TEST_CASE("degenerate single-frame pipeline with zero FFNs stays finite") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 101);
  for (const std::string& n : params.names()) {
    if (n.find(".ffn.") != std::string::npos) params.get_mut(n).setZero();
    if (n.ends_with(".wq") || n.ends_with(".wk") || n.ends_with(".wv") || n.ends_with(".wo")) {
      params.get_mut(n) = Matrix::Identity(8, 8);
    }
  }
  Rng rng(102);
  const AggregatedContext out = aggregate(random_video(1, 3, 8, rng), Matrix::Zero(0, 8), std::nullopt, cfg, params);
  CHECK(out.data.rows() == 1);
  CHECK(out.data.cols() == 6);
  CHECK(out.data.allFinite());
}

TEST_CASE("disabled aggregator yields an empty context") {
  AggregatorConfig cfg = small_config();
  cfg.enabled = false;
  Rng rng(111);
  const AggregatedContext out = aggregate(random_video(4, 3, 8, rng), Matrix::Zero(0, 8), std::nullopt, cfg, ParamStore{});
  CHECK(out.data.rows() == 0);
  CHECK(out.data.cols() == 6);
}

TEST_CASE("invalid inputs are rejected") {
  AggregatorConfig cfg = small_config();
  ParamStore params = init(cfg, 121);
  Rng rng(122);
  VideoFeatures video = random_video(2, 3, 8, rng);
  video.frames[1](0, 0) = std::nan("");
  CHECK_THROWS_AS(spatial_aggregate(video, cfg, params), InputError);
  CHECK_THROWS_AS(spatial_aggregate(random_video(2, 3, 4, rng), cfg, params), ConfigError);
  VideoFeatures bad_idx = random_video(2, 3, 8, rng);
  bad_idx.frame_indices = {3, 3};
  CHECK_THROWS_AS(spatial_aggregate(bad_idx, cfg, params), InputError);
}

TEST_CASE("aggregate gradients match central differences") {
  AggregatorConfig cfg = small_config();  // 8 channels
  ParamStore params = init(cfg, 131);
  Rng rng(132);
  const VideoFeatures video = random_video(3, 4, 8, rng);
  const Matrix q = Matrix::Random(2, 8), obj = Matrix::Random(1, 8);
  const Matrix weights = Matrix::Random(3, cfg.llm_dim);
  StcAggregator agg(cfg);
  auto forward = [&](ad::Tape& tape, const ParamStore& p) {
    std::vector<ad::Var> frames;
    for (const Matrix& f : video.frames) frames.push_back(tape.constant(f));
    ad::Var out = agg.aggregate(tape, p, frames, tape.constant(q), tape.constant(obj));
    return tape.sum(tape.mul(out, tape.constant(weights)));
  };
  ad::Tape tape;
  ad::Var loss = forward(tape, params);
  tape.backward(loss);
  const auto analytic = tape.param_grads();
  const auto checks = oracle::finite_difference_check(
      params, [&](const ParamStore& p) { ad::Tape t; return forward(t, p).value()(0, 0); }, analytic);
  CHECK(checks.size() == agg.param_names().size());
  for (const auto& c : checks) {
    INFO(c.name);
    CHECK(c.relative_error <= 1e-4);
  }
}
