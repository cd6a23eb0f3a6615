#include "doctest.h"

#include "sama/errors.hpp"
#include "sama/grounding_head.hpp"
#include "sama/oracles.hpp"

using namespace sama;

namespace {

constexpr int kSeg = 7;
constexpr int kTurn = 2;

}  // namespace

TEST_CASE("seg states are extracted in generation order") {
  const std::vector<int> ids{1, kSeg, 3, 4, kSeg};
  Matrix hidden(5, 2);
  hidden << 0, 0, 1, 1, 2, 2, 3, 3, 4, 4;
  const auto states = extract_seg_states(ids, hidden, kSeg);
  REQUIRE(states.size() == 2);
  CHECK(states[0].response_position == 1);
  CHECK(states[1].response_position == 4);
  CHECK(states[1].data(0, 0) == 4.0);
  CHECK(states[0].turn_index == 0);

  CHECK(extract_seg_states(std::vector<int>{1, 3}, Matrix::Zero(2, 2), kSeg).empty());
  CHECK_THROWS_AS(extract_seg_states(ids, Matrix::Zero(3, 2), kSeg), ConfigError);
}

TEST_CASE("seg states record their dialogue turn") {
  // Turns 0..3, [SEG] appears in turns 1 and 3.
  const std::vector<int> ids{kTurn, 5, kTurn, 5, kSeg, kTurn, 6, kTurn, kSeg, 5};
  const std::vector<int> markers{kTurn};
  const auto states = extract_seg_states(ids, Matrix::Zero(10, 3), kSeg, markers);
  REQUIRE(states.size() == 2);
  CHECK(states[0].turn_index == 1);
  CHECK(states[1].turn_index == 3);
}

TEST_CASE("toy decoder output shapes") {
  ToyMaskDecoder dec({4, 4}, 32, 32, 6, 5);
  ParamStore params;
  Rng rng(1);
  dec.init_params(params, rng);
  std::vector<Matrix> frames(3, Matrix::Random(16, 6));
  const MaskTrack t = dec.decode(params, {Matrix::Random(1, 5), 0, 0}, VideoFeatures::from_frames(frames));
  REQUIRE(t.frames() == 3);
  for (const auto& m : t.masks) {
    CHECK(m.width() == 32);
    CHECK(m.height() == 32);
  }
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("orthogonal hidden state yields zero logits and an empty track") {
  ToyMaskDecoder dec({2, 2}, 8, 8, 2, 2);
  ParamStore params;
  params.add(dec.weight_name(), Matrix::Identity(2, 2));
  Matrix f(4, 2);
  f << 1, 0, 2, 0, -1, 0, 3, 0;  // all along x
  Matrix h(1, 2);
  h << 0, 1;
  ad::Tape tape;
  std::vector<ad::Var> feats{tape.constant(f)};
  const auto logits = dec.decode_logits(tape, params, tape.constant(h), feats);
  CHECK(logits[0].value().cwiseAbs().maxCoeff() == 0.0);
  const MaskTrack t = dec.decode(params, {h, 0, 0}, VideoFeatures::from_frames({f}));
  CHECK(t.masks[0].empty());
}

TEST_CASE("the one positively aligned patch becomes its 8x8 pixel block") {
  ToyMaskDecoder dec({4, 4}, 32, 32, 2, 2);
  ParamStore params;
  params.add(dec.weight_name(), Matrix::Identity(2, 2));
  Matrix f = Matrix::Constant(16, 2, -1.0);
  f.row(6) << 1.0, 0.5;  // row 1, col 2
  Matrix h(1, 2);
  h << 1, 1;
  const MaskTrack t = dec.decode(params, {h, 0, 0}, VideoFeatures::from_frames({f}));
  BinaryMask want(32, 32);
  want.fill_box({16, 8, 24, 16});
  CHECK(t.masks[0] == want);
}

TEST_CASE("decoder logits are differentiable with respect to the hidden state") {
  ToyMaskDecoder dec({2, 2}, 4, 4, 3, 2);
  ParamStore params;
  Rng rng(2);
  dec.init_params(params, rng);
  const Matrix f = Matrix::Random(4, 3);
  ad::Tape tape;
  ad::Var h = tape.variable(Matrix::Random(1, 2));
  std::vector<ad::Var> feats{tape.constant(f)};
  ad::Var loss = tape.sum(dec.decode_logits(tape, params, h, feats)[0]);
  tape.backward(loss);
  // d/dh sum_pixels (F W h^T) = 4 * sum_patches(F) W
  const Matrix expected = 4.0 * f.colwise().sum() * params.get(dec.weight_name());
  CHECK((tape.grad(h) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("grounded phrases are parsed with their markers") {
  const auto spans = parse_grounded_phrases("The <p>red car</p>[SEG:o1] passes <p>a dog</p> and [SEG] here.");
  REQUIRE(spans.size() == 3);
  CHECK(spans[0].phrase == "red car");
  CHECK(spans[0].has_seg);
  CHECK(spans[0].object_id == "o1");
  CHECK_FALSE(spans[1].has_seg);
  CHECK(spans[2].dangling);
}

TEST_CASE("malformed phrase markup reports the reference offset") {
  for (const char* text : {"a <p>b <p>c</p>", "x </p>", "<p>open [SEG]", "tail <p>never closed", "<p>ok</p>[SEG] <p>x"}) {
    INFO(text);
    const long want = oracle::phrase_grammar_error_offset(text);
    REQUIRE(want >= 0);
    try {
      parse_grounded_phrases(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(static_cast<long>(e.offset()) == want);
    }
  }
  CHECK(oracle::phrase_grammar_error_offset("<p>a</p>[SEG] b") == -1);
  CHECK_NOTHROW(parse_grounded_phrases("<p>a</p>[SEG] b"));
}

TEST_CASE("ground_response binds the i-th marker to the i-th state") {
  ToyMaskDecoder dec({1, 1}, 2, 2, 1, 1);
  ParamStore params;
  params.add(dec.weight_name(), Matrix::Identity(1, 1));
  const VideoFeatures video = VideoFeatures::from_frames({Matrix::Ones(1, 1)});
  std::vector<SegHiddenState> states{{Matrix::Constant(1, 1, -1.0), 0, 0}, {Matrix::Constant(1, 1, 1.0), 3, 0}};
  const auto out = ground_response("<p>a</p>[SEG] then <p>b</p>[SEG]", states, dec, params, video);
  REQUIRE(out.size() == 2);
  CHECK(out[0].track.masks[0].empty());
  CHECK(out[1].track.masks[0].count() == 4);
  CHECK_THROWS_AS(ground_response("<p>a</p>[SEG] [SEG] [SEG]", states, dec, params, video), InputError);
}
