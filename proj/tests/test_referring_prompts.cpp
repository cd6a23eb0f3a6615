#include "doctest.h"

#include <algorithm>
#include <set>

#include "sama/errors.hpp"
#include "sama/oracles.hpp"
#include "sama/referring_prompts.hpp"

using namespace sama;

namespace {

ObjectPrompt box_prompt(Box b) {
  ObjectPrompt p;
  p.kind = PromptKind::box;
  p.box = b;
  return p;
}

Matrix random_matrix(int r, int c, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Pixel-counting overlap of a mask with every cell, independent of select_patches.
std::vector<double> cell_coverage(const BinaryMask& mask, const PatchGrid& grid) {
  std::vector<double> out;
  for (int p = 0; p < grid.patches(); ++p) {
    const int r = p / grid.cols, c = p % grid.cols;
    const int cw = mask.width() / grid.cols, ch = mask.height() / grid.rows;
    long hit = 0;
    for (int y = r * ch; y < (r + 1) * ch; ++y) {
      for (int x = c * cw; x < (c + 1) * cw; ++x) hit += mask.at(x, y) ? 1 : 0;
    }
    out.push_back(static_cast<double>(hit) / static_cast<double>(cw * ch));
  }
  return out;
}

}  // namespace

TEST_CASE("box prompt fills its rectangle") {
  const BinaryMask m = prompt_to_mask(box_prompt({2, 2, 6, 6}), 8, 8);
  CHECK(m.count() == 16);
  CHECK(m.bounds() == Box{2, 2, 6, 6});
  CHECK_FALSE(m.at(6, 6));
  CHECK(m.at(5, 5));
}

TEST_CASE("mask prompt is returned unchanged") {
  ObjectPrompt p;
  p.kind = PromptKind::mask;
  p.mask = BinaryMask(8, 8);
  p.mask.set(1, 3);
  p.mask.set(7, 0);
  CHECK(prompt_to_mask(p, 8, 8) == p.mask);
}

TEST_CASE("a single point with radius 1 is a five-pixel plus") {
  ObjectPrompt p;
  p.kind = PromptKind::points;
  p.points = {{4, 4}};
  const BinaryMask m = prompt_to_mask(p, 8, 8, 1);
  CHECK(m.count() == 5);
  std::set<std::pair<int, int>> got;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      if (m.at(x, y)) got.insert({x, y});
    }
  }
  const auto want = oracle::disk_pixels(4, 4, 1, 8, 8);
  CHECK(got == std::set<std::pair<int, int>>(want.begin(), want.end()));
  CHECK(got.count({3, 3}) == 0);
}

TEST_CASE("point disks agree with pixel enumeration for several radii") {
  for (int radius : {0, 2, 3}) {
    ObjectPrompt p;
    p.kind = PromptKind::points;
    p.points = {{1, 1}, {10, 6}};
    const BinaryMask m = prompt_to_mask(p, 12, 9, radius);
    std::set<std::pair<int, int>> want;
    for (const Point& pt : p.points) {
      for (auto px : oracle::disk_pixels(pt.x, pt.y, radius, 12, 9)) want.insert(px);
    }
    CHECK(m.count() == static_cast<long>(want.size()));
  }
}

TEST_CASE("degenerate prompts are rejected") {
  CHECK_THROWS_AS(box_prompt({3, 3, 3, 6}).validate(8, 8), InputError);
  CHECK_THROWS_AS(box_prompt({0, 0, 9, 4}).validate(8, 8), InputError);
  CHECK_THROWS_AS(prompt_to_mask(box_prompt({5, 2, 4, 6}), 8, 8), InputError);
  ObjectPrompt pts;
  pts.kind = PromptKind::points;
  pts.points = {{1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(pts.validate(8, 8), InputError);
  CHECK(prompt_kind_from_string(to_string(PromptKind::points)) == PromptKind::points);
  CHECK_THROWS_AS(prompt_kind_from_string("scribble"), ConfigError);
}

TEST_CASE("mask pooling averages the selected patch rows") {
  Matrix f(4, 3);
  f << 1, 2, 3, 5, 6, 7, -1, 0, 4, 2, 2, 2;
  BinaryMask top(8, 8);
  top.fill_box({0, 0, 8, 4});  // patches 0 and 1 of a 2x2 grid
  const ObjectEmbedding e = mask_pool(f, top, {2, 2}, Matrix::Identity(3, 3));
  CHECK((e.pooled - (f.row(0) + f.row(1)) / 2.0).cwiseAbs().maxCoeff() < 1e-15);

  BinaryMask all(8, 8);
  all.fill_box({0, 0, 8, 8});
  const ObjectEmbedding g = mask_pool(f, all, {2, 2}, Matrix::Identity(3, 3));
  CHECK((g.pooled - f.colwise().mean()).cwiseAbs().maxCoeff() < 1e-15);

  Matrix proj(3, 2);
  proj << 1, 0, 0, 1, 1, 1;
  const ObjectEmbedding h = mask_pool(f, top, {2, 2}, proj);
  CHECK((h.data - e.pooled * proj).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("coverage below the threshold drops a patch") {
  // 10x10 cells of a 20x20 frame: 30 pixels in cell 0 (30%), 2 in cell 3 (2%).
  BinaryMask m(20, 20);
  m.fill_box({0, 0, 10, 3});
  m.set(15, 15);
  m.set(16, 15);
  const PatchGrid grid{2, 2};
  const auto cov = cell_coverage(m, grid);
  CHECK(cov[0] == doctest::Approx(0.30));
  CHECK(cov[3] == doctest::Approx(0.02));
  CHECK(select_patches(m, grid, 0.05) == std::vector<int>{0});

  BinaryMask tiny(20, 20);
  tiny.set(15, 15);
  CHECK(select_patches(tiny, grid, 0.05) == std::vector<int>{3});
  CHECK_THROWS_AS(select_patches(BinaryMask(20, 20), grid), InputError);
}

TEST_CASE("pooling is invariant to a joint permutation of patches and grid") {
  Rng rng(3);
  const Matrix f = random_matrix(4, 5, rng);
  BinaryMask m(8, 8);
  m.fill_box({0, 0, 4, 8});  // left column: patches 0 and 2
  const ObjectEmbedding a = mask_pool(f, m, {2, 2}, Matrix::Identity(5, 5));
  // Swap the two grid columns in both the mask and the feature rows.
  BinaryMask mirrored(8, 8);
  mirrored.fill_box({4, 0, 8, 8});
  Matrix g(4, 5);
  g.row(0) = f.row(1);
  g.row(1) = f.row(0);
  g.row(2) = f.row(3);
  g.row(3) = f.row(2);
  const ObjectEmbedding b = mask_pool(g, mirrored, {2, 2}, Matrix::Identity(5, 5));
  CHECK((a.pooled - b.pooled).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("box prompt and its filled-mask prompt pool identically") {
  Rng rng(4);
  std::uniform_int_distribution<int> coord(0, 31);
  const Matrix f = random_matrix(16, 6, rng);
  const Matrix proj = random_matrix(6, 4, rng);
  for (int trial = 0; trial < 50; ++trial) {
    int x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
    if (x0 == x1 || y0 == y1) continue;
    const Box box{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
    ObjectPrompt mp;
    mp.kind = PromptKind::mask;
    mp.mask = BinaryMask(32, 32);
    mp.mask.fill_box(box);
    const auto a = mask_pool(f, prompt_to_mask(box_prompt(box), 32, 32), {4, 4}, proj);
    const auto b = mask_pool(f, prompt_to_mask(mp, 32, 32), {4, 4}, proj);
    CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("stream length is the sum of its regions") {
  const Matrix table = Matrix::Random(30, 8);
  std::vector<int> text(20);
  for (int i = 0; i < 20; ++i) text[static_cast<std::size_t>(i)] = i + 1;
  const std::vector<std::pair<int, Matrix>> obj{{3, Matrix::Random(1, 8)}};
  const StreamValue with = assemble_stream(Matrix::Random(80, 8), Matrix::Random(8, 8), text, table, obj, 7);
  CHECK(with.embeddings.rows() == 109);
  CHECK(with.segment_map.size() == 109);
  const StreamValue without = assemble_stream(Matrix::Random(80, 8), Matrix::Zero(0, 8), text, table, obj, 7);
  CHECK(without.embeddings.rows() == 101);
  CHECK(with.seg_positions == std::vector<int>{80 + 8 + 1 + 6});
}

TEST_CASE("two object references become two slots in question order") {
  const Matrix table = Matrix::Random(10, 4);
  const std::vector<int> text{1, 2, 3, 4, 5, 6};
  const Matrix e1 = Matrix::Constant(1, 4, 1.0), e2 = Matrix::Constant(1, 4, 2.0);
  const std::vector<std::pair<int, Matrix>> objs{{2, e1}, {5, e2}};
  const StreamValue s = assemble_stream(Matrix::Random(3, 4), Matrix::Random(2, 4), text, table, objs, 9);
  CHECK(s.object_slots == std::vector<int>{5 + 2, 5 + 6});
  CHECK(s.embeddings.row(7) == e1.row(0));
  CHECK(s.embeddings.row(11) == e2.row(0));
  for (int p : s.object_slots) CHECK(p >= 5);
  CHECK_THROWS_AS(assemble_stream(Matrix::Random(3, 4), Matrix::Random(2, 4), text, table,
                                  std::vector<std::pair<int, Matrix>>{{7, e1}}, 9),
                  InputError);
}

TEST_CASE("deleting spliced object slots recovers the text embeddings") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = std::uniform_int_distribution<int>(0, 12)(rng);
    const int k = std::uniform_int_distribution<int>(0, 4)(rng);
    const Matrix table = random_matrix(15, 3, rng);
    std::vector<int> text;
    for (int i = 0; i < n; ++i) text.push_back(std::uniform_int_distribution<int>(0, 14)(rng));
    std::vector<std::pair<int, Matrix>> objs;
    for (int i = 0; i < k; ++i) objs.push_back({std::uniform_int_distribution<int>(0, n)(rng), random_matrix(1, 3, rng)});
    const Matrix kf = random_matrix(2, 3, rng), ag = random_matrix(1, 3, rng);
    const StreamValue s = assemble_stream(kf, ag, text, table, objs, 14);

    // Regions are contiguous and in order.
    std::size_t i = 0;
    while (i < s.segment_map.size() && s.segment_map[i] == Segment::keyframe_visual) ++i;
    CHECK(i == 2);
    while (i < s.segment_map.size() && s.segment_map[i] == Segment::aggregated_visual) ++i;
    CHECK(i == 3);
    for (; i < s.segment_map.size(); ++i) CHECK(s.segment_map[i] != Segment::keyframe_visual);

    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 3; r < s.embeddings.rows(); ++r) {
      if (std::find(s.object_slots.begin(), s.object_slots.end(), static_cast<int>(r)) == s.object_slots.end()) keep.push_back(r);
    }
    REQUIRE(keep.size() == text.size());
    for (std::size_t t = 0; t < text.size(); ++t) CHECK(s.embeddings.row(keep[t]) == table.row(text[t]));
    CHECK(s.object_slots.size() == static_cast<std::size_t>(k));
  }
}

TEST_CASE("attention mask lets text see the visual prefix and its past") {
  ad::Tape tape;
  const std::vector<int> text{1, 2, 3};
  TokenStream s = assemble_stream(tape, tape.constant(Matrix::Random(2, 4)), tape.constant(Matrix::Zero(0, 4)), text,
                                  tape.constant(Matrix::Random(5, 4)), {}, 4);
  const Matrix m = s.attention_mask();
  CHECK(m(0, 1) == 1.0);  // visual tokens see each other
  CHECK(m(2, 4) == 0.0);  // no future text
  CHECK(m(4, 2) == 1.0);
  CHECK(m(4, 0) == 1.0);
}
