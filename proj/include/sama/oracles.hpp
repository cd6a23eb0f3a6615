#pragma once

// Independent reference implementations used by the test suites and the
// `selfcheck` command. Nothing here calls into the code paths it checks:
// everything is explicit scalar loops over plain vectors.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sama/autograd.hpp"
#include "sama/mask.hpp"

namespace sama::oracle {

using Grid = std::vector<std::vector<double>>;

Grid to_grid(const Matrix& m);
Matrix from_grid(const Grid& g);

/// Softmax of one row by explicit exponentials.
std::vector<double> softmax(const std::vector<double>& logits);

/// Single-head context attention with per-frame mean pooling and output
/// projection, evaluated entry by entry:
///   out[i] = mean_p( softmax_j( (F_i W^Q)_p . (Z W^K)_j / sqrt(C) ) (Z W^V)_j ) W^P
std::vector<std::vector<double>> context_attention(const std::vector<Grid>& frames, const Grid& temporal,
                                                   const Grid& wq, const Grid& wk, const Grid& wv, const Grid& wp);

/// Windows by scanning every candidate start frame: a start is taken when it
/// is a multiple of `stride` and no earlier window already reached the end.
std::vector<std::pair<int, int>> windows(int num_frames, int window, int stride);

/// Pooled spatio-temporal IoU by counting pixels one at a time.
double st_iou(const std::vector<std::vector<std::vector<int>>>& pred, const std::vector<std::vector<std::vector<int>>>& gt);
std::vector<std::vector<std::vector<int>>> track_to_pixels(const MaskTrack& track);

/// Pixels within Euclidean distance `radius` of (cx, cy).
std::vector<std::pair<int, int>> disk_pixels(int cx, int cy, int radius, int width, int height);

/// Reference parser for the three-symbol phrase grammar
///   item := TEXT | "<p>" TEXT "</p>" ["[SEG]"] | "[SEG]"
/// returning the byte offset of the first unclosed or nested `<p>` (or of a
/// stray `</p>`), or -1 when the text is well formed.
long phrase_grammar_error_offset(const std::string& text);

struct GradCheck {
  std::string name;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  std::size_t entries = 0;
};

/// Fourth-order central differences for every trainable tensor in `params`,
/// compared with `analytic` (name -> gradient). `loss` must be a pure
/// function of params.
std::vector<GradCheck> finite_difference_check(ParamStore& params,
                                               const std::function<double(const ParamStore&)>& loss,
                                               const std::map<std::string, Matrix>& analytic, double step = 1e-4);

}  // namespace sama::oracle
