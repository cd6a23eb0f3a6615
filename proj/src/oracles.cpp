#include "sama/oracles.hpp"

#include "sama/errors.hpp"

#include <cmath>

namespace sama::oracle {

Grid to_grid(const Matrix& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) g[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  }
  return g;
}

Matrix from_grid(const Grid& g) {
  Matrix m(static_cast<Eigen::Index>(g.size()), g.empty() ? 0 : static_cast<Eigen::Index>(g.front().size()));
  for (std::size_t r = 0; r < g.size(); ++r) {
    for (std::size_t c = 0; c < g[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = g[r][c];
  }
  return m;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits.front();
  for (double v : logits) mx = v > mx ? v : mx;
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

namespace {

Grid times(const Grid& a, const Grid& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.front().size();
  Grid out(n, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i][t] * b[t][j];
      out[i][j] = s;
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> context_attention(const std::vector<Grid>& frames, const Grid& temporal,
                                                   const Grid& wq, const Grid& wk, const Grid& wv, const Grid& wp) {
  const Grid keys = times(temporal, wk);
  const Grid values = times(temporal, wv);
  const double c = static_cast<double>(wk.front().size());
  std::vector<std::vector<double>> out;
  for (const Grid& frame : frames) {
    const Grid queries = times(frame, wq);
    std::vector<double> pooled(values.front().size(), 0.0);
    for (const auto& q : queries) {
      std::vector<double> logits;
      for (const auto& k : keys) {
        double dot = 0.0;
        for (std::size_t t = 0; t < q.size(); ++t) dot += q[t] * k[t];
        logits.push_back(dot / std::sqrt(c));
      }
      const std::vector<double> w = softmax(logits);
      for (std::size_t j = 0; j < values.size(); ++j) {
        for (std::size_t t = 0; t < pooled.size(); ++t) pooled[t] += w[j] * values[j][t] / static_cast<double>(queries.size());
      }
    }
    std::vector<double> projected(wp.front().size(), 0.0);
    for (std::size_t o = 0; o < projected.size(); ++o) {
      for (std::size_t t = 0; t < pooled.size(); ++t) projected[o] += pooled[t] * wp[t][o];
    }
    out.push_back(projected);
  }
  return out;
}

std::vector<std::pair<int, int>> windows(int num_frames, int window, int stride) {
  std::vector<std::pair<int, int>> out;
  bool reached_end = false;
  for (int start = 0; start < num_frames && !reached_end; ++start) {
    if (start % stride != 0) continue;
    int end = start;
    while (end < num_frames && end - start < window) ++end;
    out.emplace_back(start, end);
    reached_end = end == num_frames;
  }
  return out;
}

std::vector<std::vector<std::vector<int>>> track_to_pixels(const MaskTrack& track) {
  std::vector<std::vector<std::vector<int>>> out;
  for (const BinaryMask& m : track.masks) {
    std::vector<std::vector<int>> frame(static_cast<std::size_t>(m.height()), std::vector<int>(static_cast<std::size_t>(m.width())));
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) frame[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = m.at(x, y) ? 1 : 0;
    }
    out.push_back(std::move(frame));
  }
  return out;
}

double st_iou(const std::vector<std::vector<std::vector<int>>>& pred, const std::vector<std::vector<std::vector<int>>>& gt) {
  long inter = 0, uni = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (std::size_t y = 0; y < pred[t].size(); ++y) {
      for (std::size_t x = 0; x < pred[t][y].size(); ++x) {
        const int a = pred[t][y][x], b = gt[t][y][x];
        if (a == 1 && b == 1) ++inter;
        if (a == 1 || b == 1) ++uni;
      }
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::pair<int, int>> disk_pixels(int cx, int cy, int radius, int width, int height) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = std::hypot(static_cast<double>(x - cx), static_cast<double>(y - cy));
      if (d <= static_cast<double>(radius) + 1e-12) out.emplace_back(x, y);
    }
  }
  return out;
}

long phrase_grammar_error_offset(const std::string& text) {
  long open = -1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.compare(i, 3, "<p>") == 0) {
      if (open >= 0) return open;
      open = static_cast<long>(i);
      i += 2;
    } else if (text.compare(i, 4, "</p>") == 0) {
      if (open < 0) return static_cast<long>(i);
      open = -1;
      i += 3;
    } else if (text.compare(i, 4, "[SEG") == 0) {
      if (open >= 0) return open;
    }
  }
  return open;
}

std::vector<GradCheck> finite_difference_check(ParamStore& params,
                                               const std::function<double(const ParamStore&)>& loss,
                                               const std::map<std::string, Matrix>& analytic, double step) {
  std::vector<GradCheck> out;
  for (const std::string& name : params.names()) {
    if (!params.trainable(name)) continue;
    Matrix& value = params.get_mut(name);
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      auto at = [&](double offset) {
        value.data()[i] = orig + offset;
        return loss(params);
      };
      numeric.data()[i] = (8.0 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) / (12.0 * step);
      value.data()[i] = orig;
    }
    auto it = analytic.find(name);
    const Matrix a = it == analytic.end() ? Matrix::Zero(value.rows(), value.cols()) : it->second;
    GradCheck g;
    g.name = name;
    g.entries = static_cast<std::size_t>(value.size());
    g.analytic_norm = a.norm();
    g.numeric_norm = numeric.norm();
    const double scale = std::max(g.analytic_norm, g.numeric_norm);
    const double diff = (a - numeric).norm();
    // Both gradients vanishing (below FD noise) counts as agreement.
    g.relative_error = scale < 1e-9 ? diff : diff / scale;
    out.push_back(g);
  }
  return out;
}

}  // namespace sama::oracle
