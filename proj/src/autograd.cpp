#include "sama/autograd.hpp"

#include "sama/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace sama {

Matrix& ParamStore::add(const std::string& name, Matrix init, bool trainable) {
  auto [it, inserted] = entries_.insert_or_assign(name, Entry{std::move(init), trainable});
  (void)inserted;
  return it->second.value;
}

bool ParamStore::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const Matrix& ParamStore::get(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second.value;
}

Matrix& ParamStore::get_mut(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second.value;
}

bool ParamStore::trainable(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second.trainable;
}

void ParamStore::set_trainable(std::string_view name, bool on) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  it->second.trainable = on;
}

void ParamStore::set_trainable_prefix(std::string_view prefix, bool on) {
  for (auto& [name, entry] : entries_) {
    if (std::string_view(name).starts_with(prefix)) entry.trainable = on;
  }
}

void ParamStore::set_all_trainable(bool on) {
  for (auto& [name, entry] : entries_) entry.trainable = on;
}

void ParamStore::erase_prefix(std::string_view prefix) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (std::string_view(it->first).starts_with(prefix)) {
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) n += static_cast<std::size_t>(entry.value.size());
  return n;
}

Matrix xavier_uniform(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal_init(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

namespace ad {

const Matrix& Var::value() const { return tape->value(id); }

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, [](Tape&) {}); }

Var Tape::param(const ParamStore& store, const std::string& name) {
  const bool train = store.trainable(name);
  Var v = train ? push(store.get(name), true, [](Tape&) {}) : push(store.get(name), false);
  param_bindings_.emplace_back(name, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: inner dimension mismatch " + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.rows()));
  }
  Matrix out = a.value() * b.value();
  const bool rg = needs(a) || needs(b);
  const int ia = a.id, ib = b.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) t.grad_ref(ia).noalias() += g * t.nodes_[ib].value.transpose();
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib).noalias() += t.nodes_[ia].value.transpose() * g;
    };
  }
  return self;
}

Var Tape::matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("matmul_nt: width mismatch " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  Matrix out = a.value() * b.value().transpose();
  const bool rg = needs(a) || needs(b);
  const int ia = a.id, ib = b.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) t.grad_ref(ia).noalias() += g * t.nodes_[ib].value;
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib).noalias() += g.transpose() * t.nodes_[ia].value;
    };
  }
  return self;
}

Var Tape::add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value() + b.value();
  const bool rg = needs(a) || needs(b);
  const int ia = a.id, ib = b.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) t.grad_ref(ia) += g;
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib) += g;
    };
  }
  return self;
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value() - b.value();
  const bool rg = needs(a) || needs(b);
  const int ia = a.id, ib = b.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) t.grad_ref(ia) += g;
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib) -= g;
    };
  }
  return self;
}

Var Tape::add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ConfigError("add_row: bias shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const bool rg = needs(a) || needs(row);
  const int ia = a.id, ib = row.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) t.grad_ref(ia) += g;
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib) += g.colwise().sum();
    };
  }
  return self;
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  const bool rg = needs(a) || needs(b);
  const int ia = a.id, ib = b.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, ib, io](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ia].requires_grad) t.grad_ref(ia) += g.cwiseProduct(t.nodes_[ib].value);
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib) += g.cwiseProduct(t.nodes_[ia].value);
    };
  }
  return self;
}

Var Tape::scale(Var a, double s) {
  Matrix out = a.value() * s;
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io, s](Tape& t) { t.grad_ref(ia) += t.nodes_[io].grad * s; };
  }
  return self;
}

Var Tape::gelu(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
  }
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io](Tape& t) {
      const Matrix& xin = t.nodes_[ia].value;
      const Matrix& g = t.nodes_[io].grad;
      Matrix& ga = t.grad_ref(ia);
      for (Eigen::Index i = 0; i < xin.size(); ++i) {
        const double v = xin.data()[i];
        const double inner = kGeluC * (v + 0.044715 * v * v * v);
        const double th = std::tanh(inner);
        const double dinner = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
        const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner;
        ga.data()[i] += g.data()[i] * d;
      }
    };
  }
  return self;
}

Var Tape::sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double v) { return sigmoid_scalar(v); });
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io](Tape& t) {
      const Matrix& s = t.nodes_[io].value;
      t.grad_ref(ia) += t.nodes_[io].grad.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    };
  }
  return self;
}

Var Tape::softmax_rows(Var a, const Matrix* allowed) {
  const Matrix& x = a.value();
  if (allowed != nullptr && (allowed->rows() != x.rows() || allowed->cols() != x.cols())) {
    throw ConfigError("softmax_rows: mask shape mismatch");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (allowed == nullptr || (*allowed)(r, c) != 0.0) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) continue;  // fully masked row stays zero
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (allowed == nullptr || (*allowed)(r, c) != 0.0) {
        const double e = std::exp(x(r, c) - mx);
        out(r, c) = e;
        z += e;
      }
    }
    out.row(r) /= z;
  }
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io](Tape& t) {
      const Matrix& y = t.nodes_[io].value;
      const Matrix& g = t.nodes_[io].grad;
      Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
      Matrix& ga = t.grad_ref(ia);
      ga += y.cwiseProduct((g.colwise() - dots));
    };
  }
  return self;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& in = x.value();
  const Eigen::Index n = in.rows(), d = in.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw ConfigError("layer_norm: gain/bias shape mismatch");
  }
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const bool rg = needs(x) || needs(gain) || needs(bias);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ix, ig, ib, io, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      if (t.nodes_[ig].requires_grad) t.grad_ref(ig) += (g.cwiseProduct(xhat)).colwise().sum();
      if (t.nodes_[ib].requires_grad) t.grad_ref(ib) += g.colwise().sum();
      if (t.nodes_[ix].requires_grad) {
        const Matrix gx = (g.array().rowwise() * t.nodes_[ig].value.row(0).array()).matrix();
        const double d = static_cast<double>(gx.cols());
        Matrix& gin = t.grad_ref(ix);
        for (Eigen::Index r = 0; r < gx.rows(); ++r) {
          const double m1 = gx.row(r).sum() / d;
          const double m2 = gx.row(r).dot(xhat.row(r)) / d;
          gin.row(r) += inv_std(r) * (gx.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
        }
      }
    };
  }
  return self;
}

Var Tape::concat_rows(std::span<const Var> parts, Eigen::Index cols) {
  Eigen::Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.cols() != cols && p.rows() != 0) throw ConfigError("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || needs(p);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    if (p.rows() > 0) out.middleRows(r, p.rows()) = p.value();
    spans.emplace_back(p.id, r);
    r += p.rows();
  }
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [io, spans = std::move(spans)](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      for (const auto& [id, start] : spans) {
        const Eigen::Index n = t.nodes_[id].value.rows();
        if (t.nodes_[id].requires_grad && n > 0) t.grad_ref(id) += g.middleRows(start, n);
      }
    };
  }
  return self;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ConfigError("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || needs(p);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    spans.emplace_back(p.id, c);
    c += p.cols();
  }
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [io, spans = std::move(spans)](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      for (const auto& [id, start] : spans) {
        if (t.nodes_[id].requires_grad) t.grad_ref(id) += g.middleCols(start, t.nodes_[id].value.cols());
      }
    };
  }
  return self;
}

Var Tape::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ConfigError("slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io, start, count](Tape& t) {
      if (count > 0) t.grad_ref(ia).middleRows(start, count) += t.nodes_[io].grad;
    };
  }
  return self;
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ConfigError("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io, start, count](Tape& t) {
      t.grad_ref(ia).middleCols(start, count) += t.nodes_[io].grad;
    };
  }
  return self;
}

Var Tape::mean_rows(Var a) {
  if (a.rows() == 0) throw InputError("mean_rows: empty input");
  Matrix out = a.value().colwise().mean();
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io](Tape& t) {
      Matrix& ga = t.grad_ref(ia);
      const double inv = 1.0 / static_cast<double>(ga.rows());
      ga.rowwise() += t.nodes_[io].grad.row(0) * inv;
    };
  }
  return self;
}

Var Tape::gather_rows(Var table, std::span<const int> rows) {
  const Matrix& tab = table.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), tab.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tab.rows()) throw InputError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tab.row(rows[i]);
  }
  const bool rg = needs(table);
  const int it = table.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [it, io, idx = std::vector<int>(rows.begin(), rows.end())](Tape& t) {
      const Matrix& g = t.nodes_[io].grad;
      Matrix& gt = t.grad_ref(it);
      for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    };
  }
  return self;
}

Var Tape::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const bool rg = needs(a);
  const int ia = a.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [ia, io](Tape& t) { t.grad_ref(ia).array() += t.nodes_[io].grad(0, 0); };
  }
  return self;
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& z = logits.value();
  if (static_cast<std::size_t>(z.rows()) != targets.size()) throw ConfigError("cross_entropy: target count mismatch");
  Matrix out = Matrix::Zero(1, 1);
  if (targets.empty()) return push(std::move(out), false);
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int tgt = targets[static_cast<std::size_t>(r)];
    if (tgt < 0 || tgt >= z.cols()) throw InputError("cross_entropy: target out of range");
    const double mx = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - mx).exp().matrix();
    const double s = probs.row(r).sum();
    probs.row(r) /= s;
    total += -(z(r, tgt) - mx - std::log(s));
  }
  out(0, 0) = total / static_cast<double>(z.rows());
  const bool rg = needs(logits);
  const int il = logits.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [il, io, probs = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end())](Tape& t) {
      const double g = t.nodes_[io].grad(0, 0) / static_cast<double>(probs.rows());
      Matrix d = probs;
      for (std::size_t r = 0; r < tg.size(); ++r) d(static_cast<Eigen::Index>(r), tg[r]) -= 1.0;
      t.grad_ref(il) += d * g;
    };
  }
  return self;
}

Var Tape::bce_with_logits(Var logits, const Matrix& targets) {
  require_same_shape(logits.value(), targets, "bce_with_logits");
  const Matrix& z = logits.value();
  const double n = static_cast<double>(z.size());
  Matrix out = Matrix::Zero(1, 1);
  if (z.size() == 0) return push(std::move(out), false);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double x = z.data()[i], y = targets.data()[i];
    // -(y log s(x) + (1-y) log(1 - s(x))) = softplus(x) - y x
    total += stable_softplus(x) - y * x;
  }
  out(0, 0) = total / n;
  const bool rg = needs(logits);
  const int il = logits.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [il, io, targets, n](Tape& t) {
      const double g = t.nodes_[io].grad(0, 0) / n;
      const Matrix& zz = t.nodes_[il].value;
      Matrix& gl = t.grad_ref(il);
      for (Eigen::Index i = 0; i < zz.size(); ++i) gl.data()[i] += g * (sigmoid_scalar(zz.data()[i]) - targets.data()[i]);
    };
  }
  return self;
}

Var Tape::dice_loss(Var logits, const Matrix& targets, double smooth) {
  require_same_shape(logits.value(), targets, "dice_loss");
  const Matrix p = logits.value().unaryExpr([](double v) { return sigmoid_scalar(v); });
  const double inter = p.cwiseProduct(targets).sum();
  const double denom = p.sum() + targets.sum() + smooth;
  const double numer = 2.0 * inter + smooth;
  Matrix out(1, 1);
  out(0, 0) = 1.0 - numer / denom;
  const bool rg = needs(logits);
  const int il = logits.id;
  Var self = push(std::move(out), rg);
  if (rg) {
    const int io = self.id;
    nodes_[io].backward = [il, io, p, targets, numer, denom](Tape& t) {
      const double g = t.nodes_[io].grad(0, 0);
      // d/dp [1 - N/D] = -(2 t D - N) / D^2
      Matrix dp = -((2.0 * targets.array() * denom - numer) / (denom * denom)).matrix();
      Matrix dz = dp.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
      t.grad_ref(il) += dz * g;
    };
  }
  return self;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ConfigError("backward: variable from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw ConfigError("backward: loss must be a scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].requires_grad) return;
  grad_ref(loss.id)(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

std::map<std::string, Matrix> Tape::param_grads() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, id] : param_bindings_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    Matrix g = n.grad.size() == 0 ? Matrix::Zero(n.value.rows(), n.value.cols()) : n.grad;
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, std::move(g));
    } else {
      it->second += g;
    }
  }
  return out;
}

std::vector<std::string> Tape::bound_params() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : param_bindings_) out.push_back(name);
  return out;
}

Var multi_head_attend(Tape& tape, Var q, Var k, Var v, int heads, const Matrix* allowed, AttentionProbe* probe) {
  const Eigen::Index width = q.cols();
  if (heads < 1 || width % heads != 0) throw ConfigError("attention width not divisible by head count");
  if (k.cols() != width || v.cols() != width) throw ConfigError("attention: q/k/v width mismatch");
  if (k.rows() != v.rows()) throw ConfigError("attention: key/value count mismatch");
  if (k.rows() == 0) throw InputError("attention: no keys");
  const Eigen::Index hd = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : tape.slice_cols(q, h * hd, hd);
    Var kh = heads == 1 ? k : tape.slice_cols(k, h * hd, hd);
    Var vh = heads == 1 ? v : tape.slice_cols(v, h * hd, hd);
    Var logits = tape.scale(tape.matmul_nt(qh, kh), inv_scale);
    Var w = tape.softmax_rows(logits, allowed);
    Var o = tape.matmul(w, vh);
    if (probe != nullptr) {
      probe->weights.push_back(w.value());
      probe->attended.push_back(o.value());
    }
    outs.push_back(o);
  }
  return heads == 1 ? outs.front() : tape.concat_cols(outs);
}

}  // namespace ad
}  // namespace sama
