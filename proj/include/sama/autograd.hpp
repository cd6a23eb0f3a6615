#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double matrices. A Tape records every operation of one forward pass;
// Tape::backward walks the records in reverse creation order.

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sama {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

/// Named parameter tensors plus a per-tensor trainable flag.
class ParamStore {
 public:
  Matrix& add(const std::string& name, Matrix init, bool trainable = true);
  bool contains(std::string_view name) const;
  const Matrix& get(std::string_view name) const;
  Matrix& get_mut(std::string_view name);
  bool trainable(std::string_view name) const;
  void set_trainable(std::string_view name, bool on);
  /// Sets the flag on every tensor whose name starts with `prefix`.
  void set_trainable_prefix(std::string_view prefix, bool on);
  void set_all_trainable(bool on);
  void erase_prefix(std::string_view prefix);

  /// Names in lexicographic order.
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

 private:
  struct Entry {
    Matrix value;
    bool trainable = true;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

Matrix xavier_uniform(int rows, int cols, Rng& rng);
Matrix normal_init(int rows, int cols, double stddev, Rng& rng);

namespace ad {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Records the attention weight matrices produced during a forward pass.
struct AttentionProbe {
  std::vector<Matrix> weights;
  std::vector<Matrix> attended;  // weights x values, per head, before any output projection
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf bound to a stored parameter; differentiable iff the parameter is trainable.
  Var param(const ParamStore& store, const std::string& name);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1xC row over every row of a
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var gelu(Var a);
  Var sigmoid(Var a);
  /// Row softmax. `allowed`, when given, is a 0/1 matrix; zero entries are excluded.
  Var softmax_rows(Var a, const Matrix* allowed = nullptr);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var concat_rows(std::span<const Var> parts, Eigen::Index cols);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var mean_rows(Var a);
  Var gather_rows(Var table, std::span<const int> rows);
  Var sum(Var a);
  /// Mean token cross entropy of row-wise logits against integer targets.
  Var cross_entropy(Var logits, std::span<const int> targets);
  /// Mean binary cross entropy with logits.
  Var bce_with_logits(Var logits, const Matrix& targets);
  /// 1 - (2 sum(p t) + smooth) / (sum p + sum t + smooth), p = sigmoid(logits).
  Var dice_loss(Var logits, const Matrix& targets, double smooth = 1.0);

  void backward(Var loss);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient of the last backward pass; zero matrix if none reached the node.
  Matrix grad(Var v) const;
  /// Gradients of every trainable parameter leaf created on this tape.
  std::map<std::string, Matrix> param_grads() const;
  /// Parameter names bound on this tape (trainable or not).
  std::vector<std::string> bound_params() const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> backward = {});
  Matrix& grad_ref(int id);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> param_bindings_;
};

/// Scaled dot-product attention over already projected q, k, v, split into
/// `heads` column groups. `allowed` is an optional 0/1 mask [q.rows, k.rows].
Var multi_head_attend(Tape& tape, Var q, Var k, Var v, int heads, const Matrix* allowed = nullptr,
                      AttentionProbe* probe = nullptr);

}  // namespace ad
}  // namespace sama
