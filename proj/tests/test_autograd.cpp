#include "doctest.h"

#include <cmath>
#include <functional>

#include "sama/autograd.hpp"
#include "sama/errors.hpp"

using namespace sama;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Builds a scalar from the inputs with `op`, backpropagates, and compares
// each input gradient against central differences.
void check_gradients(std::vector<Matrix> inputs, const std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>& op) {
  auto evaluate = [&](const std::vector<Matrix>& in) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Matrix& m : in) vars.push_back(tape.constant(m));
    return op(tape, vars).value()(0, 0);
  };
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.variable(m));
  ad::Var out = op(tape, vars);
  tape.backward(out);
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = tape.grad(vars[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto up = inputs, down = inputs;
      up[k].data()[i] += h;
      down[k].data()[i] -= h;
      const double numeric = (evaluate(up) - evaluate(down)) / (2 * h);
      CHECK(analytic.data()[i] == doctest::Approx(numeric).epsilon(1e-6).scale(1.0));
    }
  }
}

}  // namespace

TEST_CASE("matmul, transpose product, bias and elementwise ops differentiate correctly") {
  Rng rng(1);
  check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                  [](ad::Tape& t, std::vector<ad::Var>& v) { return t.sum(t.mul(t.matmul(v[0], v[1]), t.matmul(v[0], v[1]))); });
  check_gradients({random_matrix(3, 4, rng), random_matrix(5, 4, rng)},
                  [](ad::Tape& t, std::vector<ad::Var>& v) { return t.sum(t.gelu(t.matmul_nt(v[0], v[1]))); });
  check_gradients({random_matrix(3, 4, rng), random_matrix(1, 4, rng)},
                  [](ad::Tape& t, std::vector<ad::Var>& v) { return t.sum(t.sigmoid(t.add_row(v[0], v[1]))); });
  check_gradients({random_matrix(3, 4, rng), random_matrix(3, 4, rng)}, [](ad::Tape& t, std::vector<ad::Var>& v) {
    return t.sum(t.mul(t.sub(v[0], t.scale(v[1], 0.3)), t.add(v[0], v[1])));
  });
}

TEST_CASE("softmax, layer norm and pooling differentiate correctly") {
  Rng rng(2);
  Matrix allowed = Matrix::Ones(3, 5);
  allowed(0, 4) = 0;
  allowed(2, 0) = 0;
  check_gradients({random_matrix(3, 5, rng), random_matrix(3, 5, rng)}, [&](ad::Tape& t, std::vector<ad::Var>& v) {
    return t.sum(t.mul(t.softmax_rows(v[0], &allowed), v[1]));
  });
  check_gradients({random_matrix(4, 6, rng), random_matrix(1, 6, rng), random_matrix(1, 6, rng), random_matrix(4, 6, rng)},
                  [](ad::Tape& t, std::vector<ad::Var>& v) { return t.sum(t.mul(t.layer_norm(v[0], v[1], v[2]), v[3])); });
  check_gradients({random_matrix(4, 3, rng), random_matrix(1, 3, rng)}, [](ad::Tape& t, std::vector<ad::Var>& v) {
    return t.sum(t.mul(t.mean_rows(t.gelu(v[0])), v[1]));
  });
}

TEST_CASE("slicing, concatenation and gather route gradients to their sources") {
  Rng rng(3);
  check_gradients({random_matrix(4, 3, rng), random_matrix(2, 3, rng)}, [](ad::Tape& t, std::vector<ad::Var>& v) {
    std::vector<ad::Var> parts{t.slice_rows(v[0], 1, 2), v[1], t.slice_rows(v[0], 0, 1)};
    ad::Var cat = t.concat_rows(parts, 3);
    return t.sum(t.mul(cat, cat));
  });
  check_gradients({random_matrix(3, 4, rng)}, [](ad::Tape& t, std::vector<ad::Var>& v) {
    std::vector<ad::Var> parts{t.slice_cols(v[0], 2, 2), t.slice_cols(v[0], 0, 1)};
    ad::Var cat = t.concat_cols(parts);
    return t.sum(t.gelu(cat));
  });
  check_gradients({random_matrix(5, 3, rng)}, [](ad::Tape& t, std::vector<ad::Var>& v) {
    const std::vector<int> idx{4, 0, 4, 2};
    return t.sum(t.gelu(t.gather_rows(v[0], idx)));
  });
}

TEST_CASE("losses differentiate correctly") {
  Rng rng(4);
  const std::vector<int> targets{2, 0, 3};
  check_gradients({random_matrix(3, 5, rng, 2.0)},
                  [&](ad::Tape& t, std::vector<ad::Var>& v) { return t.cross_entropy(v[0], targets); });
  Matrix y(6, 1);
  y << 1, 0, 1, 1, 0, 0;
  check_gradients({random_matrix(6, 1, rng, 3.0)}, [&](ad::Tape& t, std::vector<ad::Var>& v) { return t.bce_with_logits(v[0], y); });
  check_gradients({random_matrix(6, 1, rng, 3.0)}, [&](ad::Tape& t, std::vector<ad::Var>& v) { return t.dice_loss(v[0], y); });
}

TEST_CASE("uniform logits give cross entropy ln V") {
  ad::Tape tape;
  const std::vector<int> targets{0, 3, 6};
  ad::Var ce = tape.cross_entropy(tape.constant(Matrix::Zero(3, 7)), targets);
  CHECK(ce.value()(0, 0) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("fully masked softmax rows are zero and normalized rows sum to one") {
  ad::Tape tape;
  Matrix allowed = Matrix::Ones(2, 3);
  allowed.row(1).setZero();
  ad::Var s = tape.softmax_rows(tape.constant(Matrix::Random(2, 3)), &allowed);
  CHECK(s.value().row(0).sum() == doctest::Approx(1.0));
  CHECK(s.value().row(1).sum() == 0.0);
}

TEST_CASE("frozen parameters stay out of the gradient map") {
  ParamStore params;
  params.add("a", Matrix::Ones(2, 2));
  params.add("b", Matrix::Ones(2, 2), false);
  ad::Tape tape;
  ad::Var out = tape.sum(tape.matmul(tape.param(params, "a"), tape.param(params, "b")));
  tape.backward(out);
  const auto grads = tape.param_grads();
  CHECK(grads.count("a") == 1);
  CHECK(grads.count("b") == 0);
  CHECK(grads.at("a")(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("shape errors raise ConfigError") {
  ad::Tape tape;
  CHECK_THROWS_AS(tape.matmul(tape.constant(Matrix::Zero(2, 3)), tape.constant(Matrix::Zero(2, 3))), ConfigError);
  CHECK_THROWS_AS(tape.add(tape.constant(Matrix::Zero(2, 3)), tape.constant(Matrix::Zero(3, 2))), ConfigError);
}
