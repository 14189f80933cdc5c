#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "lesr/common/error.hpp"
#include "lesr/common/random.hpp"
#include "lesr/numerics/grad_check.hpp"
#include "lesr/numerics/linalg.hpp"
#include "lesr/numerics/tape.hpp"

using namespace lesr;
using namespace lesr::num;

namespace {

MatD random_mat(Index r, Index c, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  MatD m = MatD::Zero(2, 2);
  const MatD s = softmax_rows(m);
  for (Index i = 0; i < 4; ++i) CHECK(s.data()[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]") {
  MatD m(1, 2);
  m << std::log(2.0), 0.0;
  const MatD s = softmax_rows(m);
  CHECK(s(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(s(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax does not overflow on large logits") {
  MatD m(1, 2);
  m << 1000.0, 0.0;
  const MatD s = softmax_rows(m);
  CHECK(std::isfinite(s(0, 0)));
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(s(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("softmax rejects non-finite input") {
  MatD m(1, 2);
  m << NAN, 0.0;
  CHECK_THROWS_AS(softmax_rows(m), DomainError);
  m << INFINITY, 0.0;
  CHECK_THROWS_AS(softmax_rows(m), DomainError);
}

TEST_CASE("softmax matches the direct-exponentiation oracle and rows sum to one") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const MatD m = random_mat(1 + trial % 5, 1 + trial % 7, rng, 3.0);
    const MatD s = softmax_rows(m);
    const MatD ref = oracle::softmax(m);
    CHECK((s - ref).cwiseAbs().maxCoeff() < 1e-12);
    for (Index i = 0; i < s.rows(); ++i) {
      CHECK(std::abs(s.row(i).sum() - 1.0) < 1e-6);
      CHECK(s.row(i).minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("pca of data with covariance diag(4,1) picks the first axis") {
  // Four points at (±2, ±1): sample covariance diag(16/3, 4/3) is proportional to diag(4,1).
  MatD x(4, 2);
  x << 2, 1, -2, 1, 2, -1, -2, -1;
  const auto r = pca_reduce(x, 1);
  CHECK(std::abs(r.components(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(r.components(0, 1)) < 1e-12);
  CHECK(r.components(0, 0) > 0);  // sign convention
}

TEST_CASE("pca of collinear rows preserves distances along the line") {
  MatD x(5, 2);
  for (int i = 0; i < 5; ++i) x.row(i) << 1.0 + 3.0 * i * i, 2.0 - 4.0 * i * i;
  const auto r = pca_reduce(x, 1);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(std::abs(std::abs(r.projection(i, 0) - r.projection(j, 0)) - (x.row(i) - x.row(j)).norm()) < 1e-6);
}

TEST_CASE("pca at full rank reconstructs the data and has orthonormal components") {
  std::mt19937 rng(3);
  const MatD x = random_mat(12, 5, rng);
  const auto r = pca_reduce(x, 5);
  MatD recon = r.projection * r.components;
  recon.rowwise() += r.mean;
  CHECK((recon - x).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((r.components * r.components.transpose() - MatD::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-6);
  for (Index k = 1; k < 5; ++k) CHECK(r.variance(k - 1) >= r.variance(k));
  for (Index k = 0; k < 5; ++k) {
    Index arg = 0;
    r.components.row(k).cwiseAbs().maxCoeff(&arg);
    CHECK(r.components(k, arg) > 0);
  }
}

TEST_CASE("pca rejects bad target dimensions and flags zero variance") {
  MatD x = MatD::Ones(3, 4);
  CHECK_THROWS_AS(pca_reduce(x, 4), ParameterError);
  CHECK_THROWS_AS(pca_reduce(MatD::Ones(1, 4), 1), ParameterError);
  const auto r = pca_reduce(x, 2);
  CHECK(r.zero_variance);
  CHECK(r.projection.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad check of a squared norm is exact") {
  std::mt19937 rng(1);
  Tensor<double> p("p", random_mat(3, 4, rng));
  auto rep = grad_check<double>([&](Tape<double>& t) { return t.squared_norm(t.param(p)); }, {&p}, 1e-4);
  CHECK(rep.max_rel_error < 1e-6);
  CHECK(rep.max_rel_error >= 0);
  CHECK(rep.eps == 1e-4);
}

TEST_CASE("extra step sizes do not mask a wrong gradient") {
  std::mt19937 rng(3);
  Tensor<double> p("p", random_mat(2, 3, rng));
  // The detached factor makes the tape report half of the true derivative.
  auto loss = [&](Tape<double>& t) {
    Var v = t.param(p);
    return t.sum(t.mul(v, t.detach(v)));
  };
  const auto rep = grad_check<double>(loss, {&p}, 1e-4, {1e-6, 1e-5, 1e-3, 1e-2});
  CHECK(rep.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(rep.passes(1e-5));
  CHECK_THROWS_AS(grad_check<double>(loss, {&p}, 1e-4, {0.0}), ParameterError);
}

TEST_CASE("log-sigmoid ranking term has derivative -0.5 at zero") {
  Tensor<double> x("x", MatD::Zero(1, 1));
  Tape<double> t;
  Var l = t.scale(t.log_sigmoid(t.param(x)), -1.0);
  CHECK(t.scalar(l) == doctest::Approx(std::log(2.0)));
  t.backward(l);
  CHECK(t.sink().dense(x)(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("frozen tensors receive no gradient") {
  std::mt19937 rng(2);
  Tensor<double> table("table", random_mat(6, 3, rng), false);
  Tensor<double> w("w", random_mat(3, 2, rng));
  const std::vector<Index> rows{0, 2, 5};
  auto loss = [&](Tape<double>& t) { return t.squared_norm(t.matmul(t.gather(table, rows), t.param(w))); };
  auto rep = grad_check<double>(loss, {&table, &w}, 1e-5);
  CHECK(rep.passes(1e-5));
  CHECK(rep.params[0].frozen);
  CHECK_FALSE(rep.params[0].frozen_touched);
  Tape<double> t;
  t.backward(loss(t));
  CHECK_FALSE(t.sink().touched(table));
}

TEST_CASE("grad check names the parameter when the loss is non-finite") {
  Tensor<double> p("weird", MatD::Ones(1, 1));
  auto loss = [&](Tape<double>& t) {
    Var v = t.param(p);
    return t.scale(v, std::isfinite(p.values(0, 0)) && p.values(0, 0) > 1.0 ? NAN : 1.0);
  };
  try {
    grad_check<double>(loss, {&p}, 1e-3);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("weird") != std::string::npos);
  }
}

TEST_CASE("every tape op passes a double-precision gradient check") {
  std::mt19937 rng(11);
  Tensor<double> a("a", random_mat(3, 4, rng));
  Tensor<double> b("b", random_mat(3, 4, rng));
  Tensor<double> c("c", random_mat(4, 2, rng));
  Tensor<double> r("r", random_mat(1, 4, rng));
  Tensor<double> g("g", random_mat(1, 4, rng));
  Tensor<double> table("table", random_mat(5, 4, rng));
  const std::vector<Index> rows{4, 1, 1};
  const std::vector<Index> pick{2, 0};
  std::vector<Tensor<double>*> all{&a, &b, &c, &r, &g, &table};
  using Fn = std::function<Var(Tape<double>&)>;
  const std::vector<std::pair<const char*, Fn>> cases{
      {"matmul", [&](Tape<double>& t) { return t.sum(t.matmul(t.param(a), t.param(c))); }},
      {"matmul_nt", [&](Tape<double>& t) { return t.squared_norm(t.matmul_nt(t.param(a), t.param(b))); }},
      {"add/sub/mul", [&](Tape<double>& t) {
         return t.sum(t.mul(t.add(t.param(a), t.param(b)), t.sub(t.param(a), t.param(b))));
       }},
      {"add_row/affine", [&](Tape<double>& t) { return t.squared_norm(t.affine(t.add_row(t.param(a), t.param(r)), 0.5, 1.0)); }},
      {"relu/sigmoid/tanh", [&](Tape<double>& t) {
         return t.sum(t.mul(t.relu(t.param(a)), t.add(t.sigmoid(t.param(b)), t.tanh(t.param(a)))));
       }},
      {"log_sigmoid", [&](Tape<double>& t) { return t.mean(t.log_sigmoid(t.param(a))); }},
      {"softmax", [&](Tape<double>& t) { return t.squared_norm(t.mul(t.softmax_rows(t.param(a)), t.param(b))); }},
      {"causal softmax", [&](Tape<double>& t) {
         return t.squared_norm(t.softmax_rows(t.matmul_nt(t.param(a), t.param(b)), true));
       }},
      {"layer_norm", [&](Tape<double>& t) {
         return t.squared_norm(t.mul(t.layer_norm(t.param(a), t.param(g), t.param(r), 1e-8), t.param(b)));
       }},
      {"row/take_rows/rows_dot", [&](Tape<double>& t) {
         Var x = t.take_rows(t.param(a), pick);
         return t.add(t.sum(t.rows_dot(x, t.take_rows(t.param(b), pick))), t.squared_norm(t.row(t.param(a), 1)));
       }},
      {"gather", [&](Tape<double>& t) { return t.squared_norm(t.gather(table, rows)); }},
      {"concat/stack", [&](Tape<double>& t) {
         std::vector<Var> rs{t.row(t.param(a), 0), t.row(t.param(b), 2)};
         return t.squared_norm(t.concat_cols(t.stack_rows(rs), t.take_rows(t.param(b), pick)));
       }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    const auto rep = grad_check<double>(fn, all, 1e-6);
    CAPTURE(rep.worst_param);
    CAPTURE(rep.max_rel_error);
    CHECK(rep.passes(1e-5));
  }
}

TEST_CASE("single precision gradients agree within the looser tolerance") {
  std::mt19937 rng(5);
  Tensor<float> a("a", random_mat(2, 2, rng, 0.5).cast<float>());
  Tensor<float> w("w", random_mat(1, 2, rng, 0.5).cast<float>());
  Tensor<float> b("b", random_mat(1, 2, rng, 0.5).cast<float>());
  // Every coordinate has a gradient of order one, so relative error is meaningful in float.
  auto rep = grad_check<float>(
      [&](Tape<float>& t) {
        return t.add(t.sum(t.log_sigmoid(t.param(a))), t.squared_norm(t.add_row(t.param(w), t.param(b))));
      },
      {&a, &w, &b}, 1e-2);
  CAPTURE(rep.worst_param);
  CHECK(rep.max_rel_error < 1e-3);
}

TEST_CASE("detach blocks gradient flow") {
  Tensor<double> p("p", MatD::Constant(1, 3, 2.0));
  Tape<double> t;
  Var v = t.param(p);
  Var loss = t.sum(t.mul(v, t.detach(v)));  // d/dp = detached value only
  t.backward(loss);
  CHECK((t.sink().dense(p) - MatD::Constant(1, 3, 2.0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("take_rows rejects out-of-range rows") {
  Tape<double> t;
  Var a = t.constant(MatD::Zero(2, 2));
  const std::vector<Index> bad{2};
  CHECK_THROWS_AS(t.take_rows(a, bad), ParameterError);
}

TEST_CASE("gradient sink accumulates sparse rows into the dense gradient") {
  Tensor<double> table("t", MatD::Zero(4, 2));
  Tape<double> t;
  const std::vector<Index> rows{1, 1, 3};
  t.backward(t.sum(t.gather(table, rows)));
  table.zero_grad();
  t.sink().flush_into(table);
  MatD expect = MatD::Zero(4, 2);
  expect.row(1).setConstant(2.0);
  expect.row(3).setConstant(1.0);
  CHECK((table.grad - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("seeded substreams are reproducible and distinct") {
  CHECK(derive_seed(42, "init") == derive_seed(42, "init"));
  CHECK(derive_seed(42, "init") != derive_seed(43, "init"));
  CHECK(derive_seed(42, "negatives", {1, 2}) != derive_seed(42, "negatives", {2, 1}));
  Rng r = make_rng(1, "x");
  for (int i = 0; i < 1000; ++i) CHECK(uniform_index(r, 7) < 7);
}
