#include "tpwng/autodiff.hpp"
#include "tpwng/errors.hpp"
#include "tpwng/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace tpwng::ad {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Gap from the nearest kink, so finite differences stay on one side.
Matrix away_from(double kink, Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m = random_matrix(r, c, rng);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (std::abs(m.data()[i] - kink) < 0.1) m.data()[i] += 0.3;
  }
  return m;
}

void expect_check(const std::function<Var(Tape&)>& f, std::vector<Parameter*> params) {
  const auto report = grad_check(f, params);
  EXPECT_TRUE(report.passed) << "worst " << report.worst << " rel " << report.max_rel_error;
  EXPECT_GT(report.entries, 0u);
}

TEST(Autodiff, SumOfSquaresGradient) {
  Parameter w("w", Matrix{{1.0, -2.0}, {3.0, 0.5}});
  Tape tape;
  Var loss = sum(mul(tape.param(w), tape.param(w)));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(loss.scalar(), 1.0 + 4.0 + 9.0 + 0.25);
  EXPECT_TRUE(w.grad().isApprox(2.0 * w.value()));
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  Parameter w("w", Matrix::Constant(1, 1, 3.0));
  Tape tape;
  Var a = tape.param(w);
  Var loss = add(mul(a, a), scale(a, 5.0));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 11.0);
  w.zero_grad();
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 0.0);
}

TEST(Autodiff, MatmulAndTransposeGradients) {
  Rng rng(1);
  Parameter a("a", random_matrix(3, 4, rng));
  Parameter b("b", random_matrix(5, 4, rng));
  Matrix w = random_matrix(3, 5, rng);
  expect_check([&](Tape& t) { return sum(mul(matmul(t.param(a), transpose(t.param(b))), t.constant(w))); }, {&a, &b});
}

TEST(Autodiff, BroadcastingGradients) {
  Rng rng(2);
  Parameter m("m", random_matrix(4, 3, rng));
  Parameter row("row", random_matrix(1, 3, rng));
  Parameter col("col", away_from(0.0, 4, 1, rng));
  Parameter s("s", Matrix::Constant(1, 1, 0.7));
  expect_check(
      [&](Tape& t) {
        Var x = add(mul(t.param(m), t.param(row)), t.param(s));
        Var y = sub(div(x, t.param(col)), t.param(row));
        return sum(mul(y, y));
      },
      {&m, &row, &col, &s});
}

TEST(Autodiff, ElementwiseNonlinearities) {
  Rng rng(3);
  Parameter x("x", away_from(0.0, 3, 4, rng));
  Parameter p("p", (random_matrix(3, 4, rng).array().abs() + 0.5).matrix());
  expect_check(
      [&](Tape& t) {
        Var v = t.param(x);
        Var a = add(sigmoid(v), relu(v));
        Var b = add(exp(scale(v, 0.3)), log(t.param(p)));
        Var c = add(sqrt(t.param(p)), neg(add_scalar(v, 0.2)));
        return sum(mul(add(a, b), c));
      },
      {&x, &p});
}

TEST(Autodiff, ClampPassesGradientOnlyInside) {
  Parameter x("x", Matrix{{-2.0, 0.3, 2.0}});
  Tape tape;
  tape.backward(sum(clamp(tape.param(x), -1.0, 1.0)));
  EXPECT_EQ(x.grad(), (Matrix{{0.0, 1.0, 0.0}}));
}

TEST(Autodiff, MinMaxTieGoesToFirstOperand) {
  Parameter a("a", Matrix{{1.0, 2.0}});
  Parameter b("b", Matrix{{1.0, 1.0}});
  Tape tape;
  tape.backward(sum(maximum(tape.param(a), tape.param(b))));
  EXPECT_EQ(a.grad(), (Matrix{{1.0, 1.0}}));
  EXPECT_EQ(b.grad(), (Matrix{{0.0, 0.0}}));
}

TEST(Autodiff, ReduceMaxRoutesToFirstExtreme) {
  Parameter x("x", Matrix{{3.0, 1.0, 3.0, -4.0}});
  Tape tape;
  Var mx = reduce_max(tape.param(x));
  Var mn = reduce_min(tape.param(x));
  tape.backward(add(mx, scale(mn, 2.0)));
  EXPECT_EQ(x.grad(), (Matrix{{1.0, 0.0, 0.0, 2.0}}));
}

TEST(Autodiff, SoftmaxBothAxes) {
  Rng rng(4);
  Parameter x("x", random_matrix(3, 5, rng));
  Matrix w = random_matrix(3, 5, rng);
  expect_check([&](Tape& t) { return sum(mul(softmax(t.param(x), Axis::Cols), t.constant(w))); }, {&x});
  expect_check([&](Tape& t) { return sum(mul(softmax(t.param(x), Axis::Rows), t.constant(w))); }, {&x});

  Tape tape(false);
  Var s = softmax(tape.constant(Matrix{{1000.0, 1000.0, -1000.0}}));
  EXPECT_NEAR(s.value()(0, 0), 0.5, 1e-15);
  EXPECT_EQ(s.value()(0, 2), 0.0);
}

TEST(Autodiff, LayerNormGradient) {
  Rng rng(5);
  Parameter x("x", random_matrix(4, 6, rng));
  Matrix w = random_matrix(4, 6, rng);
  expect_check([&](Tape& t) { return sum(mul(layer_norm(t.param(x)), t.constant(w))); }, {&x});

  Tape tape(false);
  Matrix y = layer_norm(tape.constant(x.value())).value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(r).squaredNorm() / y.cols(), 1.0, 1e-4);
  }
}

TEST(Autodiff, ReductionsSlicesAndConcat) {
  Rng rng(6);
  Parameter x("x", random_matrix(4, 3, rng));
  Parameter y("y", random_matrix(2, 3, rng));
  Matrix w = random_matrix(6, 3, rng);
  expect_check(
      [&](Tape& t) {
        Var xv = t.param(x);
        std::vector<Var> rows{slice_rows(xv, 1, 3), t.param(y), slice_rows(xv, 0, 1)};
        Var stacked = concat_rows(rows);
        std::vector<Var> cols{slice_cols(stacked, 2, 1), slice_cols(stacked, 0, 2)};
        Var c = concat_cols(cols);
        return add(sum(mul(c, t.constant(w))), add(mean(row_sum(c)), scale(reduce_max(c), 0.5)));
      },
      {&x, &y});
}

TEST(Autodiff, ShapeErrors) {
  Tape tape;
  Var a = tape.constant(Matrix::Zero(2, 3));
  Var b = tape.constant(Matrix::Zero(2, 2));
  EXPECT_THROW(matmul(a, a), DimensionError);
  EXPECT_THROW(add(a, b), DimensionError);
  EXPECT_THROW(slice_rows(a, 1, 2), DimensionError);
}

TEST(Autodiff, DomainAndNumericErrors) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Matrix::Zero(1, 1))), DomainError);
  EXPECT_THROW(sqrt(tape.constant(Matrix::Constant(1, 1, -1.0))), DomainError);
  EXPECT_THROW(div(tape.scalar(1.0), tape.scalar(0.0)), NumericError);
  EXPECT_THROW(exp(tape.scalar(1e6)), NumericError);
}

TEST(Autodiff, NonRecordingTapeKeepsNoOps) {
  Parameter w("w", Matrix::Ones(2, 2));
  Tape tape(false);
  Var v = sum(mul(tape.param(w), tape.param(w)));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_DOUBLE_EQ(v.scalar(), 4.0);
  EXPECT_EQ(w.reads(), 2u);
}

TEST(Autodiff, GradCheckDetectsWrongGradient) {
  Parameter w("w", Matrix{{0.7, -0.3}});
  auto bad = [&](Tape& t) {
    Var x = t.param(w);
    // Value of x*x but a backward that returns x instead of 2x.
    Matrix v = x.value().cwiseProduct(x.value());
    Matrix xv = x.value();
    std::vector<Var> in{x};
    return sum(t.record("bad_square", v, in, [x, xv](const Matrix& g) { x.accumulate(g.cwiseProduct(xv)); }));
  };
  const auto report = grad_check(bad, std::vector<Parameter*>{&w});
  EXPECT_FALSE(report.passed);
  EXPECT_NEAR(report.max_rel_error, 0.5, 1e-6);
}

}  // namespace
}  // namespace tpwng::ad
