#include "tpwng/autodiff.hpp"

#include "tpwng/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tpwng::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, std::string_view op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw DimensionError(std::string(op) + ": cannot broadcast " + std::to_string(a) +
                       " against " + std::to_string(b));
}

Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the operand's shape.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix out = g;
  if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return a.tape();
}

struct Shape2 {
  Eigen::Index rows;
  Eigen::Index cols;
};

Shape2 broadcast_shape(const Var& a, const Var& b, std::string_view op) {
  return {broadcast_dim(a.rows(), b.rows(), op), broadcast_dim(a.cols(), b.cols(), op)};
}

}  // namespace

// ---------------------------------------------------------------------------

Parameter::Parameter(std::string name, Matrix init)
    : name_(std::move(name)), node_(std::make_shared<Node>()) {
  node_->value = std::move(init);
  node_->requires_grad = true;
  node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

void Parameter::zero_grad() {
  node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

double Var::scalar() const {
  if (node_->value.rows() != 1 || node_->value.cols() != 1) {
    throw ContractError("expected a scalar, got " + shape_str(node_->value));
  }
  return node_->value(0, 0);
}

void Var::accumulate(const Matrix& g) const {
  if (!node_->requires_grad) return;
  if (node_->grad.size() == 0) {
    node_->grad = g;
  } else {
    node_->grad += g;
  }
}

Var Tape::param(Parameter& p) {
  ++p.reads_;
  return Var(this, p.node_);
}

Var Tape::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(this, std::move(node));
}

Var Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::record(std::string_view op, Matrix value, std::span<const Var> inputs,
                 std::function<void(const Matrix&)> backward) {
  if (!value.allFinite()) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool track = record_ && std::any_of(inputs.begin(), inputs.end(),
                                            [](const Var& v) { return v.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    ops_.push_back(node);
  }
  return Var(this, std::move(node));
}

void Tape::backward(const Var& loss) {
  if (!record_) throw ContractError("backward on a non-recording tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward requires a scalar root, got " + shape_str(loss.value()));
  }
  if (!loss.requires_grad()) {
    ops_.clear();
    return;
  }
  loss.accumulate(Matrix::Ones(1, 1));
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    Node& n = **it;
    // An op whose output never reached the loss has no gradient to pass on.
    if (n.backward && n.grad.size() != 0) n.backward(n.grad);
  }
  // The record is single-use; release closures and intermediate values.
  ops_.clear();
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  const Var in[] = {a, b};
  return tape_of(a).record("matmul", std::move(out), in, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.accumulate(g * b.value().transpose());
    if (b.requires_grad()) b.accumulate(a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  const Var in[] = {a};
  return tape_of(a).record("transpose", a.value().transpose(), in,
                           [a](const Matrix& g) { a.accumulate(g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  const auto s = broadcast_shape(a, b, "add");
  Matrix out = expand(a.value(), s.rows, s.cols) + expand(b.value(), s.rows, s.cols);
  const Var in[] = {a, b};
  return tape_of(a).record("add", std::move(out), in, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.accumulate(reduce_to(g, a.rows(), a.cols()));
    if (b.requires_grad()) b.accumulate(reduce_to(g, b.rows(), b.cols()));
  });
}

Var sub(const Var& a, const Var& b) {
  const auto s = broadcast_shape(a, b, "sub");
  Matrix out = expand(a.value(), s.rows, s.cols) - expand(b.value(), s.rows, s.cols);
  const Var in[] = {a, b};
  return tape_of(a).record("sub", std::move(out), in, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.accumulate(reduce_to(g, a.rows(), a.cols()));
    if (b.requires_grad()) b.accumulate(reduce_to(-g, b.rows(), b.cols()));
  });
}

Var mul(const Var& a, const Var& b) {
  const auto s = broadcast_shape(a, b, "mul");
  Matrix out = expand(a.value(), s.rows, s.cols).cwiseProduct(expand(b.value(), s.rows, s.cols));
  const Var in[] = {a, b};
  return tape_of(a).record("mul", std::move(out), in, [a, b, s](const Matrix& g) {
    if (a.requires_grad()) {
      a.accumulate(reduce_to(g.cwiseProduct(expand(b.value(), s.rows, s.cols)), a.rows(), a.cols()));
    }
    if (b.requires_grad()) {
      b.accumulate(reduce_to(g.cwiseProduct(expand(a.value(), s.rows, s.cols)), b.rows(), b.cols()));
    }
  });
}

Var div(const Var& a, const Var& b) {
  const auto s = broadcast_shape(a, b, "div");
  Matrix out = expand(a.value(), s.rows, s.cols).cwiseQuotient(expand(b.value(), s.rows, s.cols));
  const Var in[] = {a, b};
  return tape_of(a).record("div", std::move(out), in, [a, b, s](const Matrix& g) {
    const Matrix bx = expand(b.value(), s.rows, s.cols);
    if (a.requires_grad()) a.accumulate(reduce_to(g.cwiseQuotient(bx), a.rows(), a.cols()));
    if (b.requires_grad()) {
      const Matrix ax = expand(a.value(), s.rows, s.cols);
      Matrix gb = -(g.cwiseProduct(ax)).cwiseQuotient(bx.cwiseProduct(bx));
      b.accumulate(reduce_to(gb, b.rows(), b.cols()));
    }
  });
}

namespace {

// Ties route the gradient to `a`.
Var select_op(const Var& a, const Var& b, bool take_max) {
  const char* name = take_max ? "maximum" : "minimum";
  const auto s = broadcast_shape(a, b, name);
  const Matrix ax = expand(a.value(), s.rows, s.cols);
  const Matrix bx = expand(b.value(), s.rows, s.cols);
  Matrix pick_a(s.rows, s.cols);
  Matrix out(s.rows, s.cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double x = ax.data()[i];
    const double y = bx.data()[i];
    const bool use_a = take_max ? (x >= y) : (x <= y);
    pick_a.data()[i] = use_a ? 1.0 : 0.0;
    out.data()[i] = use_a ? x : y;
  }
  const Var in[] = {a, b};
  return tape_of(a).record(name, std::move(out), in, [a, b, pick_a](const Matrix& g) {
    if (a.requires_grad()) a.accumulate(reduce_to(g.cwiseProduct(pick_a), a.rows(), a.cols()));
    if (b.requires_grad()) {
      Matrix pick_b = (1.0 - pick_a.array()).matrix();
      b.accumulate(reduce_to(g.cwiseProduct(pick_b), b.rows(), b.cols()));
    }
  });
}

}  // namespace

Var minimum(const Var& a, const Var& b) { return select_op(a, b, false); }
Var maximum(const Var& a, const Var& b) { return select_op(a, b, true); }

Var scale(const Var& a, double s) {
  const Var in[] = {a};
  return tape_of(a).record("scale", a.value() * s, in,
                           [a, s](const Matrix& g) { a.accumulate(g * s); });
}

Var add_scalar(const Var& a, double s) {
  const Var in[] = {a};
  return tape_of(a).record("add_scalar", (a.value().array() + s).matrix(), in,
                           [a](const Matrix& g) { a.accumulate(g); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const Var in[] = {a};
  Matrix y = out;
  return tape_of(a).record("sigmoid", std::move(out), in, [a, y](const Matrix& g) {
    a.accumulate(g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  const Var in[] = {a};
  return tape_of(a).record("relu", std::move(out), in, [a](const Matrix& g) {
    // Subgradient 0 at the kink.
    a.accumulate((a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  Matrix y = out;
  const Var in[] = {a};
  return tape_of(a).record("exp", std::move(out), in,
                           [a, y](const Matrix& g) { a.accumulate(g.cwiseProduct(y)); });
}

Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log of a non-positive value");
  const Var in[] = {a};
  return tape_of(a).record("log", a.value().array().log().matrix(), in,
                           [a](const Matrix& g) { a.accumulate(g.cwiseQuotient(a.value())); });
}

Var sqrt(const Var& a) {
  if ((a.value().array() < 0.0).any()) throw DomainError("sqrt of a negative value");
  Matrix out = a.value().array().sqrt().matrix();
  Matrix y = out;
  const Var in[] = {a};
  return tape_of(a).record("sqrt", std::move(out), in, [a, y](const Matrix& g) {
    a.accumulate((0.5 * g.array() / y.array()).matrix());
  });
}

Var clamp(const Var& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  const Var in[] = {a};
  return tape_of(a).record("clamp", std::move(out), in, [a, lo, hi](const Matrix& g) {
    const auto& x = a.value().array();
    a.accumulate(((x > lo) && (x < hi)).select(g, 0.0).matrix());
  });
}

Var softmax(const Var& a, Axis axis) {
  const bool per_row = axis == Axis::Cols;
  if ((per_row && a.cols() == 0) || (!per_row && a.rows() == 0)) {
    throw DimensionError("softmax over an empty axis");
  }
  Matrix out(a.rows(), a.cols());
  if (per_row) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double m = a.value().row(r).maxCoeff();
      out.row(r) = (a.value().row(r).array() - m).exp().matrix();
      out.row(r) /= out.row(r).sum();
    }
  } else {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double m = a.value().col(c).maxCoeff();
      out.col(c) = (a.value().col(c).array() - m).exp().matrix();
      out.col(c) /= out.col(c).sum();
    }
  }
  Matrix y = out;
  const Var in[] = {a};
  return tape_of(a).record("softmax", std::move(out), in, [a, y, per_row](const Matrix& g) {
    const Matrix gy = g.cwiseProduct(y);
    Matrix gx(y.rows(), y.cols());
    if (per_row) {
      const Vector dots = gy.rowwise().sum();
      gx = gy - y.cwiseProduct(dots.replicate(1, y.cols()));
    } else {
      const Eigen::RowVectorXd dots = gy.colwise().sum();
      gx = gy - y.cwiseProduct(dots.replicate(y.rows(), 1));
    }
    a.accumulate(gx);
  });
}

Var layer_norm(const Var& x, double eps) {
  if (x.cols() < 1) throw DimensionError("layer_norm needs at least one column");
  const Eigen::Index n = x.cols();
  Matrix y(x.rows(), n);
  Vector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const auto centered = (x.value().row(r).array() - mu).eval();
    const double var = centered.square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix yc = y;
  const Var in[] = {x};
  return tape_of(x).record("layer_norm", std::move(y), in, [x, yc, inv_std, n](const Matrix& g) {
    Matrix gx(g.rows(), g.cols());
    const double nd = static_cast<double>(n);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double g_mean = g.row(r).sum() / nd;
      const double gy_mean = g.row(r).dot(yc.row(r)) / nd;
      gx.row(r) = inv_std(r) * (g.row(r).array() - g_mean - yc.row(r).array() * gy_mean).matrix();
    }
    x.accumulate(gx);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Var in[] = {a};
  return tape_of(a).record("sum", std::move(out), in, [a](const Matrix& g) {
    a.accumulate(Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw DimensionError("mean of an empty value");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  const Var in[] = {a};
  return tape_of(a).record("row_sum", std::move(out), in,
                           [a](const Matrix& g) { a.accumulate(g.replicate(1, a.cols())); });
}

namespace {

Var reduce_extreme(const Var& a, bool take_max) {
  if (a.size() == 0) throw DimensionError("reduction over an empty value");
  Eigen::Index best = 0;
  const double* d = a.value().data();
  for (Eigen::Index i = 1; i < a.size(); ++i) {
    if (take_max ? d[i] > d[best] : d[i] < d[best]) best = i;
  }
  Matrix out(1, 1);
  out(0, 0) = d[best];
  const Var in[] = {a};
  return tape_of(a).record(take_max ? "reduce_max" : "reduce_min", std::move(out), in,
                           [a, best](const Matrix& g) {
                             Matrix ga = Matrix::Zero(a.rows(), a.cols());
                             ga.data()[best] = g(0, 0);
                             a.accumulate(ga);
                           });
}

}  // namespace

Var reduce_max(const Var& a) { return reduce_extreme(a, true); }
Var reduce_min(const Var& a) { return reduce_extreme(a, false); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape_of(parts.front()).record("concat_cols", std::move(out), parts,
                                       [keep](const Matrix& g) {
                                         Eigen::Index off = 0;
                                         for (const auto& p : keep) {
                                           if (p.requires_grad()) p.accumulate(g.middleCols(off, p.cols()));
                                           off += p.cols();
                                         }
                                       });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape_of(parts.front()).record("concat_rows", std::move(out), parts,
                                       [keep](const Matrix& g) {
                                         Eigen::Index off = 0;
                                         for (const auto& p : keep) {
                                           if (p.requires_grad()) p.accumulate(g.middleRows(off, p.rows()));
                                           off += p.rows();
                                         }
                                       });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows out of range");
  }
  const Var in[] = {a};
  return tape_of(a).record("slice_rows", a.value().middleRows(begin, count), in,
                           [a, begin, count](const Matrix& g) {
                             Matrix ga = Matrix::Zero(a.rows(), a.cols());
                             ga.middleRows(begin, count) = g;
                             a.accumulate(ga);
                           });
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols out of range");
  }
  const Var in[] = {a};
  return tape_of(a).record("slice_cols", a.value().middleCols(begin, count), in,
                           [a, begin, count](const Matrix& g) {
                             Matrix ga = Matrix::Zero(a.rows(), a.cols());
                             ga.middleCols(begin, count) = g;
                             a.accumulate(ga);
                           });
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Var(Tape&)>& f,
                           std::span<Parameter* const> params, double eps, double tol,
                           double floor) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad());

  auto eval = [&f]() {
    Tape tape(false);
    return f(tape).scalar();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& v = params[k]->value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + eps;
      const double fp = eval();
      v.data()[i] = orig - eps;
      const double fm = eval();
      v.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k].data()[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.entries == 0) {
        if (rel > report.max_rel_error) {
          report.worst = params[k]->name() + "[" + std::to_string(i) + "]";
        }
        report.max_rel_error = std::max(report.max_rel_error, rel);
      }
      ++report.entries;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace tpwng::ad
