#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices.
//
// Every value is a 2-D matrix; vectors are 1xN or Nx1 and scalars are 1x1.
// A Tape records ops in creation order, which is a topological order of the
// graph, so Tape::backward walks the record once in reverse.
//
//   Tape tape;
//   Var w = tape.param(weights);
//   Var loss = sum(mul(w, w));
//   tape.backward(loss);          // weights.grad() == 2 * weights.value()

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tpwng::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Node {
  Matrix value;
  Matrix grad;  // allocated only when requires_grad
  bool requires_grad = false;
  // Accumulates the incoming gradient into the op's inputs.
  std::function<void(const Matrix&)> backward;
};

/// A trainable leaf. Owns its value and accumulated gradient across tapes.
class Parameter {
 public:
  Parameter() : Parameter("", Matrix()) {}
  Parameter(std::string name, Matrix init);

  const std::string& name() const { return name_; }
  Matrix& value() { return node_->value; }
  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }

  void zero_grad();

  // Number of times a tape has read this parameter. Used to prove that a code
  // path never touches a parameter group.
  std::size_t reads() const { return reads_; }
  void reset_reads() { reads_ = 0; }

 private:
  friend class Tape;
  std::string name_;
  std::shared_ptr<Node> node_;
  std::size_t reads_ = 0;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::shared_ptr<Node> node) : tape_(tape), node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const;
  Tape& tape() const { return *tape_; }
  bool valid() const { return node_ != nullptr; }

  // Adds g to this value's gradient. No-op for untracked values.
  void accumulate(const Matrix& g) const;

 private:
  friend class Tape;
  Tape* tape_ = nullptr;
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  /// A non-recording tape evaluates ops without keeping backward closures.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return ops_.size(); }

  Var param(Parameter& p);
  Var constant(Matrix value);
  Var scalar(double v);

  /// Registers the output of an op. `backward` receives d(loss)/d(output) and
  /// must call accumulate() on each input. Throws NumericError if `value`
  /// contains NaN or Inf.
  Var record(std::string_view op, Matrix value, std::span<const Var> inputs,
             std::function<void(const Matrix&)> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tracked leaf.
  void backward(const Var& loss);

 private:
  bool record_;
  std::vector<std::shared_ptr<Node>> ops_;
};

// ---------------------------------------------------------------------------
// Ops. Binary elementwise ops broadcast along any dimension of size 1.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var sigmoid(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);   // DomainError on non-positive input
Var sqrt(const Var& a);  // DomainError on negative input
Var clamp(const Var& a, double lo, double hi);

enum class Axis { Rows = 0, Cols = 1 };

/// Normalizes along `axis`: Axis::Cols makes every row a probability vector.
Var softmax(const Var& a, Axis axis = Axis::Cols);

/// Per-row standardization (mean 0, variance 1) without affine terms.
Var layer_norm(const Var& x, double eps = 1e-5);

Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);  // N x 1
Var reduce_max(const Var& a);  // 1x1, gradient to the first maximal entry
Var reduce_min(const Var& a);  // 1x1, gradient to the first minimal entry

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<param>[index]" of the largest relative error
  bool passed = true;
};

/// Compares reverse-mode gradients of `f` against central differences for
/// every entry of `params`. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Var(Tape&)>& f,
                           std::span<Parameter* const> params, double eps = 1e-5,
                           double tol = 1e-4, double floor = 1e-4);

}  // namespace tpwng::ad
