#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gtgrn/numcore/matrix.hpp"

namespace gtgrn::numcore {

/// A named trainable matrix with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Ordered registry of parameters. Addresses stay stable as parameters are added.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  /// Throws ContractError on a duplicate name.
  Parameter& add(std::string name, Matrix init);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;

  /// True when every parameter value is bitwise identical.
  bool values_equal(const ParameterSet& other) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  /// Gradient after Tape::backward. Zero matrix when the node received none.
  Matrix grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in execution order and back-propagates
/// through them in reverse. Single-threaded; one Tape per training step.
class Tape {
 public:
  /// Receives the tape and this node's id; must accumulate into input grads.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input.
  Var constant(Matrix value);
  /// Tracked leaf not bound to a registry (gradient read back through Var::grad).
  Var variable(Matrix value);
  /// Tracked leaf bound to a parameter; backward() adds into param.grad.
  Var param(Parameter& param);

  /// Reverse traversal from a 1x1 loss node. Throws ContractError for a
  /// non-scalar loss and StateError when called twice without reset().
  void backward(Var loss);
  void reset();

  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool backward_done() const noexcept { return backward_done_; }

  // Interface for operation implementers.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool tracked(std::size_t id) const { return nodes_[id].tracked; }
  /// Mutable gradient of node id, allocated as zeros on first use.
  Matrix& grad_ref(std::size_t id);
  /// Gradient flowing into node id; only valid inside a BackwardFn.
  const Matrix& incoming(std::size_t id) const { return nodes_[id].grad; }
  Matrix grad_copy(std::size_t id) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool tracked = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Differentiable operations. All inputs must live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// x (r x c) plus a 1 x c row broadcast to every row.
Var add_row(Var x, Var row);
Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var square(Var a);
/// Clamps to [lo, hi]; gradient is zero where clamped.
Var clamp(Var a, double lo, double hi);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Mean of all entries, 1x1.
Var mean(Var a);
/// Rows of a selected by index (repeats allowed); backward scatter-adds.
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// [a | b] column concatenation.
Var concat_cols(Var a, Var b);
Var softmax_rows(Var a);
/// gain and bias are 1 x cols rows.
Var layer_norm(Var x, Var gain, Var bias, double eps);
/// Mean over rows of -log softmax(logits)[row, target[row]]. 1x1.
Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets);
/// Mean binary cross-entropy of sigmoid(logits) (n x 1) against 0/1 labels. 1x1.
Var bce_with_logits(Var logits, std::span<const double> labels);

// Operator sugar.
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }

}  // namespace gtgrn::numcore
