#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation of one forward pass in creation order,
// which is also a topological order, so backward is a single reverse sweep.
// Parameters live outside the tape; a tape only reads them, and gradients
// are collected afterwards with Tape::grad_of().

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dstt/rng.hpp"
#include "dstt/tensor.hpp"

namespace dstt::ad {

/// A named trainable tensor (one entry of the model's weights).
struct Parameter {
  Parameter() = default;
  Parameter(std::string id, Tensor value, bool trainable = true)
      : id(std::move(id)), value(std::move(value)), grad(Tensor::zeros_like(this->value)),
        trainable(trainable) {}

  std::string id;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
public:
  /// Backward rule for node `self`: read its gradient, accumulate into inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// With recording off no backward rules are stored (inference mode).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor value);
  /// Leaf that receives a gradient (used directly by tests and oracles).
  Var variable(Tensor value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(const Parameter& p);

  /// Registers an op result. `fn` is dropped when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  /// Propagates d(loss)/d(node) to every reachable node. The loss must be a
  /// single element, and a tape can run backward once.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of a node; zero-filled when backward never reached it.
  Tensor grad(Var v) const;
  /// Gradient of a parameter; exactly zero when it was not used.
  Tensor grad_of(const Parameter& p) const;
  /// Mutable gradient buffer (materialized on first access). For backward rules.
  Tensor& grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  std::size_t size() const noexcept { return nodes_.size(); }
  void reset();

private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> params_;
  bool recording_;
  bool backward_done_ = false;
};

// ---- matrix ops -----------------------------------------------------------

/// [m x k] * [k x p]; rank-1 operands are treated as a single row.
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Adds a length-n bias to every row of an [m x n] matrix.
Var add_bias(Var x, Var bias);

// ---- elementwise ----------------------------------------------------------
// Binary ops need equal shapes, except that a one-element operand is applied
// to every element of the other.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var square(Var a);

enum class Elementwise { Sigmoid, Tanh, Relu, Exp, Log, Add, Mul, Sub };
/// Dispatch form: one input for unary ops, two for binary ones.
Var elementwise(Elementwise op, const std::vector<Var>& inputs);

// ---- reductions and normalization -----------------------------------------

Var sum(Var a);
Var mean(Var a);
/// Max-shifted softmax along `axis` of a rank-1 or rank-2 tensor.
Var softmax(Var x, std::size_t axis);

// ---- structural -----------------------------------------------------------

Var reshape(Var a, Shape shape);
/// Columns [begin, end) of a matrix.
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
/// Repeats a single row `times` times: [n] or [1 x n] -> [times x n].
Var tile_rows(Var row, std::size_t times);
/// Same value, no gradient flows back.
Var detach(Var a);

// ---- fused ----------------------------------------------------------------

/// Full LSTM recurrence from zero state. Gate column blocks of the weight
/// matrices are ordered input, forget, candidate, output.
/// x: [T x C], w_input: [C x 4H], w_recurrent: [H x 4H], bias: [4H] -> [T x H].
Var lstm_sequence(Var x, Var w_input, Var w_recurrent, Var bias);

/// mu + softplus(rho) * eps with eps ~ N(0, 1) drawn from `rng`.
Var gaussian_reparam_sample(Var mu, Var rho, Rng& rng);

/// Numerically stable log(1 + exp(x)) and its inverse.
double softplus_value(double x);
double inverse_softplus(double y);

}  // namespace dstt::ad
