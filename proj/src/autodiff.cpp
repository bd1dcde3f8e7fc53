#include "dstt/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "dstt/errors.hpp"

namespace dstt::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct Dims {
  std::size_t rows;
  std::size_t cols;
};

Dims matrix_dims(const Shape& s, const char* op) {
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return {1, s[0]};
  throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

ConstMap view(const Tensor& t, Dims d) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
}

MutMap view(Tensor& t, Dims d) {
  return MutMap(t.data(), static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
}

void accumulate(Tensor& into, const Tensor& from) {
  double* dst = into.data();
  const double* src = from.data();
  for (std::size_t i = 0, n = into.numel(); i < n; ++i) dst[i] += src[i];
}

// Shared implementation of one-input pointwise ops. `deriv(x, y)` returns
// dy/dx given the input and output values.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fwd(x[i]);
  const std::size_t in = a.id();
  return a.tape().record(std::move(y), {a}, [in, deriv](Tape& tape, std::size_t self) {
    const Tensor& xv = tape.value(in);
    const Tensor& yv = tape.value(self);
    const Tensor& g = tape.grad_buffer(self);
    Tensor& gx = tape.grad_buffer(in);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

enum class BinaryKind { Add, Sub, Mul };

Var binary(Var a, Var b, BinaryKind kind) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool a_scalar = !same && av.numel() == 1;
  const bool b_scalar = !same && bv.numel() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError("elementwise op on mismatched shapes " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()));
  }
  const Shape out_shape = a_scalar ? bv.shape() : av.shape();
  Tensor y(out_shape);
  const std::size_t n = y.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double x1 = a_scalar ? av[0] : av[i];
    const double x2 = b_scalar ? bv[0] : bv[i];
    switch (kind) {
      case BinaryKind::Add: y[i] = x1 + x2; break;
      case BinaryKind::Sub: y[i] = x1 - x2; break;
      case BinaryKind::Mul: y[i] = x1 * x2; break;
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(
      std::move(y), {a, b}, [ia, ib, kind, a_scalar, b_scalar](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        const std::size_t n = g.numel();
        if (tape.requires_grad(ia)) {
          const Tensor& other = tape.value(ib);
          Tensor& ga = tape.grad_buffer(ia);
          for (std::size_t i = 0; i < n; ++i) {
            double d = g[i];
            if (kind == BinaryKind::Mul) d *= b_scalar ? other[0] : other[i];
            ga[a_scalar ? 0 : i] += d;
          }
        }
        if (tape.requires_grad(ib)) {
          const Tensor& other = tape.value(ia);
          Tensor& gb = tape.grad_buffer(ib);
          for (std::size_t i = 0; i < n; ++i) {
            double d = g[i];
            if (kind == BinaryKind::Sub) d = -d;
            if (kind == BinaryKind::Mul) d *= a_scalar ? other[0] : other[i];
            gb[b_scalar ? 0 : i] += d;
          }
        }
      });
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- Var / Tape -----------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  if (auto it = params_.find(&p); it != params_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = recording_ && p.trainable;
  Var v = push(std::move(n));
  params_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ContractError("op mixes vars from different tapes");
      n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ContractError("op mixes vars from different tapes");
      n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
  if (backward_done_) throw ContractError("backward already ran on this tape; reset it first");
  if (loss.value().numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(loss.value().shape()));
  }
  if (!recording_) throw ContractError("backward on a tape that was not recording");
  backward_done_ = true;
  grad_buffer(loss.id_)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

Tensor Tape::grad_of(const Parameter& p) const {
  auto it = params_.find(&p);
  if (it == params_.end()) return Tensor::zeros_like(p.value);
  const Node& n = nodes_[it->second];
  return n.has_grad ? n.grad : Tensor::zeros_like(p.value);
}

void Tape::reset() {
  nodes_.clear();
  params_.clear();
  backward_done_ = false;
}

// ---- matrix ops -----------------------------------------------------------

Var matmul(Var a, Var b) {
  const Dims da = matrix_dims(a.shape(), "matmul");
  const Dims db = matrix_dims(b.shape(), "matmul");
  if (da.cols != db.rows) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  Tensor y(Shape{da.rows, db.cols});
  if (y.numel() > 0) view(y, {da.rows, db.cols}).noalias() = view(a.value(), da) * view(b.value(), db);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib, da, db](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad_buffer(self);
    if (g.numel() == 0) return;
    const ConstMap gm = view(g, {da.rows, db.cols});
    if (tape.requires_grad(ia)) {
      Tensor& ga = tape.grad_buffer(ia);
      view(ga, da).noalias() += gm * view(tape.value(ib), db).transpose();
    }
    if (tape.requires_grad(ib)) {
      Tensor& gb = tape.grad_buffer(ib);
      view(gb, db).noalias() += view(tape.value(ia), da).transpose() * gm;
    }
  });
}

Var transpose(Var a) {
  const Dims d = matrix_dims(a.shape(), "transpose");
  Tensor y(Shape{d.cols, d.rows});
  view(y, {d.cols, d.rows}) = view(a.value(), d).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, d](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad_buffer(self);
    view(tape.grad_buffer(ia), d) += view(g, {d.cols, d.rows}).transpose();
  });
}

Var add_bias(Var x, Var bias) {
  const Dims d = matrix_dims(x.shape(), "add_bias");
  if (bias.value().numel() != d.cols) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(x.shape()));
  }
  Tensor y = x.value();
  const Tensor& b = bias.value();
  for (std::size_t r = 0; r < d.rows; ++r)
    for (std::size_t c = 0; c < d.cols; ++c) y[r * d.cols + c] += b[c];
  const std::size_t ix = x.id();
  const std::size_t ib = bias.id();
  return x.tape().record(std::move(y), {x, bias}, [ix, ib, d](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad_buffer(self);
    if (tape.requires_grad(ix)) accumulate(tape.grad_buffer(ix), g);
    if (tape.requires_grad(ib)) {
      Tensor& gb = tape.grad_buffer(ib);
      for (std::size_t r = 0; r < d.rows; ++r)
        for (std::size_t c = 0; c < d.cols; ++c) gb[c] += g[r * d.cols + c];
    }
  });
}

// ---- elementwise ----------------------------------------------------------

Var add(Var a, Var b) { return binary(a, b, BinaryKind::Add); }
Var sub(Var a, Var b) { return binary(a, b, BinaryKind::Sub); }
Var mul(Var a, Var b) { return binary(a, b, BinaryKind::Mul); }

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!std::isfinite(std::exp(x[i]))) {
      throw DomainError("exp overflows at input " + std::to_string(x[i]));
    }
  }
  return unary(a, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var a) {
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (!(x[i] > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x[i]));
  }
  return unary(a, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw DomainError("inverse_softplus needs a positive value");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

Var softplus(Var a) {
  return unary(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var elementwise(Elementwise op, const std::vector<Var>& inputs) {
  const bool is_binary = op == Elementwise::Add || op == Elementwise::Mul || op == Elementwise::Sub;
  if (inputs.size() != (is_binary ? 2u : 1u)) {
    throw ContractError("elementwise: wrong number of inputs");
  }
  switch (op) {
    case Elementwise::Sigmoid: return sigmoid(inputs[0]);
    case Elementwise::Tanh: return tanh(inputs[0]);
    case Elementwise::Relu: return relu(inputs[0]);
    case Elementwise::Exp: return exp(inputs[0]);
    case Elementwise::Log: return log(inputs[0]);
    case Elementwise::Add: return add(inputs[0], inputs[1]);
    case Elementwise::Mul: return mul(inputs[0], inputs[1]);
    case Elementwise::Sub: return sub(inputs[0], inputs[1]);
  }
  throw ContractError("elementwise: unknown op");
}

// ---- reductions -----------------------------------------------------------

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& tape, std::size_t self) {
    const double g = tape.grad_buffer(self)[0];
    Tensor& ga = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw EmptySequenceError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var softmax(Var x, std::size_t axis) {
  const Shape& s = x.shape();
  if (s.size() == 0 || s.size() > 2 || axis >= s.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(s));
  }
  // View as [outer x len x inner] with the reduced axis in the middle.
  const std::size_t len = s[axis];
  const std::size_t outer = (s.size() == 2 && axis == 1) ? s[0] : 1;
  const std::size_t inner = (s.size() == 2 && axis == 0) ? s[1] : 1;
  const Tensor& xv = x.value();
  Tensor y(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        y[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= z;
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(y), {x}, [ix, len, outer, inner](Tape& tape, std::size_t self) {
    const Tensor& yv = tape.value(self);
    const Tensor& g = tape.grad_buffer(self);
    Tensor& gx = tape.grad_buffer(ix);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * yv[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gx[i] += yv[i] * (g[i] - dot);
        }
      }
    }
  });
}

// ---- structural -----------------------------------------------------------

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.value().numel()) {
    throw DimensionError("reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tensor y(std::move(shape), a.value().storage());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& tape, std::size_t self) {
    accumulate(tape.grad_buffer(ia), tape.grad_buffer(self));
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Dims d = matrix_dims(a.shape(), "slice_cols");
  if (begin > end || end > d.cols) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor y(Shape{d.rows, w});
  const Tensor& x = a.value();
  for (std::size_t r = 0; r < d.rows; ++r)
    std::copy_n(x.data() + r * d.cols + begin, w, y.data() + r * w);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, d, begin, w](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad_buffer(self);
    Tensor& ga = tape.grad_buffer(ia);
    for (std::size_t r = 0; r < d.rows; ++r)
      for (std::size_t c = 0; c < w; ++c) ga[r * d.cols + begin + c] += g[r * w + c];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = matrix_dims(parts[0].shape(), "concat_cols").rows;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Dims d = matrix_dims(p.shape(), "concat_cols");
    if (d.rows != rows) {
      throw DimensionError("concat_cols: row counts differ (" + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()) + ")");
    }
    widths.push_back(d.cols);
    total += d.cols;
  }
  Tensor y(Shape{rows, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(x.data() + r * widths[k], widths[k], y.data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape().record(
      std::move(y), parts, [ids, widths, rows, total](Tape& tape, std::size_t self) {
        const Tensor& g = tape.grad_buffer(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (tape.requires_grad(ids[k])) {
            Tensor& gk = tape.grad_buffer(ids[k]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                gk[r * widths[k] + c] += g[r * total + offset + c];
          }
          offset += widths[k];
        }
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = matrix_dims(parts[0].shape(), "concat_rows").cols;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    const Dims d = matrix_dims(p.shape(), "concat_rows");
    if (d.cols != cols) {
      throw DimensionError("concat_rows: column counts differ (" +
                           shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()) + ")");
    }
    rows += d.rows;
  }
  Tensor y(Shape{rows, cols});
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    std::copy(x.values().begin(), x.values().end(), y.data() + offset);
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += x.numel();
  }
  return parts[0].tape().record(std::move(y), parts, [ids, offsets](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.requires_grad(ids[k])) continue;
      Tensor& gk = tape.grad_buffer(ids[k]);
      for (std::size_t i = 0; i < gk.numel(); ++i) gk[i] += g[offsets[k] + i];
    }
  });
}

Var tile_rows(Var row, std::size_t times) {
  const Dims d = matrix_dims(row.shape(), "tile_rows");
  if (d.rows != 1) throw DimensionError("tile_rows: expected one row, got " + shape_string(row.shape()));
  Tensor y(Shape{times, d.cols});
  const Tensor& x = row.value();
  for (std::size_t r = 0; r < times; ++r) std::copy_n(x.data(), d.cols, y.data() + r * d.cols);
  const std::size_t ir = row.id();
  return row.tape().record(std::move(y), {row}, [ir, times, d](Tape& tape, std::size_t self) {
    const Tensor& g = tape.grad_buffer(self);
    Tensor& gr = tape.grad_buffer(ir);
    for (std::size_t r = 0; r < times; ++r)
      for (std::size_t c = 0; c < d.cols; ++c) gr[c] += g[r * d.cols + c];
  });
}

Var detach(Var a) { return a.tape().constant(a.value()); }

// ---- fused ----------------------------------------------------------------

Var lstm_sequence(Var x, Var w_input, Var w_recurrent, Var bias) {
  const Dims dx = matrix_dims(x.shape(), "lstm_sequence");
  const Dims dwx = matrix_dims(w_input.shape(), "lstm_sequence");
  const Dims dwh = matrix_dims(w_recurrent.shape(), "lstm_sequence");
  const std::size_t T = dx.rows;
  const std::size_t H = dwh.rows;
  if (dwx.rows != dx.cols || dwx.cols != 4 * H || dwh.cols != 4 * H ||
      bias.value().numel() != 4 * H) {
    throw DimensionError("lstm_sequence: incompatible shapes x" + shape_string(x.shape()) +
                         " w_input" + shape_string(w_input.shape()) + " w_recurrent" +
                         shape_string(w_recurrent.shape()) + " bias" + shape_string(bias.shape()));
  }
  const std::size_t G = 4 * H;

  // gates holds activated i, f, g, o per step; cells holds c_t.
  Tensor gates(Shape{T, G});
  Tensor cells(Shape{T, H});
  Tensor hidden(Shape{T, H});
  if (T > 0) {
    view(gates, {T, G}).noalias() = view(x.value(), dx) * view(w_input.value(), dwx);
  }
  const Tensor& b = bias.value();
  const ConstMap wh = view(w_recurrent.value(), dwh);
  for (std::size_t t = 0; t < T; ++t) {
    double* z = gates.data() + t * G;
    if (t > 0) {
      Eigen::Map<Eigen::RowVectorXd> zrow(z, static_cast<Eigen::Index>(G));
      const Eigen::Map<const Eigen::RowVectorXd> hprev(hidden.data() + (t - 1) * H,
                                                       static_cast<Eigen::Index>(H));
      zrow.noalias() += hprev * wh;
    }
    for (std::size_t j = 0; j < G; ++j) z[j] += b[j];
    for (std::size_t j = 0; j < H; ++j) {
      const double ig = sigmoid_value(z[j]);
      const double fg = sigmoid_value(z[H + j]);
      const double cg = std::tanh(z[2 * H + j]);
      const double og = sigmoid_value(z[3 * H + j]);
      z[j] = ig;
      z[H + j] = fg;
      z[2 * H + j] = cg;
      z[3 * H + j] = og;
      const double cprev = t > 0 ? cells.at(t - 1, j) : 0.0;
      const double c = fg * cprev + ig * cg;
      cells.at(t, j) = c;
      hidden.at(t, j) = og * std::tanh(c);
    }
  }

  const std::size_t ix = x.id(), iwx = w_input.id(), iwh = w_recurrent.id(), ib = bias.id();
  auto backward = [ix, iwx, iwh, ib, T, H, G, dx, dwx, dwh, gates = std::move(gates),
                   cells = std::move(cells)](Tape& tape, std::size_t self) {
    const Tensor& g_out = tape.grad_buffer(self);
    const Tensor& hidden = tape.value(self);
    const ConstMap wh = view(tape.value(iwh), dwh);
    Tensor dz(Shape{T, G});
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
    Eigen::RowVectorXd dh_rec(static_cast<Eigen::Index>(H));
    for (std::size_t t = T; t-- > 0;) {
      const double* gt = gates.data() + t * G;
      double* dzt = dz.data() + t * G;
      for (std::size_t j = 0; j < H; ++j) {
        const double ig = gt[j], fg = gt[H + j], cg = gt[2 * H + j], og = gt[3 * H + j];
        const double c = cells.at(t, j);
        const double tc = std::tanh(c);
        const double cprev = t > 0 ? cells.at(t - 1, j) : 0.0;
        const double dh = g_out.at(t, j) + dh_next[j];
        const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
        dzt[j] = dc * cg * ig * (1.0 - ig);
        dzt[H + j] = dc * cprev * fg * (1.0 - fg);
        dzt[2 * H + j] = dc * ig * (1.0 - cg * cg);
        dzt[3 * H + j] = dh * tc * og * (1.0 - og);
        dc_next[j] = dc * fg;
      }
      const Eigen::Map<const Eigen::RowVectorXd> dzrow(dzt, static_cast<Eigen::Index>(G));
      dh_rec.noalias() = dzrow * wh.transpose();
      for (std::size_t j = 0; j < H; ++j) dh_next[j] = dh_rec[static_cast<Eigen::Index>(j)];
    }
    if (T == 0) return;
    const ConstMap dzm = view(std::as_const(dz), {T, G});
    if (tape.requires_grad(ix)) {
      view(tape.grad_buffer(ix), dx).noalias() += dzm * view(tape.value(iwx), dwx).transpose();
    }
    if (tape.requires_grad(iwx)) {
      view(tape.grad_buffer(iwx), dwx).noalias() += view(tape.value(ix), dx).transpose() * dzm;
    }
    if (tape.requires_grad(iwh) && T > 1) {
      const ConstMap hprev(hidden.data(), static_cast<Eigen::Index>(T - 1),
                           static_cast<Eigen::Index>(H));
      view(tape.grad_buffer(iwh), dwh).noalias() += hprev.transpose() * dzm.bottomRows(
                                                        static_cast<Eigen::Index>(T - 1));
    }
    if (tape.requires_grad(ib)) {
      Tensor& gb = tape.grad_buffer(ib);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < G; ++j) gb[j] += dz[t * G + j];
    }
  };
  return x.tape().record(std::move(hidden), {x, w_input, w_recurrent, bias}, std::move(backward));
}

Var gaussian_reparam_sample(Var mu, Var rho, Rng& rng) {
  if (mu.shape() != rho.shape()) {
    throw DimensionError("gaussian_reparam_sample: mu " + shape_string(mu.shape()) + " vs rho " +
                         shape_string(rho.shape()));
  }
  Tensor eps(mu.shape());
  for (double& e : eps.values()) e = rng.normal();
  Var noise = mu.tape().constant(std::move(eps));
  return add(mu, mul(softplus(rho), noise));
}

}  // namespace dstt::ad
