#include "dstt/layers.hpp"

#include <cmath>

#include "dstt/errors.hpp"

namespace dstt::layers {

using ad::Tape;
using ad::Var;

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(Shape{fan_in, fan_out});
  for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

Var apply_activation(Var x, Activation activation) {
  switch (activation) {
    case Activation::Linear: return x;
    case Activation::Relu: return ad::relu(x);
    case Activation::Tanh: return ad::tanh(x);
  }
  return x;
}

namespace {

void check_width(const Var& x, std::size_t expected, const char* layer) {
  if (x.value().rank() != 2 || x.value().cols() != expected) {
    throw DimensionError(std::string(layer) + ": expected input [T x " + std::to_string(expected) +
                         "], got " + shape_string(x.shape()));
  }
}

}  // namespace

// ---- Dense ----------------------------------------------------------------

DenseLayer::DenseLayer(const std::string& name, std::size_t in_features, std::size_t units,
                       Activation activation, Rng& rng)
    : weight(name + "/kernel", glorot_uniform(in_features, units, rng)),
      bias(name + "/bias", Tensor(Shape{units})),
      in_(in_features),
      units_(units),
      activation_(activation) {}

Var DenseLayer::forward(Tape& tape, Var x) const {
  check_width(x, in_, "dense");
  return apply_activation(ad::add_bias(ad::matmul(x, tape.param(weight)), tape.param(bias)),
                          activation_);
}

void DenseLayer::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---- Conv1D ---------------------------------------------------------------

Conv1DLayer::Conv1DLayer(std::size_t in_channels, std::size_t filters, Rng& rng)
    : kernel("conv1d/kernel", glorot_uniform(in_channels, filters, rng)),
      bias("conv1d/bias", Tensor(Shape{filters})),
      in_(in_channels),
      filters_(filters) {}

Var Conv1DLayer::forward(Tape& tape, Var x) const {
  check_width(x, in_, "conv1d");
  return ad::add_bias(ad::matmul(x, tape.param(kernel)), tape.param(bias));
}

void Conv1DLayer::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&kernel);
  out.push_back(&bias);
}

// ---- LSTM -----------------------------------------------------------------

LSTMLayer::LSTMLayer(std::size_t in_features, std::size_t hidden_size, Rng& rng)
    : w_input("lstm/w_input", glorot_uniform(in_features, 4 * hidden_size, rng)),
      w_recurrent("lstm/w_recurrent", glorot_uniform(hidden_size, 4 * hidden_size, rng)),
      bias("lstm/bias", Tensor(Shape{4 * hidden_size})),
      in_(in_features),
      hidden_(hidden_size) {
  for (std::size_t j = hidden_; j < 2 * hidden_; ++j) bias.value[j] = 1.0;
}

Var LSTMLayer::forward(Tape& tape, Var x) const {
  check_width(x, in_, "lstm");
  return ad::lstm_sequence(x, tape.param(w_input), tape.param(w_recurrent), tape.param(bias));
}

void LSTMLayer::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&w_input);
  out.push_back(&w_recurrent);
  out.push_back(&bias);
}

// ---- Multi-head attention -------------------------------------------------

MultiHeadAttentionLayer::MultiHeadAttentionLayer(std::size_t width, std::size_t heads,
                                                 std::size_t head_size, Rng& rng)
    : w_query("mha/w_query", glorot_uniform(width, heads * head_size, rng)),
      w_key("mha/w_key", glorot_uniform(width, heads * head_size, rng)),
      w_value("mha/w_value", glorot_uniform(width, heads * head_size, rng)),
      b_query("mha/b_query", Tensor(Shape{heads * head_size})),
      b_key("mha/b_key", Tensor(Shape{heads * head_size})),
      b_value("mha/b_value", Tensor(Shape{heads * head_size})),
      w_output("mha/w_output", glorot_uniform(heads * head_size, width, rng)),
      b_output("mha/b_output", Tensor(Shape{width})),
      width_(width),
      heads_(heads),
      head_size_(head_size) {}

Var MultiHeadAttentionLayer::forward_impl(Tape& tape, Var x, std::vector<Var>* weights) const {
  check_width(x, width_, "multi-head attention");
  const Var q = ad::add_bias(ad::matmul(x, tape.param(w_query)), tape.param(b_query));
  const Var k = ad::add_bias(ad::matmul(x, tape.param(w_key)), tape.param(b_key));
  const Var v = ad::add_bias(ad::matmul(x, tape.param(w_value)), tape.param(b_value));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(head_size_));
  std::vector<Var> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t lo = h * head_size_;
    const std::size_t hi = lo + head_size_;
    const Var qh = ad::slice_cols(q, lo, hi);
    const Var kh = ad::slice_cols(k, lo, hi);
    const Var vh = ad::slice_cols(v, lo, hi);
    const Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_d);
    const Var attn = ad::softmax(scores, 1);
    if (weights) weights->push_back(attn);
    outputs.push_back(ad::matmul(attn, vh));
  }
  const Var merged = heads_ == 1 ? outputs.front() : ad::concat_cols(outputs);
  return ad::add_bias(ad::matmul(merged, tape.param(w_output)), tape.param(b_output));
}

Var MultiHeadAttentionLayer::forward(Tape& tape, Var x) const {
  return forward_impl(tape, x, nullptr);
}

std::vector<Tensor> MultiHeadAttentionLayer::attention_weights(const Tensor& x) const {
  Tape tape(false);
  std::vector<Var> weights;
  forward_impl(tape, tape.constant(x), &weights);
  std::vector<Tensor> out;
  for (const Var& w : weights) out.push_back(w.value());
  return out;
}

void MultiHeadAttentionLayer::collect(std::vector<ad::Parameter*>& out) {
  for (ad::Parameter* p :
       {&w_query, &w_key, &w_value, &b_query, &b_key, &b_value, &w_output, &b_output}) {
    out.push_back(p);
  }
}

// ---- Custom attention -----------------------------------------------------

CustomAttention::CustomAttention(std::size_t width, Rng& rng)
    : w_score("attention/w_score", glorot_uniform(width, width, rng)),
      b_score("attention/b_score", Tensor(Shape{width})),
      context("attention/context", glorot_uniform(width, 1, rng)),
      width_(width) {}

Var CustomAttention::scores(Tape& tape, Var x) const {
  check_width(x, width_, "custom attention");
  if (x.value().rows() == 0) throw EmptySequenceError("custom attention over an empty sequence");
  const Var hidden = ad::tanh(ad::add_bias(ad::matmul(x, tape.param(w_score)), tape.param(b_score)));
  return ad::softmax(ad::matmul(hidden, tape.param(context)), 0);
}

Var CustomAttention::forward(Tape& tape, Var x) const {
  const Var alpha = scores(tape, x);  // [T x 1]
  return ad::matmul(ad::transpose(alpha), x);
}

std::vector<double> CustomAttention::weights(const Tensor& x) const {
  Tape tape(false);
  const Var alpha = scores(tape, tape.constant(x));
  return alpha.value().storage();
}

void CustomAttention::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&w_score);
  out.push_back(&b_score);
  out.push_back(&context);
}

// ---- Dense variational ----------------------------------------------------

DenseVariationalLayer::DenseVariationalLayer(std::size_t in_features, std::size_t units, Rng& rng,
                                             double initial_std)
    : mu_weight("dvl/mu_weight", glorot_uniform(in_features, units, rng)),
      rho_weight("dvl/rho_weight", Tensor(Shape{in_features, units}, ad::inverse_softplus(initial_std))),
      mu_bias("dvl/mu_bias", Tensor(Shape{units})),
      rho_bias("dvl/rho_bias", Tensor(Shape{units}, ad::inverse_softplus(initial_std))),
      in_(in_features),
      units_(units) {}

namespace {

// sum over elements of log(1/sigma) + (sigma^2 + mu^2 - 1) / 2
Var gaussian_kl(Var mu, Var rho) {
  const Var sigma = ad::softplus(rho);
  const Var per_weight = ad::sub(
      ad::scale(ad::add_scalar(ad::add(ad::square(sigma), ad::square(mu)), -1.0), 0.5),
      ad::log(sigma));
  return ad::sum(per_weight);
}

}  // namespace

Var DenseVariationalLayer::kl(Tape& tape) const {
  return ad::add(gaussian_kl(tape.param(mu_weight), tape.param(rho_weight)),
                 gaussian_kl(tape.param(mu_bias), tape.param(rho_bias)));
}

DenseVariationalLayer::Output DenseVariationalLayer::forward(Tape& tape, Var x, bool sample,
                                                             Rng* rng) const {
  check_width(x, in_, "dense variational");
  Var w = tape.param(mu_weight);
  Var b = tape.param(mu_bias);
  if (sample) {
    if (rng == nullptr) throw ContractError("dense variational: sampling requires an rng");
    w = ad::gaussian_reparam_sample(w, tape.param(rho_weight), *rng);
    b = ad::gaussian_reparam_sample(b, tape.param(rho_bias), *rng);
  }
  return {ad::add_bias(ad::matmul(x, w), b), kl(tape)};
}

void DenseVariationalLayer::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&mu_weight);
  out.push_back(&rho_weight);
  out.push_back(&mu_bias);
  out.push_back(&rho_bias);
}

// ---- Dropout --------------------------------------------------------------

DropoutLayer::DropoutLayer(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout_rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

Var DropoutLayer::forward(Tape& tape, Var x, bool active, Rng* rng) const {
  if (!active || rate_ == 0.0) return x;
  if (rng == nullptr) throw ContractError("dropout: active dropout requires an rng");
  const double keep_scale = 1.0 / (1.0 - rate_);
  Tensor mask(x.shape());
  for (double& m : mask.values()) m = rng->bernoulli(rate_) ? 0.0 : keep_scale;
  return ad::mul(x, tape.constant(std::move(mask)));
}

}  // namespace dstt::layers
