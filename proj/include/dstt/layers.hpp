#pragma once

// The layer types of the forecasting network. Every layer maps a sequence
// matrix [T x C] (one row per hourly record) to another sequence matrix,
// except CustomAttention, which collapses the sequence to one row.

#include <cstddef>
#include <string>
#include <vector>

#include "dstt/autodiff.hpp"
#include "dstt/rng.hpp"

namespace dstt::layers {

enum class Mode {
  Train,       ///< dropout on, variational weights sampled
  Eval,        ///< dropout off, variational weights at posterior means
  MonteCarlo,  ///< as Train, used for predictive sampling
};

enum class Activation { Linear, Relu, Tanh };

/// Glorot-uniform initialization for a [fan_in x fan_out] weight.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

ad::Var apply_activation(ad::Var x, Activation activation);

class DenseLayer {
public:
  DenseLayer(const std::string& name, std::size_t in_features, std::size_t units,
             Activation activation, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  void collect(std::vector<ad::Parameter*>& out);

  std::size_t in_features() const noexcept { return in_; }
  std::size_t units() const noexcept { return units_; }
  Activation activation() const noexcept { return activation_; }

  ad::Parameter weight;
  ad::Parameter bias;

private:
  std::size_t in_;
  std::size_t units_;
  Activation activation_;
};

/// Convolution with kernel size 1: a per-timestep affine map.
class Conv1DLayer {
public:
  Conv1DLayer(std::size_t in_channels, std::size_t filters, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  void collect(std::vector<ad::Parameter*>& out);

  std::size_t in_channels() const noexcept { return in_; }
  std::size_t filters() const noexcept { return filters_; }

  ad::Parameter kernel;  // [in_channels x filters]
  ad::Parameter bias;    // [filters]

private:
  std::size_t in_;
  std::size_t filters_;
};

/// Single LSTM layer returning the hidden state of every step.
class LSTMLayer {
public:
  LSTMLayer(std::size_t in_features, std::size_t hidden_size, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  void collect(std::vector<ad::Parameter*>& out);

  std::size_t hidden_size() const noexcept { return hidden_; }
  std::size_t in_features() const noexcept { return in_; }

  ad::Parameter w_input;      // [C x 4H], gate blocks i, f, g, o
  ad::Parameter w_recurrent;  // [H x 4H]
  ad::Parameter bias;         // [4H], forget block starts at 1

private:
  std::size_t in_;
  std::size_t hidden_;
};

/// Unmasked scaled dot-product self-attention with `heads` heads of width
/// `head_size`, projected back to the input width.
class MultiHeadAttentionLayer {
public:
  MultiHeadAttentionLayer(std::size_t width, std::size_t heads, std::size_t head_size, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  /// Per-head attention matrices [T x T] (row = query position).
  std::vector<Tensor> attention_weights(const Tensor& x) const;
  void collect(std::vector<ad::Parameter*>& out);

  std::size_t width() const noexcept { return width_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t head_size() const noexcept { return head_size_; }

  ad::Parameter w_query, w_key, w_value;  // [C x heads*head_size]
  ad::Parameter b_query, b_key, b_value;  // [heads*head_size]
  ad::Parameter w_output;                 // [heads*head_size x C]
  ad::Parameter b_output;                 // [C]

private:
  ad::Var forward_impl(ad::Tape& tape, ad::Var x, std::vector<ad::Var>* weights) const;

  std::size_t width_;
  std::size_t heads_;
  std::size_t head_size_;
};

/// Additive attention pooling: e_t = v . tanh(x_t W + b), alpha = softmax(e),
/// output = sum_t alpha_t x_t as a [1 x C] row.
class CustomAttention {
public:
  CustomAttention(std::size_t width, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;
  /// Attention weights alpha as a length-T vector.
  std::vector<double> weights(const Tensor& x) const;
  void collect(std::vector<ad::Parameter*>& out);

  std::size_t width() const noexcept { return width_; }

  ad::Parameter w_score;  // [C x C]
  ad::Parameter b_score;  // [C]
  ad::Parameter context;  // [C x 1]

private:
  ad::Var scores(ad::Tape& tape, ad::Var x) const;

  std::size_t width_;
};

/// Dense layer with mean-field Gaussian weights and a standard-normal prior.
class DenseVariationalLayer {
public:
  struct Output {
    ad::Var value;  // [T x units]
    ad::Var kl;     // scalar KL(q || N(0, 1)) summed over weights and biases
  };

  DenseVariationalLayer(std::size_t in_features, std::size_t units, Rng& rng,
                        double initial_std = 1e-3);

  /// Draws one weight sample from `rng` when `sample` is set, otherwise
  /// uses the posterior means.
  Output forward(ad::Tape& tape, ad::Var x, bool sample, Rng* rng) const;
  ad::Var kl(ad::Tape& tape) const;
  void collect(std::vector<ad::Parameter*>& out);

  std::size_t in_features() const noexcept { return in_; }
  std::size_t units() const noexcept { return units_; }

  ad::Parameter mu_weight;   // [in x units]
  ad::Parameter rho_weight;  // sigma = softplus(rho)
  ad::Parameter mu_bias;     // [units]
  ad::Parameter rho_bias;

private:
  std::size_t in_;
  std::size_t units_;
};

/// Inverted dropout.
class DropoutLayer {
public:
  explicit DropoutLayer(double rate = 0.2);

  /// Identity unless `active`; the flag stays on for Monte-Carlo prediction.
  ad::Var forward(ad::Tape& tape, ad::Var x, bool active, Rng* rng) const;

  double rate() const noexcept { return rate_; }

private:
  double rate_;
};

}  // namespace dstt::layers
