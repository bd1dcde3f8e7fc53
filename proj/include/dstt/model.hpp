#pragma once

// The forecasting network: Conv1D -> LSTM -> multi-head attention -> custom
// attention -> dense variational -> dense/dropout head, with ablation
// variants that drop Conv1D, LSTM and/or attention blocks.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dstt/autodiff.hpp"
#include "dstt/data.hpp"
#include "dstt/layers.hpp"
#include "dstt/rng.hpp"

namespace dstt::model {

/// Letters name the removed blocks: C = Conv1D, L = LSTM, M = multi-head attention.
enum class AblationVariant { Full, C, L, M, CL, CM, LM };

inline constexpr std::array<AblationVariant, 7> kAllVariants = {
    AblationVariant::Full, AblationVariant::C,  AblationVariant::L, AblationVariant::M,
    AblationVariant::CL,   AblationVariant::CM, AblationVariant::LM};

/// "FULL", "C", ... "LM"
std::string variant_code(AblationVariant v);
/// "DSTT", "DSTT-C", ... "DSTT-LM"
std::string variant_name(AblationVariant v);
/// Accepts either form, case-insensitive.
AblationVariant parse_variant(std::string_view text);
bool has_conv(AblationVariant v);
bool has_lstm(AblationVariant v);
bool has_attention(AblationVariant v);

struct DsttConfig {
  std::size_t sequence_length = 1024;
  std::size_t input_features = data::kFeatureCount;
  std::size_t conv_filters = 32;
  std::size_t lstm_units = 250;
  std::size_t attention_heads = 3;
  std::size_t head_size = 3;
  /// Width of the linear projection in front of multi-head attention.
  std::size_t model_width = 32;
  std::size_t dvl_units = 10;
  std::size_t dense_head_units = 32;
  double dropout_rate = 0.2;
  double learning_rate = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 4;  // sequences per optimizer step
  /// 1/N; train() sets it from the training-record count.
  double kl_weight = 0.0;
  bool heteroscedastic = true;
  bool uq_enabled = true;
  std::uint64_t seed = 0;
  AblationVariant variant = AblationVariant::Full;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t output_width() const { return heteroscedastic ? 2 : 1; }
};

struct LossBreakdown {
  double mse = 0.0;
  double nll = 0.0;  // Gaussian NLL of the variance head; 0 without one
  double kl = 0.0;
  double kl_weight = 0.0;
  double total = 0.0;  // mse + nll + kl_weight * kl
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;
};

/// One forward pass on a tape.
struct ForwardResult {
  ad::Var mean;                   // [T], nT
  std::optional<ad::Var> logvar;  // [T], log nT^2
  ad::Var kl;                     // scalar; zero when uq is disabled
};

/// One forward pass as plain values.
struct Prediction {
  std::vector<double> mean;
  std::vector<double> logvar;  // empty without a variance head
  double kl = 0.0;
};

class DsttModel {
public:
  DsttModel(const DsttConfig& config, Rng& rng);


  const DsttConfig& config() const noexcept { return config_; }
  DsttConfig& mutable_config() noexcept { return config_; }

  /// Layer names in forward order.
  std::vector<std::string> layer_names() const;

  /// Stable-ordered registry; ids are unique.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  ad::Parameter& parameter(const std::string& id);
  void zero_grad();

  /// seq: [T x 7] standardized features. Throws EmptySequenceError for T = 0.
  ForwardResult forward(ad::Tape& tape, const Tensor& seq, layers::Mode mode, Rng* rng) const;
  Prediction predict(const Tensor& seq, layers::Mode mode, Rng* rng) const;

  /// Affine map from the raw network output to nT, fixed before training.
  double target_mean = 0.0;
  double target_scale = 1.0;
  /// Feature statistics of the training data the model was fit on.
  std::optional<data::NormalizationStats> feature_stats;
  int horizon = 1;
  bool trained = false;
  std::vector<EpochRecord> history;

  const layers::DenseVariationalLayer& dvl() const { return dvl_; }
  const std::optional<layers::MultiHeadAttentionLayer>& attention() const { return mha_; }
  const layers::CustomAttention& custom_attention() const { return pooling_; }

private:
  DsttConfig config_;
  std::optional<layers::Conv1DLayer> conv_;
  std::optional<layers::LSTMLayer> lstm_;
  std::optional<layers::DenseLayer> projection_;
  std::optional<layers::MultiHeadAttentionLayer> mha_;
  layers::CustomAttention pooling_;
  layers::DenseVariationalLayer dvl_;
  layers::DenseLayer hidden_;
  layers::DropoutLayer dropout_;
  layers::DenseLayer output_;
};

/// Validates `config` and initializes parameters from `rng`.
DsttModel build_model(const DsttConfig& config, Rng& rng);

/// Loss terms on a tape. `mean`/`logvar` are [T] in nT / log nT^2.
struct LossVars {
  ad::Var total;
  LossBreakdown values;
};
LossVars loss_on_tape(ad::Var mean, std::optional<ad::Var> logvar, std::span<const double> labels,
                      ad::Var kl, double kl_weight);

/// Value form of the loss: mse = mean squared error of `mean`; with `logvar`
/// the Gaussian NLL (mean held fixed) is added; total adds kl_weight * kl.
LossBreakdown compute_loss(std::span<const double> mean, std::span<const double> logvar,
                           std::span<const double> labels, double kl, double kl_weight);

struct TrainOptions {
  /// Called after every epoch; returning false stops training early.
  std::function<bool(const EpochRecord&)> on_epoch;
};

/// Adam over shuffled batches of `config.batch_size` sequences for
/// `config.epochs` epochs. Sets kl_weight = 1/N (N = labeled records), the
/// target scaling (first training only) and the history. Throws
/// DivergenceError on a non-finite loss.
std::vector<EpochRecord> train(DsttModel& model, std::span<const data::Sequence> sequences,
                               Rng& rng, const TrainOptions& options = {});

/// Eval-mode forward over every sequence, concatenated.
std::vector<double> predict_point(const DsttModel& model, std::span<const data::Sequence> sequences);

}  // namespace dstt::model
