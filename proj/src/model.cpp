#include "dstt/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "dstt/errors.hpp"
#include "dstt/optim.hpp"

namespace dstt::model {

using ad::Tape;
using ad::Var;
using layers::Mode;

// ---- variants -------------------------------------------------------------

std::string variant_code(AblationVariant v) {
  switch (v) {
    case AblationVariant::Full: return "FULL";
    case AblationVariant::C: return "C";
    case AblationVariant::L: return "L";
    case AblationVariant::M: return "M";
    case AblationVariant::CL: return "CL";
    case AblationVariant::CM: return "CM";
    case AblationVariant::LM: return "LM";
  }
  return "?";
}

std::string variant_name(AblationVariant v) {
  return v == AblationVariant::Full ? "DSTT" : "DSTT-" + variant_code(v);
}

AblationVariant parse_variant(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "DSTT") upper = "FULL";
  if (upper.starts_with("DSTT-")) upper = upper.substr(5);
  for (AblationVariant v : kAllVariants)
    if (variant_code(v) == upper) return v;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected FULL, C, L, M, CL, CM or LM)");
}

bool has_conv(AblationVariant v) {
  return v != AblationVariant::C && v != AblationVariant::CL && v != AblationVariant::CM;
}

bool has_lstm(AblationVariant v) {
  return v != AblationVariant::L && v != AblationVariant::CL && v != AblationVariant::LM;
}

bool has_attention(AblationVariant v) {
  return v != AblationVariant::M && v != AblationVariant::CM && v != AblationVariant::LM;
}

void DsttConfig::validate() const {
  auto require = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw ConfigError(std::string("invalid config field '") + field + "': " + why);
  };
  require(sequence_length >= 1, "sequence_length", "must be >= 1");
  require(input_features >= 1, "input_features", "must be >= 1");
  require(conv_filters >= 1, "conv_filters", "must be >= 1");
  require(lstm_units >= 1, "lstm_units", "must be >= 1");
  require(attention_heads >= 1, "attention_heads", "must be >= 1");
  require(head_size >= 1, "head_size", "must be >= 1");
  require(model_width >= 1, "model_width", "must be >= 1");
  require(dvl_units >= 1, "dvl_units", "must be >= 1");
  require(dense_head_units >= 1, "dense_head_units", "must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate", "must lie in [0, 1)");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate", "must be >= 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(std::isfinite(kl_weight) && kl_weight >= 0.0, "kl_weight", "must be >= 0");
}

// ---- model ----------------------------------------------------------------

namespace {

std::size_t encoder_width(const DsttConfig& c) {
  std::size_t w = c.input_features;
  if (has_conv(c.variant)) w = c.conv_filters;
  if (has_lstm(c.variant)) w = c.lstm_units;
  if (has_attention(c.variant)) w = c.model_width;
  return w;
}

const DsttConfig& validated(const DsttConfig& c) {
  c.validate();
  return c;
}

}  // namespace

// Members are initialized in declaration order, which fixes the order in
// which parameters draw from `rng`.
DsttModel::DsttModel(const DsttConfig& config, Rng& rng)
    : config_(validated(config)),
      conv_(has_conv(config.variant)
                ? std::optional<layers::Conv1DLayer>(std::in_place, config.input_features,
                                                     config.conv_filters, rng)
                : std::nullopt),
      lstm_(has_lstm(config.variant)
                ? std::optional<layers::LSTMLayer>(
                      std::in_place, has_conv(config.variant) ? config.conv_filters : config.input_features,
                      config.lstm_units, rng)
                : std::nullopt),
      projection_(has_attention(config.variant)
                      ? std::optional<layers::DenseLayer>(
                            std::in_place, "mha/projection",
                            has_lstm(config.variant)
                                ? config.lstm_units
                                : (has_conv(config.variant) ? config.conv_filters : config.input_features),
                            config.model_width, layers::Activation::Linear, rng)
                      : std::nullopt),
      mha_(has_attention(config.variant)
               ? std::optional<layers::MultiHeadAttentionLayer>(
                     std::in_place, config.model_width, config.attention_heads, config.head_size, rng)
               : std::nullopt),
      pooling_(encoder_width(config), rng),
      dvl_(2 * encoder_width(config), config.dvl_units, rng),
      hidden_("dense", config.dvl_units, config.dense_head_units, layers::Activation::Relu, rng),
      dropout_(config.dropout_rate),
      output_("dense_out", config.dense_head_units, config.output_width(), layers::Activation::Linear,
              rng) {}

std::vector<std::string> DsttModel::layer_names() const {
  std::vector<std::string> names;
  if (conv_) names.emplace_back("Conv1D");
  if (lstm_) names.emplace_back("LSTM");
  if (mha_) names.emplace_back("MHA");
  names.emplace_back("CustomAttention");
  names.emplace_back("DVL");
  names.emplace_back("Dense");
  names.emplace_back("Dropout");
  names.emplace_back("Dense-out");
  return names;
}

std::vector<ad::Parameter*> DsttModel::parameters() {
  std::vector<ad::Parameter*> out;
  if (conv_) conv_->collect(out);
  if (lstm_) lstm_->collect(out);
  if (projection_) projection_->collect(out);
  if (mha_) mha_->collect(out);
  pooling_.collect(out);
  dvl_.collect(out);
  hidden_.collect(out);
  output_.collect(out);
  return out;
}

std::vector<const ad::Parameter*> DsttModel::parameters() const {
  auto mutable_params = const_cast<DsttModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

ad::Parameter& DsttModel::parameter(const std::string& id) {
  for (ad::Parameter* p : parameters())
    if (p->id == id) return *p;
  throw ContractError("model has no parameter '" + id + "'");
}

void DsttModel::zero_grad() {
  for (ad::Parameter* p : parameters()) p->grad = Tensor::zeros_like(p->value);
}

ForwardResult DsttModel::forward(Tape& tape, const Tensor& seq, Mode mode, Rng* rng) const {
  if (seq.rank() != 2 || seq.cols() != config_.input_features) {
    throw DimensionError("model input must be [T x " + std::to_string(config_.input_features) +
                         "], got " + shape_string(seq.shape()));
  }
  const std::size_t T = seq.rows();
  if (T == 0) throw EmptySequenceError("model_forward on an empty sequence");
  const bool stochastic = mode != Mode::Eval;

  Var x = tape.constant(seq);
  if (conv_) x = conv_->forward(tape, x);
  if (lstm_) x = lstm_->forward(tape, x);
  if (mha_) {
    const Var z = projection_->forward(tape, x);
    x = ad::add(z, mha_->forward(tape, z));
  }
  const Var context = pooling_.forward(tape, x);
  const Var joined = ad::concat_cols({x, ad::tile_rows(context, T)});

  const auto variational = dvl_.forward(tape, joined, stochastic && config_.uq_enabled, rng);
  Var h = hidden_.forward(tape, variational.value);
  h = dropout_.forward(tape, h, stochastic, rng);
  const Var raw = output_.forward(tape, h);

  ForwardResult result;
  result.mean = ad::add_scalar(ad::scale(ad::reshape(ad::slice_cols(raw, 0, 1), Shape{T}), target_scale),
                               target_mean);
  if (config_.heteroscedastic) {
    result.logvar = ad::add_scalar(ad::reshape(ad::slice_cols(raw, 1, 2), Shape{T}),
                                   2.0 * std::log(target_scale));
  }
  result.kl = config_.uq_enabled ? variational.kl : tape.constant(Tensor::scalar(0.0));
  return result;
}

Prediction DsttModel::predict(const Tensor& seq, Mode mode, Rng* rng) const {
  Tape tape(false);
  const ForwardResult r = forward(tape, seq, mode, rng);
  Prediction p;
  p.mean = r.mean.value().storage();
  if (r.logvar) p.logvar = r.logvar->value().storage();
  p.kl = r.kl.value().item();
  return p;
}

DsttModel build_model(const DsttConfig& config, Rng& rng) { return DsttModel(config, rng); }

// ---- loss -----------------------------------------------------------------

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

LossVars loss_on_tape(Var mean, std::optional<Var> logvar, std::span<const double> labels, Var kl,
                      double kl_weight) {
  Tape& tape = mean.tape();
  const std::size_t n = mean.value().numel();
  if (labels.size() != n) {
    throw ContractError("loss: " + std::to_string(n) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  const Var y = tape.constant(Tensor(Shape{n}, std::vector<double>(labels.begin(), labels.end())));
  const Var mse = ad::mean(ad::square(ad::sub(mean, y)));
  Var total = mse;
  LossVars out;
  if (logvar) {
    const Var resid2 = ad::square(ad::sub(y, ad::detach(mean)));
    const Var nll = ad::add_scalar(
        ad::mean(ad::scale(ad::add(*logvar, ad::mul(resid2, ad::exp(ad::scale(*logvar, -1.0)))), 0.5)),
        kHalfLog2Pi);
    total = ad::add(total, nll);
    out.values.nll = nll.value().item();
  }
  total = ad::add(total, ad::scale(kl, kl_weight));
  out.total = total;
  out.values.mse = mse.value().item();
  out.values.kl = kl.value().item();
  out.values.kl_weight = kl_weight;
  out.values.total = total.value().item();
  return out;
}

LossBreakdown compute_loss(std::span<const double> mean, std::span<const double> logvar,
                           std::span<const double> labels, double kl, double kl_weight) {
  if (mean.size() != labels.size()) {
    throw ContractError("loss: " + std::to_string(mean.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (!logvar.empty() && logvar.size() != mean.size()) {
    throw ContractError("loss: logvar length differs from predictions");
  }
  if (mean.empty()) throw ContractError("loss over zero predictions");
  LossBreakdown b;
  const auto m = static_cast<double>(mean.size());
  double se = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) se += (mean[i] - labels[i]) * (mean[i] - labels[i]);
  b.mse = se / m;
  if (!logvar.empty()) {
    double nll = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double r = labels[i] - mean[i];
      nll += 0.5 * (logvar[i] + r * r * std::exp(-logvar[i]));
    }
    b.nll = nll / m + kHalfLog2Pi;
  }
  b.kl = kl;
  b.kl_weight = kl_weight;
  b.total = b.mse + b.nll + kl_weight * kl;
  return b;
}

// ---- training -------------------------------------------------------------

std::vector<EpochRecord> train(DsttModel& model, std::span<const data::Sequence> sequences, Rng& rng,
                               const TrainOptions& options) {
  DsttConfig& config = model.mutable_config();
  config.validate();
  std::size_t n_records = 0;
  for (const auto& s : sequences) n_records += s.length();
  if (n_records == 0) throw ContractError("train: no labeled training records");
  config.kl_weight = 1.0 / static_cast<double>(n_records);

  if (!model.trained) {
    double sum = 0.0;
    for (const auto& s : sequences)
      for (double y : s.labels) sum += y;
    const double mean = sum / static_cast<double>(n_records);
    double ss = 0.0;
    for (const auto& s : sequences)
      for (double y : s.labels) ss += (y - mean) * (y - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n_records));
    model.target_mean = mean;
    model.target_scale = sd > 1e-9 ? sd : 1.0;
  }

  ad::AdamState adam(ad::AdamOptions{.learning_rate = config.learning_rate});
  std::vector<ad::Parameter*> params = model.parameters();
  std::vector<std::size_t> order(sequences.size());
  std::vector<EpochRecord> records;
  const long epoch_offset = static_cast<long>(model.history.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      std::vector<Var> means, logvars;
      std::vector<double> labels;
      Var kl;
      LossVars loss;
      try {
        for (std::size_t k = start; k < end; ++k) {
          const data::Sequence& s = sequences[order[k]];
          const ForwardResult r = model.forward(tape, s.features, Mode::Train, &rng);
          means.push_back(ad::reshape(r.mean, Shape{s.length(), 1}));
          if (r.logvar) logvars.push_back(ad::reshape(*r.logvar, Shape{s.length(), 1}));
          labels.insert(labels.end(), s.labels.begin(), s.labels.end());
          kl = r.kl;
        }
        const Var mean = ad::reshape(means.size() == 1 ? means[0] : ad::concat_rows(means),
                                     Shape{labels.size()});
        std::optional<Var> logvar;
        if (!logvars.empty()) {
          logvar = ad::reshape(logvars.size() == 1 ? logvars[0] : ad::concat_rows(logvars),
                               Shape{labels.size()});
        }
        loss = loss_on_tape(mean, logvar, labels, kl, config.kl_weight);
      } catch (const DomainError& e) {
        throw DivergenceError(std::string("training diverged: ") + e.what(),
                              epoch_offset + static_cast<long>(epoch) - 1);
      }
      if (!std::isfinite(loss.values.total)) {
        throw DivergenceError("training diverged: non-finite loss in epoch " + std::to_string(epoch),
                              epoch_offset + static_cast<long>(epoch) - 1);
      }
      tape.backward(loss.total);
      for (ad::Parameter* p : params) p->grad = tape.grad_of(*p);
      try {
        adam.step(params);
      } catch (const DivergenceError& e) {
        throw DivergenceError(e.what(), epoch_offset + static_cast<long>(epoch) - 1);
      }
      sum.mse += loss.values.mse;
      sum.nll += loss.values.nll;
      sum.kl += loss.values.kl;
      sum.total += loss.values.total;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = model.history.size() + 1;
    const auto b = static_cast<double>(batches);
    rec.loss.mse = sum.mse / b;
    rec.loss.nll = sum.nll / b;
    rec.loss.kl = sum.kl / b;
    rec.loss.kl_weight = config.kl_weight;
    rec.loss.total = sum.total / b;
    model.history.push_back(rec);
    records.push_back(rec);
    model.trained = true;
    if (options.on_epoch && !options.on_epoch(rec)) break;
  }
  model.trained = true;
  return records;
}

std::vector<double> predict_point(const DsttModel& model, std::span<const data::Sequence> sequences) {
  if (!model.trained) throw ContractError("predict_point: model has not been trained");
  std::vector<double> out;
  for (const auto& s : sequences) {
    const Prediction p = model.predict(s.features, Mode::Eval, nullptr);
    out.insert(out.end(), p.mean.begin(), p.mean.end());
  }
  return out;
}

}  // namespace dstt::model
