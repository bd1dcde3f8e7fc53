#include "dstt/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dstt/errors.hpp"

namespace dstt::model {

using nlohmann::json;

namespace {

json config_json(const DsttConfig& c) {
  return json{{"sequence_length", c.sequence_length},
              {"input_features", c.input_features},
              {"conv_filters", c.conv_filters},
              {"lstm_units", c.lstm_units},
              {"attention_heads", c.attention_heads},
              {"head_size", c.head_size},
              {"model_width", c.model_width},
              {"dvl_units", c.dvl_units},
              {"dense_head_units", c.dense_head_units},
              {"dropout_rate", c.dropout_rate},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"kl_weight", c.kl_weight},
              {"heteroscedastic", c.heteroscedastic},
              {"uq_enabled", c.uq_enabled},
              {"seed", c.seed},
              {"variant", variant_code(c.variant)}};
}

DsttConfig config_from_json(const json& j) {
  DsttConfig c;
  c.sequence_length = j.at("sequence_length").get<std::size_t>();
  c.input_features = j.at("input_features").get<std::size_t>();
  c.conv_filters = j.at("conv_filters").get<std::size_t>();
  c.lstm_units = j.at("lstm_units").get<std::size_t>();
  c.attention_heads = j.at("attention_heads").get<std::size_t>();
  c.head_size = j.at("head_size").get<std::size_t>();
  c.model_width = j.at("model_width").get<std::size_t>();
  c.dvl_units = j.at("dvl_units").get<std::size_t>();
  c.dense_head_units = j.at("dense_head_units").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.kl_weight = j.at("kl_weight").get<double>();
  c.heteroscedastic = j.at("heteroscedastic").get<bool>();
  c.uq_enabled = j.at("uq_enabled").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

json loss_json(const LossBreakdown& b) {
  return json{{"mse", b.mse}, {"nll", b.nll}, {"kl", b.kl}, {"kl_weight", b.kl_weight}, {"total", b.total}};
}

}  // namespace

std::string checkpoint_to_string(const DsttModel& model) {
  json doc;
  doc["format"] = "dstt-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["config"] = config_json(model.config());
  doc["horizon"] = model.horizon;
  doc["trained"] = model.trained;
  doc["target"] = {{"mean", model.target_mean}, {"scale", model.target_scale}};
  if (model.feature_stats) {
    doc["feature_stats"] = {{"mean", model.feature_stats->mean}, {"std", model.feature_stats->std}};
  }
  json params = json::array();
  for (const ad::Parameter* p : model.parameters()) {
    if (!p->value.all_finite()) throw ContractError("cannot checkpoint non-finite parameter " + p->id);
    params.push_back({{"id", p->id}, {"shape", p->value.shape()}, {"values", p->value.storage()}});
  }
  doc["parameters"] = std::move(params);
  json history = json::array();
  for (const EpochRecord& r : model.history) history.push_back({{"epoch", r.epoch}, {"loss", loss_json(r.loss)}});
  doc["history"] = std::move(history);
  return doc.dump(1);
}

DsttModel checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "dstt-checkpoint") throw ParseError("not a model checkpoint");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    const DsttConfig config = config_from_json(doc.at("config"));
    Rng rng(config.seed);
    DsttModel model(config, rng);
    model.horizon = doc.at("horizon").get<int>();
    model.trained = doc.at("trained").get<bool>();
    model.target_mean = doc.at("target").at("mean").get<double>();
    model.target_scale = doc.at("target").at("scale").get<double>();
    if (doc.contains("feature_stats")) {
      data::NormalizationStats s;
      s.mean = doc["feature_stats"].at("mean").get<data::FeatureVector>();
      s.std = doc["feature_stats"].at("std").get<data::FeatureVector>();
      model.feature_stats = s;
    }
    std::size_t restored = 0;
    for (const json& p : doc.at("parameters")) {
      ad::Parameter& target = model.parameter(p.at("id").get<std::string>());
      const Shape shape = p.at("shape").get<Shape>();
      if (shape != target.value.shape()) {
        throw DimensionError("checkpoint parameter " + target.id + " has shape " + shape_string(shape) +
                             ", model expects " + shape_string(target.value.shape()));
      }
      target.value = Tensor(shape, p.at("values").get<std::vector<double>>());
      ++restored;
    }
    if (restored != model.parameters().size()) {
      throw ParseError("checkpoint lists " + std::to_string(restored) + " parameters, model has " +
                       std::to_string(model.parameters().size()));
    }
    for (const json& h : doc.at("history")) {
      EpochRecord r;
      r.epoch = h.at("epoch").get<std::size_t>();
      const json& l = h.at("loss");
      r.loss = LossBreakdown{l.at("mse").get<double>(), l.at("nll").get<double>(), l.at("kl").get<double>(),
                             l.at("kl_weight").get<double>(), l.at("total").get<double>()};
      model.history.push_back(r);
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ContractError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const DsttModel& model, const std::string& path) {
  const std::string text = checkpoint_to_string(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << text << '\n';
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

DsttModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace dstt::model
