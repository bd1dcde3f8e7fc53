#include "dstt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "dstt/ablation.hpp"
#include "dstt/checkpoint.hpp"
#include "dstt/errors.hpp"
#include "dstt/evaluate.hpp"
#include "dstt/fetch.hpp"
#include "dstt/synth.hpp"

namespace dstt::cli {

using nlohmann::json;

namespace {

enum Command : unsigned {
  kFetch = 1u << 0,
  kIngest = 1u << 1,
  kTrain = 1u << 2,
  kPredict = 1u << 3,
  kEvaluate = 1u << 4,
  kAblate = 1u << 5,
  kCv = 1u << 6,
  kSynth = 1u << 7,
};

constexpr unsigned kUsesData = kIngest | kTrain | kPredict | kAblate | kCv;
constexpr unsigned kUsesNet = kTrain | kAblate | kCv;

enum class Kind { String, Int, UInt, Double, Bool, IntList, UIntList, Variant };

struct Field {
  std::string key;
  std::string aliases;  // extra flag names, comma separated
  Kind kind;
  std::string help;
  unsigned commands;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::String: return "a string";
    case Kind::Int: return "an integer";
    case Kind::UInt: return "a non-negative integer";
    case Kind::Double: return "a number";
    case Kind::Bool: return "true or false";
    case Kind::IntList: return "a list of integers";
    case Kind::UIntList: return "a list of non-negative integers";
    case Kind::Variant: return "a variant name (FULL, C, L, M, CL, CM, LM)";
  }
  return "?";
}

const char* type_label(Kind k) {
  switch (k) {
    case Kind::String: return "TEXT";
    case Kind::Int: return "INT";
    case Kind::UInt: return "UINT";
    case Kind::Double: return "FLOAT";
    case Kind::Bool: return "[BOOL]";
    case Kind::IntList:
    case Kind::UIntList: return "LIST";
    case Kind::Variant: return "VARIANT";
  }
  return "TEXT";
}

bool accepts(Kind k, const json& j) {
  switch (k) {
    case Kind::String:
    case Kind::Variant: return j.is_string();
    case Kind::Int: return j.is_number_integer();
    case Kind::UInt: return j.is_number_unsigned();
    case Kind::Double: return j.is_number();
    case Kind::Bool: return j.is_boolean();
    case Kind::IntList:
      return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number_integer(); });
    case Kind::UIntList:
      return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number_unsigned(); });
  }
  return false;
}

template <Kind K, class Access>
Field field(std::string key, std::string aliases, std::string help, unsigned commands, Access access) {
  Field f{std::move(key), std::move(aliases), K, std::move(help), commands, {}, {}};
  f.set = [access](RunConfig& c, const json& j) {
    auto& slot = access(c);
    if constexpr (K == Kind::Variant) {
      slot = model::parse_variant(j.get<std::string>());
    } else {
      slot = j.get<std::remove_reference_t<decltype(slot)>>();
    }
  };
  f.get = [access](const RunConfig& c) -> json {
    auto& slot = access(const_cast<RunConfig&>(c));
    if constexpr (K == Kind::Variant) {
      return model::variant_code(slot);
    } else {
      return json(slot);
    }
  };
  return f;
}

#define DSTT_ACCESS(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field<Kind::String>("data", "", "input table: OMNI2 text or CSV", kUsesData, DSTT_ACCESS(data)),
      field<Kind::String>("out", "", "output path ('-' for standard output where supported)", ~0u,
                          DSTT_ACCESS(out)),
      field<Kind::String>("model", "", "model checkpoint to load", kPredict, DSTT_ACCESS(model)),
      field<Kind::String>("pred", "", "forecast CSV to score", kEvaluate, DSTT_ACCESS(pred)),
      field<Kind::String>("log", "", "per-epoch loss log (default: <out>.history.csv)", kTrain, DSTT_ACCESS(log)),
      field<Kind::String>("baselines", "", "baseline report path (default: <out>_baselines.csv)", kAblate,
                          DSTT_ACCESS(baselines)),
      field<Kind::String>("folds_out", "", "per-fold report path (default: <out>_folds.csv)", kCv,
                          DSTT_ACCESS(folds_out)),
      field<Kind::String>("column_map", "", "JSON column map for OMNI tables", kUsesData, DSTT_ACCESS(column_map)),
      field<Kind::String>("format", "", "synthetic output format: csv or omni", kSynth, DSTT_ACCESS(format)),
      field<Kind::String>("subset", "", "records to forecast: test, train or all", kPredict, DSTT_ACCESS(subset)),
      field<Kind::UInt>("sequence_length", "--n", "records per sequence", kUsesNet, DSTT_ACCESS(net.sequence_length)),
      field<Kind::UInt>("conv_filters", "", "Conv1D filters", kUsesNet, DSTT_ACCESS(net.conv_filters)),
      field<Kind::UInt>("lstm_units", "", "LSTM hidden units", kUsesNet, DSTT_ACCESS(net.lstm_units)),
      field<Kind::UInt>("attention_heads", "", "attention heads", kUsesNet, DSTT_ACCESS(net.attention_heads)),
      field<Kind::UInt>("head_size", "", "width of each attention head", kUsesNet, DSTT_ACCESS(net.head_size)),
      field<Kind::UInt>("model_width", "", "width entering multi-head attention", kUsesNet,
                        DSTT_ACCESS(net.model_width)),
      field<Kind::UInt>("dvl_units", "", "dense variational units", kUsesNet, DSTT_ACCESS(net.dvl_units)),
      field<Kind::UInt>("dense_head_units", "", "hidden units of the output head", kUsesNet,
                        DSTT_ACCESS(net.dense_head_units)),
      field<Kind::Double>("dropout_rate", "", "dropout rate", kUsesNet, DSTT_ACCESS(net.dropout_rate)),
      field<Kind::Double>("learning_rate", "--lr", "Adam learning rate", kUsesNet, DSTT_ACCESS(net.learning_rate)),
      field<Kind::UInt>("epochs", "", "training epochs", kUsesNet, DSTT_ACCESS(net.epochs)),
      field<Kind::UInt>("batch_size", "", "sequences per optimizer step", kUsesNet, DSTT_ACCESS(net.batch_size)),
      field<Kind::Bool>("heteroscedastic", "", "train a variance head", kTrain | kCv,
                        DSTT_ACCESS(net.heteroscedastic)),
      field<Kind::Bool>("uq_enabled", "", "sample variational weights during training", kTrain | kCv,
                        DSTT_ACCESS(net.uq_enabled)),
      field<Kind::Variant>("variant", "", "network variant", kTrain | kCv | kEvaluate, DSTT_ACCESS(net.variant)),
      field<Kind::UInt>("mc_samples", "--K", "Monte-Carlo passes", kPredict, DSTT_ACCESS(mc.samples)),
      field<Kind::UInt>("threads", "", "worker threads for Monte-Carlo passes", kPredict, DSTT_ACCESS(mc.threads)),
      field<Kind::Bool>("epistemic_only", "", "allow models without a variance head", kPredict,
                        DSTT_ACCESS(mc.epistemic_only)),
      field<Kind::Double>("band_z", "", "band half-width in standard deviations", kPredict, DSTT_ACCESS(band_z)),
      field<Kind::Int>("w", "", "forecast horizon in hours (1..6)", kIngest | kTrain | kEvaluate | kCv,
                       DSTT_ACCESS(w)),
      field<Kind::IntList>("horizons", "", "horizons for the ablation grid", kAblate, DSTT_ACCESS(horizons)),
      field<Kind::UIntList>("seeds", "", "seeds for the ablation grid", kAblate, DSTT_ACCESS(seeds)),
      field<Kind::UInt>("seed", "", "random seed", kTrain | kPredict | kEvaluate | kCv | kSynth, DSTT_ACCESS(seed)),
      field<Kind::UInt>("max_gap", "", "longest gap (hours) bridged by interpolation", kUsesData,
                        DSTT_ACCESS(max_gap)),
      field<Kind::String>("boundary", "", "first test hour (YYYY-MM-DD[THH]); overrides test_fraction",
                          kTrain | kPredict, DSTT_ACCESS(boundary)),
      field<Kind::Double>("test_fraction", "", "trailing fraction held out for testing", kTrain | kPredict | kAblate,
                          DSTT_ACCESS(test_fraction)),
      field<Kind::UInt>("folds", "", "cross-validation folds", kCv, DSTT_ACCESS(folds)),
      field<Kind::UInt>("count", "", "records to generate", kSynth, DSTT_ACCESS(count)),
      field<Kind::String>("start", "", "first hour to fetch (YYYY-MM-DD[THH])", kFetch, DSTT_ACCESS(start)),
      field<Kind::String>("end", "", "hour after the last one to fetch", kFetch, DSTT_ACCESS(end)),
      field<Kind::String>("url", "", "download URL template containing {year}", kFetch, DSTT_ACCESS(url)),
      field<Kind::String>("cache_dir", "", "download cache directory", kFetch, DSTT_ACCESS(cache_dir)),
  };
  return table;
}

#undef DSTT_ACCESS

void apply_field(RunConfig& c, const Field& f, const json& value) {
  if (!accepts(f.kind, value)) {
    throw ConfigError("config key '" + f.key + "' expects " + kind_name(f.kind) + ", got " + value.dump());
  }
  f.set(c, value);
}

json flag_to_json(const Field& f, const std::string& text) {
  auto fail = [&] { throw ConfigError("--" + f.key + " expects " + kind_name(f.kind) + ", got '" + text + "'"); };
  auto integer = [&](const std::string& s) -> json {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      fail();
    }
    if (used != s.size()) fail();
    if (v >= 0) return json(static_cast<std::uint64_t>(v));
    return json(v);
  };
  switch (f.kind) {
    case Kind::String:
    case Kind::Variant: return json(text);
    case Kind::Int:
    case Kind::UInt: return integer(text);
    case Kind::Double: {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(text, &used);
      } catch (const std::exception&) {
        fail();
      }
      if (used != text.size()) fail();
      return json(v);
    }
    case Kind::Bool:
      if (text.empty() || text == "true" || text == "1" || text == "yes") return json(true);
      if (text == "false" || text == "0" || text == "no") return json(false);
      fail();
      break;
    case Kind::IntList:
    case Kind::UIntList: {
      json arr = json::array();
      std::stringstream ss(text);
      for (std::string part; std::getline(ss, part, ',');) arr.push_back(integer(part));
      return arr;
    }
  }
  return json();
}

// ---- shared pipeline steps --------------------------------------------------

struct Output {
  std::ofstream file;
  std::ostream* stream = nullptr;
  std::string path;

  Output(const std::string& p, std::ostream& stdout_stream, bool allow_stdout) : path(p) {
    if (p.empty()) throw ConfigError("--out is required");
    if (p == "-") {
      if (!allow_stdout) throw ConfigError("--out - is not supported for this command");
      stream = &stdout_stream;
      return;
    }
    file.open(p, std::ios::binary);
    if (!file) throw IoError("cannot write '" + p + "'");
    stream = &file;
  }
  void finish() {
    stream->flush();
    if (!*stream) throw IoError("failed writing '" + path + "'");
  }
};

std::string with_suffix(const std::string& out, const std::string& suffix) {
  std::string stem = out;
  if (stem.size() > 4 && stem.ends_with(".csv")) stem.resize(stem.size() - 4);
  return stem + suffix;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("--") + flag + " is required");
}

std::vector<data::SolarWindRecord> read_records(const RunConfig& c) {
  require(c.data, "data");
  const data::ColumnMap map = c.column_map.empty() ? data::ColumnMap::omni2() : data::ColumnMap::from_file(c.column_map);
  return data::load_records(c.data, map);
}

data::DatasetSplit split_records(const RunConfig& c, std::span<const data::LabeledRecord> labeled) {
  if (!c.boundary.empty()) return data::chronological_split(labeled, data::HourStamp::parse(c.boundary));
  return data::fraction_split(labeled, c.test_fraction);
}

void report_cleaning(const data::CleaningReport& r, std::ostream& err) {
  err << "cleaning: " << r.segments << " segment(s), " << r.inserted_rows << " absent hour(s), " << r.dropped_rows
      << " dropped row(s)\n";
  for (std::size_t col = 0; col < data::kColumnCount; ++col) {
    if (r.missing[col] == 0 && r.interpolated[col] == 0) continue;
    const std::string name = col == data::kDstColumn ? "dst" : std::string(data::kFeatureNames[col]);
    err << "  " << name << ": " << r.missing[col] << " missing, " << r.interpolated[col] << " interpolated\n";
  }
}

// ---- commands -----------------------------------------------------------------

int cmd_synth(const RunConfig& c, std::ostream& out) {
  if (c.count < 1) throw ConfigError("--count must be at least 1");
  data::SynthFormat format;
  if (c.format == "csv") {
    format = data::SynthFormat::Csv;
  } else if (c.format == "omni") {
    format = data::SynthFormat::Omni;
  } else {
    throw ConfigError("--format must be csv or omni, got '" + c.format + "'");
  }
  Output o(c.out, out, true);
  data::SynthOptions opt;
  opt.seed = c.seed;
  data::write_synthetic(*o.stream, c.count, opt, format);
  o.finish();
  return 0;
}

int cmd_fetch(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.start, "start");
  require(c.end, "end");
  data::FetchOptions opt = data::fetch_options_from_env({});
  if (!c.url.empty()) opt.url_template = c.url;
  if (!c.cache_dir.empty()) opt.cache_dir = c.cache_dir;
  const auto r = data::fetch_omni(data::HourStamp::parse(c.start), data::HourStamp::parse(c.end), opt);
  err << "fetch: " << r.downloads << " download(s), " << r.cache_hits << " cached file(s)\n";
  if (!c.out.empty()) {
    std::filesystem::copy_file(r.path, c.out, std::filesystem::copy_options::overwrite_existing);
    out << c.out << '\n';
  } else {
    out << r.path << '\n';
  }
  return 0;
}

int cmd_ingest(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto records = read_records(c);
  const auto cleaned = data::clean_missing(records, c.max_gap);
  report_cleaning(cleaned.report, err);
  const auto labeled = data::label_segments(cleaned.segments, c.w);
  Output o(c.out, out, true);
  data::write_labeled_csv(*o.stream, labeled);
  o.finish();
  err << "ingest: " << records.size() << " rows read, " << labeled.size() << " labeled for w=" << c.w << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.out, "out");
  const auto cleaned = data::clean_missing(read_records(c), c.max_gap);
  report_cleaning(cleaned.report, err);
  const auto labeled = data::label_segments(cleaned.segments, c.w);
  const auto split = split_records(c, labeled);
  const auto prepared = eval::prepare_split(split, c.net.sequence_length);

  model::DsttConfig net = c.net;
  net.seed = c.seed;
  Rng init(c.seed);
  model::DsttModel m = model::build_model(net, init);
  m.horizon = c.w;
  m.feature_stats = prepared.stats;
  Rng rng(Rng::derive_seed(c.seed, static_cast<std::uint64_t>(c.w)));
  err << "train: " << prepared.train.size() << " records in " << prepared.train_sequences.size()
      << " sequence(s), " << net.epochs << " epoch(s)\n";

  Output history(c.log.empty() ? c.out + ".history.csv" : c.log, out, false);
  *history.stream << "epoch,mse,nll,kl,kl_weight,total\n";
  model::TrainOptions opts;
  opts.on_epoch = [&](const model::EpochRecord& r) {
    *history.stream << r.epoch << ',' << data::format_double(r.loss.mse) << ',' << data::format_double(r.loss.nll)
                    << ',' << data::format_double(r.loss.kl) << ',' << data::format_double(r.loss.kl_weight) << ','
                    << data::format_double(r.loss.total) << '\n';
    err << "epoch " << r.epoch << " total " << r.loss.total << " mse " << r.loss.mse << '\n';
    return true;
  };
  model::train(m, prepared.train_sequences, rng, opts);
  history.finish();
  model::save_checkpoint(m, c.out);
  out << "wrote " << c.out << '\n';
  return 0;
}

int cmd_predict(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.model, "model");
  require(c.out, "out");
  const model::DsttModel m = model::load_checkpoint(c.model);
  if (!m.trained) throw ContractError("checkpoint '" + c.model + "' holds an untrained model");
  if (!m.feature_stats) throw ContractError("checkpoint '" + c.model + "' has no feature statistics");
  const int w = m.horizon;
  const auto cleaned = data::clean_missing(read_records(c), c.max_gap);
  const auto labeled = data::label_segments(cleaned.segments, w);

  std::vector<data::LabeledRecord> chosen;
  if (c.subset == "all") {
    chosen = labeled;
  } else if ((c.subset == "test" || c.subset == "train") && !c.boundary.empty()) {
    // an empty side is not an error here: it yields a header-only forecast
    const auto boundary = data::HourStamp::parse(c.boundary);
    const bool want_test = c.subset == "test";
    for (const auto& r : labeled)
      if ((r.time >= boundary) == want_test) chosen.push_back(r);
  } else if (c.subset == "test" || c.subset == "train") {
    auto split = data::fraction_split(labeled, c.test_fraction);
    chosen = c.subset == "test" ? std::move(split.test) : std::move(split.train);
  } else {
    throw ConfigError("--subset must be test, train or all, got '" + c.subset + "'");
  }
  const auto standardized = data::standardize(chosen, *m.feature_stats);
  const auto sequences = data::make_sequences(standardized, m.config().sequence_length);

  std::vector<ForecastRow> rows;
  if (chosen.empty()) {
    err << "warning: no records to forecast; writing a header-only file\n";
  } else {
    uq::McConfig mc = c.mc;
    mc.seed = c.seed;
    const auto samples = uq::mc_predict(m, sequences, mc);
    const auto dist = uq::decompose_variance(samples);
    const auto [lower, upper] = uq::interval_bounds(dist, c.band_z, uq::Component::Total);
    rows.reserve(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      rows.push_back(ForecastRow{chosen[i].time + w, chosen[i].label, dist.mean[i], dist.aleatoric[i],
                                 dist.epistemic[i], dist.total[i], lower[i], upper[i]});
    }
  }
  Output o(c.out, out, true);
  write_forecast_csv(*o.stream, rows);
  o.finish();
  err << "predict: " << rows.size() << " forecast(s) with K=" << c.mc.samples << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  require(c.pred, "pred");
  std::ifstream in(c.pred, std::ios::binary);
  if (!in) throw IoError("cannot open forecast '" + c.pred + "'");
  const auto rows = read_forecast_csv(in);
  std::vector<double> y, yhat;
  for (const auto& r : rows) {
    y.push_back(r.observed);
    yhat.push_back(r.mean);
  }
  const auto report = eval::make_report(model::variant_name(c.net.variant), model::variant_code(c.net.variant), c.w,
                                        c.seed, y, yhat);
  out << "m=" << report.m << " rmse=" << data::format_double(report.rmse) << " r2=" << data::format_double(report.r2)
      << '\n';
  for (const auto& s : eval::score_by_category(y, yhat)) {
    out << "  " << eval::category_name(s.category) << ": m=" << s.m;
    if (s.m) out << " rmse=" << data::format_double(s.rmse);
    out << '\n';
  }
  if (!c.out.empty()) {
    Output o(c.out, out, true);
    const std::vector<eval::EvaluationReport> reports = {report};
    eval::write_report_csv(*o.stream, reports);
    o.finish();
  }
  return 0;
}

int cmd_ablate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.out, "out");
  const auto records = read_records(c);
  eval::AblationOptions opt;
  opt.horizons = c.horizons;
  opt.seeds = c.seeds;
  opt.test_fraction = c.test_fraction;
  opt.max_gap = c.max_gap;
  opt.log = [&](const std::string& msg) { err << msg << '\n'; };
  const auto result = eval::run_ablation_suite(records, c.net, opt);
  {
    Output o(c.out, out, false);
    eval::write_report_csv(*o.stream, result.reports);
    o.finish();
  }
  Output b(c.baselines.empty() ? with_suffix(c.out, "_baselines.csv") : c.baselines, out, false);
  eval::write_report_csv(*b.stream, result.baselines);
  b.finish();
  for (const auto& f : result.failures) err << "failed run: " << f << '\n';
  out << "wrote " << result.reports.size() << " report row(s) to " << c.out << '\n';
  if (result.reports.empty()) throw RuntimeFailure("every ablation run failed");
  return 0;
}

int cmd_cv(const RunConfig& c, std::ostream& out, std::ostream& err) {
  require(c.out, "out");
  const auto records = read_records(c);
  eval::CvOptions opt;
  opt.folds = c.folds;
  opt.w = c.w;
  opt.seed = c.seed;
  opt.max_gap = c.max_gap;
  opt.log = [&](const std::string& msg) { err << msg << '\n'; };
  const auto result = eval::run_cross_validation(records, c.net, opt);
  {
    Output o(c.out, out, false);
    eval::write_cv_summary_csv(*o.stream, result.summary);
    o.finish();
  }
  Output f(c.folds_out.empty() ? with_suffix(c.out, "_folds.csv") : c.folds_out, out, false);
  eval::write_cv_folds_csv(*f.stream, result.runs);
  f.finish();
  for (const auto& msg : result.failures) err << "failed run: " << msg << '\n';
  for (const auto& s : result.summary) {
    out << s.method << " w=" << s.w << " runs=" << s.runs << " rmse=" << s.rmse_mean << "+-" << s.rmse_std
        << " r2=" << s.r2_mean << "+-" << s.r2_std << '\n';
  }
  return 0;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig apply_config_text(RunConfig base, const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return base;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    apply_field(base, *it, value);
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return apply_config_text(std::move(base), ss.str());
}

std::string config_to_json(const RunConfig& config) {
  json doc = json::object();
  for (const Field& f : fields()) doc[f.key] = f.get(config);
  return doc.dump();
}

void write_forecast_csv(std::ostream& out, const std::vector<ForecastRow>& rows) {
  out << kForecastHeader << '\n';
  for (const auto& r : rows) {
    out << r.time.iso();
    for (double v : {r.observed, r.mean, r.aleatoric_var, r.epistemic_var, r.total_var, r.lower, r.upper}) {
      out << ',' << data::format_double(v);
    }
    out << '\n';
  }
}

std::vector<ForecastRow> read_forecast_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kForecastHeader) {
    throw ParseError("forecast CSV must start with the header " + std::string(kForecastHeader));
  }
  std::vector<ForecastRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw ParseError("forecast CSV line " + std::to_string(line_no) + ": expected 8 fields");
    ForecastRow r;
    try {
      r.time = data::HourStamp::parse(cells[0]);
      double* slots[] = {&r.observed, &r.mean, &r.aleatoric_var, &r.epistemic_var, &r.total_var, &r.lower, &r.upper};
      for (std::size_t k = 0; k < 7; ++k) {
        std::size_t used = 0;
        *slots[k] = std::stod(cells[k + 1], &used);
        if (used != cells[k + 1].size()) throw std::invalid_argument("trailing text");
      }
    } catch (const std::logic_error&) {
      throw ParseError("forecast CSV line " + std::to_string(line_no) + ": malformed number");
    } catch (const ParseError& e) {
      throw ParseError("forecast CSV line " + std::to_string(line_no) + ": " + e.what());
    }
    rows.push_back(r);
  }
  return rows;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dst index forecasting with Monte-Carlo uncertainty", "dstt"};
  app.require_subcommand(1);
  const std::vector<std::pair<Command, std::pair<const char*, const char*>>> commands = {
      {kFetch, {"fetch", "download OMNI2 hourly tables for a date range"}},
      {kIngest, {"ingest", "parse, clean and label a table; write labeled CSV"}},
      {kTrain, {"train", "train a model and write a checkpoint"}},
      {kPredict, {"predict", "Monte-Carlo forecast with uncertainty bands"}},
      {kEvaluate, {"evaluate", "score a forecast CSV"}},
      {kAblate, {"ablate", "train and score every variant over horizons and seeds"}},
      {kCv, {"cv", "k-fold cross-validation with baselines"}},
      {kSynth, {"synth", "generate a synthetic hourly table"}},
  };
  std::map<std::string, std::string> values;
  std::string config_path;
  std::vector<std::pair<Command, CLI::App*>> subs;
  std::map<std::pair<Command, std::string>, CLI::Option*> options;
  for (const auto& [cmd, info] : commands) {
    CLI::App* sub = app.add_subcommand(info.first, info.second);
    sub->add_option("--config", config_path, "JSON config; flags override its values");
    for (const Field& f : fields()) {
      if (!(f.commands & cmd)) continue;
      std::string names = "--" + f.key;
      if (f.key.find('_') != std::string::npos) {
        std::string dashed = f.key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      if (!f.aliases.empty()) names += "," + f.aliases;
      CLI::Option* opt = sub->add_option(names, values[f.key], f.help);
      opt->type_name(type_label(f.kind));
      if (f.kind == Kind::Bool) opt->expected(0, 1);
      options[{cmd, f.key}] = opt;
    }
    subs.emplace_back(cmd, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* context = &app;
    for (const auto& [cmd, sub] : subs)
      if (sub->parsed()) context = sub;
    err << context->help();
    return 1;
  }

  Command cmd = kFetch;
  for (const auto& [c, sub] : subs)
    if (sub->parsed()) cmd = c;

  try {
    RunConfig config;
    for (const auto& [c, info] : commands)
      if (c == cmd) config.command = info.first;
    if (!config_path.empty()) config = load_config(config_path, config);
    for (const Field& f : fields()) {
      const auto it = options.find({cmd, f.key});
      if (it == options.end() || it->second->count() == 0) continue;
      apply_field(config, f, flag_to_json(f, values[f.key]));
    }
    err << "config: " << config_to_json(config) << '\n';
    switch (cmd) {
      case kFetch: return cmd_fetch(config, out, err);
      case kIngest: return cmd_ingest(config, out, err);
      case kTrain: return cmd_train(config, out, err);
      case kPredict: return cmd_predict(config, out, err);
      case kEvaluate: return cmd_evaluate(config, out);
      case kAblate: return cmd_ablate(config, out, err);
      case kCv: return cmd_cv(config, out, err);
      case kSynth: return cmd_synth(config, out);
    }
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what();
    if (e.last_good_epoch() >= 0) err << " (last good epoch " << e.last_good_epoch() << ")";
    err << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace dstt::cli
