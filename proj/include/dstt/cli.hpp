#pragma once

// Command-line front end: fetch, ingest, train, predict, evaluate, ablate,
// cv and synth. Exit status 0 on success, 1 on invalid input or usage, 2 on
// runtime failure.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dstt/data.hpp"
#include "dstt/model.hpp"
#include "dstt/uncertainty.hpp"

namespace dstt::cli {

struct RunConfig {
  std::string command;

  std::string data;
  std::string out;
  std::string model;
  std::string pred;
  std::string log;
  std::string baselines;
  std::string folds_out;
  std::string column_map;
  std::string format = "csv";  // synth output: csv or omni
  std::string subset = "test";  // predict on: test, train or all

  model::DsttConfig net;
  uq::McConfig mc;
  double band_z = 2.0;

  int w = 1;
  std::vector<int> horizons = {1, 2, 3, 4, 5, 6};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::uint64_t seed = 0;
  std::size_t max_gap = 6;
  std::string boundary;  // empty: split by test_fraction
  double test_fraction = 0.2;
  std::size_t folds = 10;

  std::size_t count = 1000;
  std::string start;
  std::string end;
  std::string url;
  std::string cache_dir;
};

/// Keys accepted in a --config document (also the long flag names).
std::vector<std::string> config_keys();

/// Applies a JSON object on top of `base`. Unknown keys raise ConfigError
/// naming the key; malformed JSON raises ParseError with its location.
RunConfig apply_config_text(RunConfig base, const std::string& text);
RunConfig load_config(const std::string& path, RunConfig base = {});

/// The effective configuration as a JSON object.
std::string config_to_json(const RunConfig& config);

struct ForecastRow {
  data::HourStamp time;
  double observed = 0.0;
  double mean = 0.0;
  double aleatoric_var = 0.0;
  double epistemic_var = 0.0;
  double total_var = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline constexpr std::string_view kForecastHeader =
    "timestamp,observed,mean,aleatoric_var,epistemic_var,total_var,lower,upper";
void write_forecast_csv(std::ostream& out, const std::vector<ForecastRow>& rows);
std::vector<ForecastRow> read_forecast_csv(std::istream& in);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dstt::cli
