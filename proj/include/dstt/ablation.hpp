#pragma once

// Experiment drivers: the ablation grid (variants x horizons x seeds) and
// k-fold cross-validation, both with persistence and linear baselines.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dstt/data.hpp"
#include "dstt/evaluate.hpp"
#include "dstt/model.hpp"

namespace dstt::eval {

using LogFn = std::function<void(const std::string&)>;

/// A split standardized with its training statistics and windowed.
struct PreparedSplit {
  data::NormalizationStats stats;
  std::vector<data::LabeledRecord> train;  // standardized
  std::vector<data::LabeledRecord> test;
  std::vector<data::Sequence> train_sequences;
  std::vector<data::Sequence> test_sequences;
};

PreparedSplit prepare_split(const data::DatasetSplit& split, std::size_t n);

std::vector<double> labels_of(std::span<const data::LabeledRecord> records);

/// Builds a model from `config`, trains it on the split and returns its
/// eval-mode predictions for the test part.
std::vector<double> fit_and_predict(const model::DsttConfig& config, const PreparedSplit& split, int w,
                                    std::uint64_t seed);

struct AblationOptions {
  std::vector<int> horizons = {1, 2, 3, 4, 5, 6};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<model::AblationVariant> variants{model::kAllVariants.begin(), model::kAllVariants.end()};
  double test_fraction = 0.2;
  std::size_t max_gap = 6;
  LogFn log;
};

struct AblationResult {
  std::vector<EvaluationReport> reports;    // one per (w, variant, seed) that trained
  std::vector<EvaluationReport> baselines;  // persistence and linear, one per w
  std::vector<std::string> failures;
};

/// Uncertainty is switched off for these runs: the variational layer uses
/// its means and the network has a single output. A failing run is
/// recorded in `failures` and skipped.
AblationResult run_ablation_suite(std::span<const data::SolarWindRecord> records, const model::DsttConfig& base,
                                  const AblationOptions& options);

struct CvOptions {
  std::size_t folds = 10;
  int w = 1;
  std::uint64_t seed = 0;
  std::size_t max_gap = 6;
  LogFn log;
};

struct CvFoldRun {
  std::size_t fold = 0;  // 1-based
  data::HourStamp test_start;
  data::HourStamp test_end;
  EvaluationReport report;
};

struct CvSummary {
  std::string method;
  int w = 1;
  std::size_t runs = 0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;  // sample standard deviation over runs
  double r2_mean = 0.0;
  double r2_std = 0.0;
};

struct CvResult {
  std::vector<CvFoldRun> runs;
  std::vector<CvSummary> summary;  // DSTT, persistence, linear
  std::vector<std::string> failures;
};

CvResult run_cross_validation(std::span<const data::SolarWindRecord> records, const model::DsttConfig& base,
                              const CvOptions& options);

std::vector<CvSummary> summarize(std::span<const CvFoldRun> runs);

inline constexpr std::string_view kCvSummaryHeader = "method,w,runs,rmse_mean,rmse_std,r2_mean,r2_std";
inline constexpr std::string_view kCvFoldHeader = "fold,method,w,m,rmse,r2,test_start,test_end";
void write_cv_summary_csv(std::ostream& out, std::span<const CvSummary> summary);
void write_cv_folds_csv(std::ostream& out, std::span<const CvFoldRun> runs);

}  // namespace dstt::eval
