#pragma once

// Forecast metrics, reference forecasters and storm categories.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dstt/data.hpp"

namespace dstt::eval {

/// sqrt(mean((y - yhat)^2)). ContractError on empty or unequal inputs.
double rmse(std::span<const double> observed, std::span<const double> predicted);

/// 1 - SS_res / SS_tot. DomainError when the observations are constant.
double r_squared(std::span<const double> observed, std::span<const double> predicted);

/// Predicts the label at t + w with Dst at t. RangeError unless 1 <= w <= 6.
std::vector<double> persistence_forecast(std::span<const data::LabeledRecord> records, int w);

/// Ordinary least squares on the 7 features plus an intercept.
class LinearRegression {
public:
  static constexpr double kRidge = 1e-8;

  /// Needs at least 8 records. A rank-deficient design falls back to a
  /// ridge solve with lambda = kRidge.
  void fit(std::span<const data::LabeledRecord> train);
  std::vector<double> predict(std::span<const data::LabeledRecord> records) const;

  const data::FeatureVector& weights() const noexcept { return weights_; }
  double intercept() const noexcept { return intercept_; }
  bool used_ridge() const noexcept { return used_ridge_; }

private:
  data::FeatureVector weights_{};
  double intercept_ = 0.0;
  bool used_ridge_ = false;
};

enum class StormCategory { Moderate, Intense, Super };

/// > -50 moderate, [-250, -50] intense, < -250 super.
StormCategory classify_storm(double dst);
std::string category_name(StormCategory c);

struct CategoryScore {
  StormCategory category;
  std::size_t m = 0;
  double rmse = 0.0;  // NaN when m == 0
};

/// Scores grouped by the category of the observed value.
std::array<CategoryScore, 3> score_by_category(std::span<const double> observed, std::span<const double> predicted);

struct EvaluationReport {
  std::string method;   // "DSTT", "persistence", "linear"
  std::string variant;  // ablation code, or "-" for baselines
  int w = 1;
  std::uint64_t seed = 0;
  std::size_t m = 0;
  double rmse = 0.0;
  double r2 = 0.0;
};

EvaluationReport make_report(std::string method, std::string variant, int w, std::uint64_t seed,
                             std::span<const double> observed, std::span<const double> predicted);

inline constexpr std::string_view kReportHeader = "method,variant,w,seed,m,rmse,r2";
void write_report_csv(std::ostream& out, std::span<const EvaluationReport> reports);
std::vector<EvaluationReport> read_report_csv(std::istream& in);

}  // namespace dstt::eval
