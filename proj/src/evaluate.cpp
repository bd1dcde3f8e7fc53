#include "dstt/evaluate.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dstt/errors.hpp"

namespace dstt::eval {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(y.size()) + " observations vs " +
                        std::to_string(yhat.size()) + " predictions");
  }
  if (y.empty()) throw ContractError(std::string(what) + " of zero records");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) {
      throw DomainError(std::string(what) + ": non-finite value at record " + std::to_string(i));
    }
  }
}

}  // namespace

double rmse(std::span<const double> observed, std::span<const double> predicted) {
  check_pair(observed, predicted, "rmse");
  double ss = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = observed[i] - predicted[i];
    ss += e * e;
  }
  const double r = std::sqrt(ss / static_cast<double>(observed.size()));
  if (!std::isfinite(r)) throw DomainError("rmse overflowed");
  return r;
}

double r_squared(std::span<const double> observed, std::span<const double> predicted) {
  check_pair(observed, predicted, "r_squared");
  double mean = 0.0;
  for (double y : observed) mean += y;
  mean /= static_cast<double>(observed.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ss_res += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    ss_tot += (observed[i] - mean) * (observed[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw DomainError("r_squared undefined: observed values are constant");
  if (!std::isfinite(ss_res)) throw DomainError("r_squared overflowed");
  return 1.0 - ss_res / ss_tot;
}

std::vector<double> persistence_forecast(std::span<const data::LabeledRecord> records, int w) {
  if (w < 1 || w > data::kMaxHorizon) {
    throw RangeError("persistence horizon must lie in 1..6, got " + std::to_string(w));
  }
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.w != w) throw ContractError("persistence: record labeled for w=" + std::to_string(r.w));
    out.push_back(r.current_dst);
  }
  return out;
}

void LinearRegression::fit(std::span<const data::LabeledRecord> train) {
  constexpr Eigen::Index p = data::kFeatureCount + 1;
  if (train.size() < static_cast<std::size_t>(p)) {
    throw ContractError("linear regression is underdetermined: " + std::to_string(train.size()) +
                        " records for " + std::to_string(p) + " coefficients");
  }
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd row(p);
  for (const auto& r : train) {
    for (std::size_t c = 0; c < data::kFeatureCount; ++c) row[static_cast<Eigen::Index>(c)] = r.features[c];
    row[p - 1] = 1.0;
    xtx.noalias() += row * row.transpose();
    xty.noalias() += row * r.label;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  Eigen::VectorXd beta;
  used_ridge_ = !lu.isInvertible();
  if (used_ridge_) {
    beta = (xtx + kRidge * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(xty);
  } else {
    beta = lu.solve(xty);
  }
  for (std::size_t c = 0; c < data::kFeatureCount; ++c) weights_[c] = beta[static_cast<Eigen::Index>(c)];
  intercept_ = beta[p - 1];
}

std::vector<double> LinearRegression::predict(std::span<const data::LabeledRecord> records) const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    double y = intercept_;
    for (std::size_t c = 0; c < data::kFeatureCount; ++c) y += weights_[c] * r.features[c];
    out.push_back(y);
  }
  return out;
}

StormCategory classify_storm(double dst) {
  if (dst > -50.0) return StormCategory::Moderate;
  if (dst >= -250.0) return StormCategory::Intense;
  return StormCategory::Super;
}

std::string category_name(StormCategory c) {
  switch (c) {
    case StormCategory::Moderate: return "moderate";
    case StormCategory::Intense: return "intense";
    case StormCategory::Super: return "super";
  }
  return "?";
}

std::array<CategoryScore, 3> score_by_category(std::span<const double> observed, std::span<const double> predicted) {
  check_pair(observed, predicted, "score_by_category");
  std::array<CategoryScore, 3> out = {CategoryScore{StormCategory::Moderate}, CategoryScore{StormCategory::Intense},
                                      CategoryScore{StormCategory::Super}};
  std::array<double, 3> ss{};
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const auto c = static_cast<std::size_t>(classify_storm(observed[i]));
    ++out[c].m;
    ss[c] += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    out[c].rmse = out[c].m ? std::sqrt(ss[c] / static_cast<double>(out[c].m))
                           : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

EvaluationReport make_report(std::string method, std::string variant, int w, std::uint64_t seed,
                             std::span<const double> observed, std::span<const double> predicted) {
  EvaluationReport r;
  r.method = std::move(method);
  r.variant = std::move(variant);
  r.w = w;
  r.seed = seed;
  r.m = observed.size();
  r.rmse = rmse(observed, predicted);
  r.r2 = r_squared(observed, predicted);
  return r;
}

void write_report_csv(std::ostream& out, std::span<const EvaluationReport> reports) {
  out << kReportHeader << '\n';
  for (const auto& r : reports) {
    out << r.method << ',' << r.variant << ',' << r.w << ',' << r.seed << ',' << r.m << ','
        << data::format_double(r.rmse) << ',' << data::format_double(r.r2) << '\n';
  }
}

std::vector<EvaluationReport> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw ParseError("report CSV must start with the header " + std::string(kReportHeader));
  }
  std::vector<EvaluationReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7) throw ParseError("report CSV line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      EvaluationReport r;
      r.method = cells[0];
      r.variant = cells[1];
      r.w = std::stoi(cells[2]);
      r.seed = std::stoull(cells[3]);
      r.m = std::stoull(cells[4]);
      r.rmse = std::stod(cells[5]);
      r.r2 = std::stod(cells[6]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError("report CSV line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return out;
}

}  // namespace dstt::eval
