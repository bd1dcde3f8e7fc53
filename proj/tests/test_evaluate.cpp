#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dstt/ablation.hpp"
#include "dstt/errors.hpp"
#include "dstt/evaluate.hpp"
#include "dstt/rng.hpp"
#include "dstt/synth.hpp"

using namespace dstt;
using namespace dstt::eval;

namespace {

// Direct summation, written independently of the library.
double oracle_rmse(const std::vector<double>& y, const std::vector<double>& p) {
  long double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (long double)(y[i] - p[i]) * (y[i] - p[i]);
  return static_cast<double>(std::sqrt(s / y.size()));
}

double oracle_r2(const std::vector<double>& y, const std::vector<double>& p) {
  long double mean = 0;
  for (double v : y) mean += v;
  mean /= y.size();
  long double res = 0, tot = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    res += (long double)(y[i] - p[i]) * (y[i] - p[i]);
    tot += (y[i] - mean) * (y[i] - mean);
  }
  return static_cast<double>(1 - res / tot);
}

std::vector<data::LabeledRecord> ramp(std::size_t m, int w) {
  std::vector<data::LabeledRecord> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    out[i].time = data::HourStamp{static_cast<std::int64_t>(i)};
    out[i].current_dst = static_cast<double>(i);
    out[i].label = static_cast<double>(i + w);
    out[i].w = w;
  }
  return out;
}

std::vector<data::LabeledRecord> linear_records(std::size_t m, std::uint64_t seed, double noise) {
  Rng rng(seed);
  const double wts[7] = {1.5, -2.0, 0.25, 3.0, -0.5, 0.75, 1.0};
  std::vector<data::LabeledRecord> out(m);
  for (auto& r : out) {
    r.label = -7.0;
    for (std::size_t c = 0; c < 7; ++c) {
      r.features[c] = rng.normal();
      r.label += wts[c] * r.features[c];
    }
    r.label += noise * rng.normal();
  }
  return out;
}

}  // namespace

TEST(Rmse, Examples) {
  const std::vector<double> a{1, 2, 3};
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}), std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{-50, -100}, std::vector<double>{-60, -90}), 10.0);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), ContractError);
  EXPECT_THROW(rmse(std::vector<double>{1}, std::vector<double>{1, 2}), ContractError);
  EXPECT_THROW(rmse(std::vector<double>{1}, std::vector<double>{NAN}), DomainError);
}

TEST(RSquared, Examples) {
  const std::vector<double> y{1, 2, 3};
  EXPECT_EQ(r_squared(y, y), 1.0);
  EXPECT_DOUBLE_EQ(r_squared(y, std::vector<double>{2, 2, 2}), 0.0);
  EXPECT_DOUBLE_EQ(r_squared(y, std::vector<double>{1, 2, 2}), 0.5);
  EXPECT_THROW(r_squared(std::vector<double>{4, 4}, std::vector<double>{1, 2}), DomainError);
}

TEST(Metrics, AgreeWithDirectSummation) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t m = 2 + static_cast<std::size_t>(rng.uniform() * 9999);
    std::vector<double> y(m), p(m);
    for (std::size_t i = 0; i < m; ++i) {
      y[i] = -40 + 60 * rng.normal();
      p[i] = y[i] + 15 * rng.normal();
    }
    const double r = oracle_rmse(y, p), q = oracle_r2(y, p);
    EXPECT_NEAR(rmse(y, p), r, 1e-12 * r) << "seed " << seed;
    EXPECT_NEAR(r_squared(y, p), q, 1e-12) << "seed " << seed;
  }
}

TEST(Metrics, Invariances) {
  Rng rng(5);
  std::vector<double> y(500), p(500), ys(500), ps(500), ya(500), pa(500);
  for (std::size_t i = 0; i < 500; ++i) {
    y[i] = 50 * rng.normal();
    p[i] = y[i] + 10 * rng.normal();
    ys[i] = y[i] + 1234.5;
    ps[i] = p[i] + 1234.5;
    ya[i] = -3.0 * y[i] + 7.0;
    pa[i] = -3.0 * p[i] + 7.0;
  }
  EXPECT_NEAR(rmse(ys, ps), rmse(y, p), 1e-10);
  EXPECT_NEAR(r_squared(ya, pa), r_squared(y, p), 1e-12);
  EXPECT_LE(r_squared(y, p), 1.0);
}

TEST(Persistence, Examples) {
  std::vector<data::LabeledRecord> flat(20);
  for (auto& r : flat) {
    r.current_dst = -12;
    r.label = -12;
    r.w = 2;
  }
  EXPECT_EQ(rmse(labels_of(flat), persistence_forecast(flat, 2)), 0.0);
  const auto r = ramp(50, 3);
  EXPECT_DOUBLE_EQ(rmse(labels_of(r), persistence_forecast(r, 3)), 3.0);
  EXPECT_THROW(persistence_forecast(r, 0), RangeError);
  EXPECT_THROW(persistence_forecast(r, 7), RangeError);
}

TEST(LinearRegression, RecoversExactLinearLabels) {
  const auto recs = linear_records(200, 1, 0.0);
  LinearRegression lr;
  lr.fit(recs);
  EXPECT_FALSE(lr.used_ridge());
  const auto pred = lr.predict(recs);
  const auto y = labels_of(recs);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_LT(std::abs(pred[i] - y[i]), 1e-8);
  EXPECT_GT(r_squared(y, pred), 1 - 1e-10);
  EXPECT_NEAR(lr.intercept(), -7.0, 1e-10);
}

TEST(LinearRegression, ConstantTarget) {
  auto recs = linear_records(100, 2, 0.0);
  for (auto& r : recs) r.label = 5.0;
  LinearRegression lr;
  lr.fit(recs);
  EXPECT_NEAR(lr.intercept(), 5.0, 1e-10);
  for (double w : lr.weights()) EXPECT_NEAR(w, 0.0, 1e-10);
}

TEST(LinearRegression, CollinearFeatureFallsBackToRidge) {
  auto recs = linear_records(100, 3, 0.1);
  for (auto& r : recs) {
    r.label += r.features[0] - r.features[6];
    r.features[6] = r.features[0];
  }
  LinearRegression lr;
  EXPECT_NO_THROW(lr.fit(recs));
  EXPECT_TRUE(lr.used_ridge());
  const auto pred = lr.predict(recs);
  for (double v : pred) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(r_squared(labels_of(recs), pred), 0.99);
}

TEST(LinearRegression, TooFewRecords) {
  LinearRegression lr;
  EXPECT_THROW(lr.fit(linear_records(7, 4, 0.0)), ContractError);
}

TEST(StormCategory, Thresholds) {
  EXPECT_EQ(classify_storm(-30), StormCategory::Moderate);
  EXPECT_EQ(classify_storm(-100), StormCategory::Intense);
  EXPECT_EQ(classify_storm(-300), StormCategory::Super);
  EXPECT_EQ(classify_storm(-50), StormCategory::Intense);
  EXPECT_EQ(classify_storm(-250), StormCategory::Intense);
  EXPECT_EQ(classify_storm(-49.999), StormCategory::Moderate);
  EXPECT_EQ(classify_storm(-250.001), StormCategory::Super);
}

TEST(StormCategory, Monotone) {
  int previous = 0;
  for (double d = 50; d >= -600; d -= 0.25) {
    const int level = static_cast<int>(classify_storm(d));
    EXPECT_GE(level, previous) << d;
    previous = level;
  }
}

TEST(StormCategory, ScoresGroupByObservedCategory) {
  const std::vector<double> y{-10, -20, -100, -300};
  const std::vector<double> p{-12, -20, -90, -300};
  const auto s = score_by_category(y, p);
  EXPECT_EQ(s[0].m, 2u);
  EXPECT_DOUBLE_EQ(s[0].rmse, std::sqrt(2.0));
  EXPECT_EQ(s[1].m, 1u);
  EXPECT_DOUBLE_EQ(s[1].rmse, 10.0);
  EXPECT_EQ(s[2].m, 1u);
  EXPECT_EQ(s[2].rmse, 0.0);
}

TEST(ReportCsv, RoundTrip) {
  std::vector<EvaluationReport> reports = {
      make_report("DSTT", "FULL", 3, 2, std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 2}),
      {"persistence", "-", 1, 0, 10, 0.1 + 0.2, -1.0 / 3.0}};
  std::stringstream ss;
  write_report_csv(ss, reports);
  EXPECT_EQ(ss.str().substr(0, kReportHeader.size()), kReportHeader);
  const auto back = read_report_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].method, "DSTT");
  EXPECT_EQ(back[0].m, 3u);
  EXPECT_DOUBLE_EQ(back[0].r2, 0.5);
  EXPECT_EQ(back[1].rmse, 0.1 + 0.2);
  EXPECT_EQ(back[1].r2, -1.0 / 3.0);
}

TEST(CvSummary, SampleStandardDeviation) {
  std::vector<CvFoldRun> runs;
  const double vals[] = {1.0, 2.0, 4.0};
  for (std::size_t i = 0; i < 3; ++i) {
    CvFoldRun r;
    r.fold = i + 1;
    r.report = {"DSTT", "FULL", 1, 0, 10, vals[i], 1.0 - vals[i] / 10};
    runs.push_back(r);
  }
  const auto s = summarize(runs);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].runs, 3u);
  EXPECT_DOUBLE_EQ(s[0].rmse_mean, 7.0 / 3.0);
  // deviations -4/3, -1/3, 5/3: squares sum to 42/9, over n-1 = 2
  EXPECT_DOUBLE_EQ(s[0].rmse_std, std::sqrt(42.0 / 18.0));
  EXPECT_DOUBLE_EQ(s[0].r2_std, std::sqrt(42.0 / 18.0) / 10);
}

TEST(Ablation, GridShapeAndDeterminism) {
  const auto records = data::synthesize_records(900, 3);
  model::DsttConfig c;
  c.sequence_length = 64;
  c.conv_filters = 4;
  c.lstm_units = 4;
  c.attention_heads = 2;
  c.head_size = 2;
  c.model_width = 4;
  c.dvl_units = 3;
  c.dense_head_units = 4;
  c.epochs = 1;
  c.learning_rate = 1e-3;
  AblationOptions opt;
  opt.horizons = {1, 4};
  opt.seeds = {0, 1};
  const auto a = run_ablation_suite(records, c, opt);
  EXPECT_TRUE(a.failures.empty());
  ASSERT_EQ(a.reports.size(), 7u * 2 * 2);
  EXPECT_EQ(a.baselines.size(), 4u);
  bool has_lm = false;
  for (const auto& r : a.reports) has_lm = has_lm || r.variant == "LM";
  EXPECT_TRUE(has_lm);
  const auto b = run_ablation_suite(records, c, opt);
  ASSERT_EQ(b.reports.size(), a.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].method, b.reports[i].method);
    EXPECT_EQ(a.reports[i].rmse, b.reports[i].rmse);
  }
}

TEST(Ablation, FailedRunIsRecordedNotFatal) {
  const auto records = data::synthesize_records(300, 3);
  model::DsttConfig c;
  c.sequence_length = 64;
  c.lstm_units = 4;
  c.epochs = 1;
  c.learning_rate = 1e300;
  AblationOptions opt;
  opt.horizons = {1};
  opt.variants = {model::AblationVariant::Full, model::AblationVariant::C};
  AblationResult r;
  EXPECT_NO_THROW(r = run_ablation_suite(records, c, opt));
  EXPECT_EQ(r.failures.size() + r.reports.size(), 2u);
  EXPECT_FALSE(r.failures.empty());
  EXPECT_EQ(r.baselines.size(), 2u);
}
