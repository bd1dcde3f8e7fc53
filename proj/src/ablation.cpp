#include "dstt/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dstt/errors.hpp"

namespace dstt::eval {

using model::AblationVariant;
using model::DsttConfig;

PreparedSplit prepare_split(const data::DatasetSplit& split, std::size_t n) {
  PreparedSplit p;
  p.stats = data::NormalizationStats::compute(split.train);
  p.train = data::standardize(split.train, p.stats);
  p.test = data::standardize(split.test, p.stats);
  p.train_sequences = data::make_sequences(p.train, n);
  p.test_sequences = data::make_sequences(p.test, n);
  return p;
}

std::vector<double> labels_of(std::span<const data::LabeledRecord> records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<double> fit_and_predict(const DsttConfig& config, const PreparedSplit& split, int w, std::uint64_t seed) {
  DsttConfig c = config;
  c.seed = seed;
  Rng init(seed);
  model::DsttModel m = model::build_model(c, init);
  m.horizon = w;
  m.feature_stats = split.stats;
  Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(w)));
  model::train(m, split.train_sequences, rng);
  return model::predict_point(m, split.test_sequences);
}

namespace {

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::vector<EvaluationReport> baseline_reports(const data::DatasetSplit& raw, const PreparedSplit& p, int w,
                                               std::uint64_t seed) {
  const auto y = labels_of(p.test);
  std::vector<EvaluationReport> out;
  out.push_back(make_report("persistence", "-", w, seed, y, persistence_forecast(raw.test, w)));
  LinearRegression lr;
  lr.fit(p.train);
  out.push_back(make_report("linear", "-", w, seed, y, lr.predict(p.test)));
  return out;
}

}  // namespace

AblationResult run_ablation_suite(std::span<const data::SolarWindRecord> records, const DsttConfig& base,
                                  const AblationOptions& options) {
  DsttConfig config = base;
  config.uq_enabled = false;
  config.heteroscedastic = false;
  config.validate();
  const data::CleanResult cleaned = data::clean_missing(records, options.max_gap);
  AblationResult result;
  for (int w : options.horizons) {
    const auto labeled = data::label_segments(cleaned.segments, w);
    const data::DatasetSplit split = data::fraction_split(labeled, options.test_fraction);
    const PreparedSplit prepared = prepare_split(split, config.sequence_length);
    const auto y = labels_of(prepared.test);
    for (const auto& b : baseline_reports(split, prepared, w, 0)) result.baselines.push_back(b);
    for (AblationVariant v : options.variants) {
      for (std::uint64_t seed : options.seeds) {
        const std::string tag = model::variant_name(v) + " w=" + std::to_string(w) + " seed=" + std::to_string(seed);
        try {
          DsttConfig c = config;
          c.variant = v;
          const auto pred = fit_and_predict(c, prepared, w, seed);
          result.reports.push_back(make_report(model::variant_name(v), model::variant_code(v), w, seed, y, pred));
          say(options.log, tag + " rmse=" + data::format_double(result.reports.back().rmse));
        } catch (const Error& e) {
          result.failures.push_back(tag + ": " + e.what());
          say(options.log, tag + " failed: " + e.what());
        }
      }
    }
  }
  return result;
}

std::vector<CvSummary> summarize(std::span<const CvFoldRun> runs) {
  std::vector<CvSummary> out;
  for (const CvFoldRun& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CvSummary& s) {
      return s.method == r.report.method && s.w == r.report.w;
    });
    if (it == out.end()) {
      out.push_back(CvSummary{r.report.method, r.report.w});
      it = out.end() - 1;
    }
    ++it->runs;
    it->rmse_mean += r.report.rmse;
    it->r2_mean += r.report.r2;
  }
  for (CvSummary& s : out) {
    const auto n = static_cast<double>(s.runs);
    s.rmse_mean /= n;
    s.r2_mean /= n;
    double rmse_ss = 0.0, r2_ss = 0.0;
    for (const CvFoldRun& r : runs) {
      if (r.report.method != s.method || r.report.w != s.w) continue;
      rmse_ss += (r.report.rmse - s.rmse_mean) * (r.report.rmse - s.rmse_mean);
      r2_ss += (r.report.r2 - s.r2_mean) * (r.report.r2 - s.r2_mean);
    }
    s.rmse_std = s.runs > 1 ? std::sqrt(rmse_ss / (n - 1.0)) : 0.0;
    s.r2_std = s.runs > 1 ? std::sqrt(r2_ss / (n - 1.0)) : 0.0;
  }
  return out;
}

CvResult run_cross_validation(std::span<const data::SolarWindRecord> records, const DsttConfig& base,
                              const CvOptions& options) {
  base.validate();
  const data::CleanResult cleaned = data::clean_missing(records, options.max_gap);
  const auto labeled = data::label_segments(cleaned.segments, options.w);
  const auto splits = data::kfold_splits(labeled, options.folds);
  CvResult result;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    const data::DatasetSplit& split = splits[i];
    const PreparedSplit prepared = prepare_split(split, base.sequence_length);
    const auto y = labels_of(prepared.test);
    const std::uint64_t seed = Rng::derive_seed(options.seed, i);
    auto add = [&](EvaluationReport r) {
      r.seed = options.seed;
      result.runs.push_back(CvFoldRun{i + 1, split.test.front().time, split.test.back().time, std::move(r)});
    };
    try {
      add(make_report(model::variant_name(base.variant), model::variant_code(base.variant), options.w, options.seed, y,
                      fit_and_predict(base, prepared, options.w, seed)));
    } catch (const Error& e) {
      result.failures.push_back("fold " + std::to_string(i + 1) + ": " + e.what());
    }
    for (auto& b : baseline_reports(split, prepared, options.w, options.seed)) add(std::move(b));
    say(options.log, "fold " + std::to_string(i + 1) + "/" + std::to_string(splits.size()) + " done");
  }
  result.summary = summarize(result.runs);
  return result;
}

void write_cv_summary_csv(std::ostream& out, std::span<const CvSummary> summary) {
  out << kCvSummaryHeader << '\n';
  for (const auto& s : summary) {
    out << s.method << ',' << s.w << ',' << s.runs << ',' << data::format_double(s.rmse_mean) << ','
        << data::format_double(s.rmse_std) << ',' << data::format_double(s.r2_mean) << ','
        << data::format_double(s.r2_std) << '\n';
  }
}

void write_cv_folds_csv(std::ostream& out, std::span<const CvFoldRun> runs) {
  out << kCvFoldHeader << '\n';
  for (const auto& r : runs) {
    out << r.fold << ',' << r.report.method << ',' << r.report.w << ',' << r.report.m << ','
        << data::format_double(r.report.rmse) << ',' << data::format_double(r.report.r2) << ','
        << r.test_start.iso() << ',' << r.test_end.iso() << '\n';
  }
}

}  // namespace dstt::eval
