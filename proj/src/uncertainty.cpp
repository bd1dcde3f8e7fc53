#include "dstt/uncertainty.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "dstt/errors.hpp"

namespace dstt::uq {

void McConfig::validate() const {
  if (samples < 2) throw ConfigError("invalid config field 'mc_samples': K must be at least 2");
  if (threads < 1) throw ConfigError("invalid config field 'threads': must be >= 1");
}

McSamples mc_predict(const model::DsttModel& model, std::span<const data::Sequence> sequences,
                     const McConfig& cfg) {
  cfg.validate();
  if (!model.config().heteroscedastic && !cfg.epistemic_only) {
    throw ContractError(
        "aleatoric variance unavailable: the model has no variance head (enable epistemic-only mode to proceed)");
  }
  McSamples out;
  out.passes = cfg.samples;
  for (const auto& s : sequences) out.records += s.length();
  out.means.assign(out.passes * out.records, 0.0);
  out.variances.assign(out.passes * out.records, 0.0);

  auto run_pass = [&](std::size_t k) {
    Rng rng(Rng::derive_seed(cfg.seed, k));
    std::size_t offset = k * out.records;
    for (const auto& s : sequences) {
      const model::Prediction p = model.predict(s.features, layers::Mode::MonteCarlo, &rng);
      for (std::size_t i = 0; i < p.mean.size(); ++i) {
        out.means[offset + i] = p.mean[i];
        if (!p.logvar.empty()) out.variances[offset + i] = std::exp(p.logvar[i]);
      }
      offset += p.mean.size();
    }
  };

  const std::size_t workers = std::min(cfg.threads, cfg.samples);
  if (workers <= 1) {
    for (std::size_t k = 0; k < cfg.samples; ++k) run_pass(k);
    return out;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < cfg.samples; k += workers) run_pass(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

ForecastDistribution decompose_variance(const McSamples& samples) {
  const std::size_t K = samples.passes, m = samples.records;
  if (K < 2) throw ContractError("variance decomposition needs at least two samples");
  if (samples.means.size() != K * m || samples.variances.size() != K * m) {
    throw ContractError("sample grid does not match its stated shape");
  }
  ForecastDistribution d;
  d.mean.resize(m);
  d.aleatoric.resize(m);
  d.epistemic.resize(m);
  d.total.resize(m);
  const auto k_count = static_cast<double>(K);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0, alea = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double v = samples.variance(k, i);
      if (!(v >= 0.0)) {
        throw ContractError("negative predictive variance at pass " + std::to_string(k) + ", record " +
                            std::to_string(i));
      }
      mu += samples.mean(k, i);
      alea += v;
    }
    mu /= k_count;
    double epi = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double dev = samples.mean(k, i) - mu;
      epi += dev * dev;
    }
    d.mean[i] = mu;
    d.aleatoric[i] = alea / k_count;
    d.epistemic[i] = epi / k_count;
    d.total[i] = d.aleatoric[i] + d.epistemic[i];
  }
  return d;
}

std::pair<std::vector<double>, std::vector<double>> interval_bounds(const ForecastDistribution& dist, double z,
                                                                    Component component) {
  if (!(z > 0.0)) throw ContractError("interval multiplier must be positive");
  const std::vector<double>& var = component == Component::Aleatoric   ? dist.aleatoric
                                   : component == Component::Epistemic ? dist.epistemic
                                                                       : dist.total;
  std::pair<std::vector<double>, std::vector<double>> out;
  out.first.resize(dist.size());
  out.second.resize(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double half = z * std::sqrt(var[i]);
    out.first[i] = dist.mean[i] - half;
    out.second[i] = dist.mean[i] + half;
  }
  return out;
}

}  // namespace dstt::uq
