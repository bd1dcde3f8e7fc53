#pragma once

// Monte-Carlo prediction: K stochastic passes (fresh variational weights and
// dropout masks each pass) and the split of predictive variance into an
// aleatoric part (mean of per-pass variances) and an epistemic part
// (variance of per-pass means).

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dstt/data.hpp"
#include "dstt/model.hpp"

namespace dstt::uq {

struct McConfig {
  std::size_t samples = 100;  // K
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  /// Allow a model without a variance head; aleatoric variance is then zero.
  bool epistemic_only = false;

  void validate() const;
};

/// K x m grid, row k = pass k.
struct McSamples {
  std::size_t passes = 0;
  std::size_t records = 0;
  std::vector<double> means;      // nT
  std::vector<double> variances;  // nT^2; all zero in epistemic-only mode

  double mean(std::size_t k, std::size_t i) const { return means[k * records + i]; }
  double variance(std::size_t k, std::size_t i) const { return variances[k * records + i]; }
};

struct ForecastDistribution {
  std::vector<double> mean;
  std::vector<double> aleatoric;
  std::vector<double> epistemic;
  std::vector<double> total;

  std::size_t size() const noexcept { return mean.size(); }
};

/// Pass k draws from Rng(derive_seed(cfg.seed, k)), so the grid does not
/// depend on the thread count.
McSamples mc_predict(const model::DsttModel& model, std::span<const data::Sequence> sequences,
                     const McConfig& cfg);

/// Throws ContractError on a negative variance or fewer than two passes.
ForecastDistribution decompose_variance(const McSamples& samples);

enum class Component { Aleatoric, Epistemic, Total };

/// mean -+ z * sqrt(selected variance).
std::pair<std::vector<double>, std::vector<double>> interval_bounds(const ForecastDistribution& dist, double z,
                                                                    Component component);

}  // namespace dstt::uq
