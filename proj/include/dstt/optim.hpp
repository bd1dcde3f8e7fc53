#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "dstt/autodiff.hpp"

namespace dstt::ad {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are keyed by parameter id and created on
/// the first step that sees a parameter.
class AdamState {
public:
  struct Moments {
    Tensor first;
    Tensor second;
  };

  explicit AdamState(AdamOptions options = {}) : options_(options) {}

  /// Applies one update using each parameter's `grad`. Non-trainable
  /// parameters are skipped. Throws DivergenceError on a non-finite gradient.
  void step(std::span<Parameter* const> params);

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  const Moments& moments(const std::string& id) const;
  const std::map<std::string, Moments>& all_moments() const noexcept { return moments_; }

private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace dstt::ad
