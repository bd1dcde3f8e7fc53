#include "dstt/optim.hpp"

#include <cmath>

#include "dstt/errors.hpp"

namespace dstt::ad {

void AdamState::step(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape()) {
      throw DimensionError("adam: gradient of '" + p->id + "' has shape " +
                           shape_string(p->grad.shape()) + ", parameter has " +
                           shape_string(p->value.shape()));
    }
    if (!p->grad.all_finite()) {
      throw DivergenceError("adam: non-finite gradient for parameter '" + p->id + "'");
    }
    auto it = moments_.find(p->id);
    if (it != moments_.end() && it->second.first.shape() != p->value.shape()) {
      throw DimensionError("adam: moment shape mismatch for parameter '" + p->id + "'");
    }
  }

  ++step_;
  const auto t = static_cast<double>(step_);
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  const double lr = options_.learning_rate;

  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [it, inserted] = moments_.try_emplace(p->id);
    Moments& m = it->second;
    if (inserted) {
      m.first = Tensor::zeros_like(p->value);
      m.second = Tensor::zeros_like(p->value);
    }
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * g;
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * g * g;
      const double m_hat = m.first[i] / correction1;
      const double v_hat = m.second[i] / correction2;
      p->value[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

const AdamState::Moments& AdamState::moments(const std::string& id) const {
  auto it = moments_.find(id);
  if (it == moments_.end()) throw ContractError("adam: no moments for parameter '" + id + "'");
  return it->second;
}

}  // namespace dstt::ad
