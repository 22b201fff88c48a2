#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "spliceguard/nn/tensor.hpp"

namespace spliceguard::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

template <class S>
struct AdamState {
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  std::int64_t step = 0;
};

/// Adam with bias correction.
template <class S>
class Adam {
 public:
  explicit Adam(const ParameterSet<S>& params, AdamConfig cfg = {}) : cfg_(cfg) {
    for (const auto& p : params) {
      state_.m.emplace_back(p.value.shape);
      state_.v.emplace_back(p.value.shape);
    }
  }

  Adam(const ParameterSet<S>& params, AdamState<S> state, AdamConfig cfg = {}) : cfg_(cfg), state_(std::move(state)) {
    require(state_.m.size() == params.size() && state_.v.size() == params.size(), ErrorKind::argument,
            "adam: optimizer state does not match parameter set");
    for (std::size_t i = 0; i < params.size(); ++i)
      require(state_.m[i].shape == params[i].value.shape && state_.v[i].shape == params[i].value.shape,
              ErrorKind::argument, "adam: moment shape mismatch for " + params[i].name);
  }

  void step(ParameterSet<S>& params, const Gradients<S>& grads, double lr) {
    require(grads.grads.size() == params.size(), ErrorKind::argument, "adam: gradient count mismatch");
    ++state_.step;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.step));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.step));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& value = params[i].value.data;
      auto& m = state_.m[i].data;
      auto& v = state_.v[i].data;
      const auto& g = grads.grads[i].data;
      for (std::size_t j = 0; j < value.size(); ++j) {
        m[j] = b1 * m[j] + (S(1) - b1) * g[j];
        v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        value[j] -= static_cast<S>(lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
      }
    }
  }

  const AdamState<S>& state() const { return state_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  AdamState<S> state_;
};

/// Noam schedule scaled so the peak (at step == warmup) equals `peak_lr`:
/// lr = scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
inline double noam_lr(std::int64_t step, std::int64_t warmup, double peak_lr, int d_model = 128) {
  require(step >= 1, ErrorKind::argument, "noam_lr: step must be >= 1");
  require(warmup >= 1 && d_model >= 1, ErrorKind::argument, "noam_lr: warmup and d_model must be >= 1");
  const double d = static_cast<double>(d_model);
  const double w = static_cast<double>(warmup);
  const double s = static_cast<double>(step);
  const double scale = peak_lr * std::sqrt(d) * std::sqrt(w);
  return scale / std::sqrt(d) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

}  // namespace spliceguard::nn
