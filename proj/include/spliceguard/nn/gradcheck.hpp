#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "spliceguard/nn/tape.hpp"
#include "spliceguard/rng.hpp"

namespace spliceguard::nn {

struct GradCheckOptions {
  double delta = 1e-4;
  // Coordinates are sampled when the model has more elements than this.
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compare reverse-mode gradients with central differences.
///
/// `loss(tape, params)` must record a scalar on `tape` and return it. Error
/// per coordinate is |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
template <class LossFn>
GradCheckResult finite_difference_check(ParameterSet<double>& params, LossFn&& loss, GradCheckOptions opts = {}) {
  GradCheckResult result;
  if (params.element_count() == 0) return result;

  Gradients<double> grads(params);
  {
    Tape<double> tape;
    Var<double> root = loss(tape, params);
    require(root.value().size() == 1, ErrorKind::argument, "gradient check needs a scalar loss");
    tape.backward(root, grads);
  }
  auto eval = [&]() {
    Tape<double> tape(false);
    return loss(tape, params).value()[0];
  };

  const std::size_t total = params.element_count();
  Rng rng(opts.seed);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& data = params[p].value.data;
    if (data.empty()) continue;
    std::vector<std::size_t> coords;
    if (total <= opts.max_coords) {
      coords.resize(data.size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
      // Proportional share, at least a few per tensor.
      const double share = static_cast<double>(opts.max_coords) * data.size() / total;
      const std::size_t k = std::min(data.size(), std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(share))));
      coords = rng.sample_without_replacement(data.size(), k);
    }
    for (std::size_t idx : coords) {
      const double saved = data[idx];
      data[idx] = saved + opts.delta;
      const double up = eval();
      data[idx] = saved - opts.delta;
      const double down = eval();
      data[idx] = saved;
      const double numeric = (up - down) / (2.0 * opts.delta);
      const double analytic = grads.grads[p][idx];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      ++result.coords_checked;
      if (err > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = std::max(err, result.max_rel_error);
        result.worst_param = params[p].name;
        result.worst_index = idx;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace spliceguard::nn
