// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations used by the unit and acceptance
// tests. They deliberately avoid the library's own helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "fedseq/optim.hpp"
#include "fedseq/recurrent.hpp"

namespace fedseq::oracle {

// Straight from 2 s_xy / (s_x^2 + s_y^2 + (mean_x - mean_y)^2), population moments.
inline double ccc_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  return 2 * sxy / (sxx + syy + (mx - my) * (mx - my));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences on the MSE loss against backward().
inline GradCheck finite_difference_check(const ParameterSet& params, const NetworkConfig& config, const Tensor& x,
                                         const Tensor& y, double eps = 1e-4) {
  auto fwd = forward(params, config, x);
  const LossResult loss = mse_loss(fwd.prediction, y);
  const ParameterSet grad = backward(params, config, std::move(fwd.tape), loss.grad);
  GradCheck out;
  ParameterSet probe = params;
  for (std::size_t e = 0; e < probe.size(); ++e) {
    for (std::size_t j = 0; j < probe.values(e).size(); ++j) {
      const double orig = probe.values(e)[j];
      probe.values(e)[j] = orig + eps;
      const double up = mse_loss(predict(probe, config, x), y).loss;
      probe.values(e)[j] = orig - eps;
      const double down = mse_loss(predict(probe, config, x), y).loss;
      probe.values(e)[j] = orig;
      const double fd = (up - down) / (2 * eps);
      const double an = grad.values(e)[j];
      const double rel = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace fedseq::oracle
