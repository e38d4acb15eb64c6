// SPDX-License-Identifier: Apache-2.0
#include "fedseq/optim.hpp"

#include <cmath>

#include "fedseq/error.hpp"

namespace fedseq {

LossResult mse_loss(const Tensor& y_hat, const Tensor& y) {
  require(y_hat.shape() == y.shape(), ErrorCode::ShapeMismatch,
          "mse_loss: " + shape_string(y_hat.shape()) + " vs " + shape_string(y.shape()));
  require(y_hat.rank() == 2, ErrorCode::ShapeMismatch, "mse_loss expects [T, outputs] matrices");
  require(y_hat.all_finite() && y.all_finite(), ErrorCode::NonFinite, "mse_loss inputs must be finite");
  const double steps = static_cast<double>(y_hat.rows());
  LossResult out{0.0, Tensor(y_hat.shape())};
  auto a = y_hat.data();
  auto b = y.data();
  auto g = out.grad.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - b[i];
    sum += r * r;
    g[i] = r / steps;
  }
  out.loss = sum / (2.0 * steps);
  require(std::isfinite(out.loss), ErrorCode::NonFinite, "mse_loss overflowed");
  return out;
}

AdamState AdamState::for_params(const ParameterSet& params, double learning_rate) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.learning_rate = learning_rate;
  return s;
}

void adam_step(ParameterSet& params, const ParameterSet& grad, AdamState& state) {
  require_same_layout(params, grad, "adam_step gradient");
  require_same_layout(params, state.m, "adam_step first moment");
  require_same_layout(params, state.v, "adam_step second moment");
  state.t += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto theta = params.values(e);
    auto g = grad.values(e);
    auto m = state.m.values(e);
    auto v = state.v.values(e);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_global_norm(ParameterSet& grad, double max_norm) {
  const double norm = global_norm(grad);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (std::size_t e = 0; e < grad.size(); ++e) {
      for (double& v : grad.values(e)) v *= factor;
    }
  }
  return norm;
}

double train_step(ParameterSet& params, const NetworkConfig& config, AdamState& state, const Window& window,
                  const TrainOptions& options) {
  ForwardResult fwd = forward(params, config, window.features);
  LossResult loss = mse_loss(fwd.prediction, window.labels);
  ParameterSet grad = backward(params, config, std::move(fwd.tape), loss.grad);
  clip_global_norm(grad, options.clip_norm);
  adam_step(params, grad, state);
  require(params.all_finite(), ErrorCode::NonFinite, "training diverged to non-finite weights");
  return loss.loss;
}

double train_epoch(ParameterSet& params, const NetworkConfig& config, AdamState& state,
                   const std::vector<Window>& windows, const TrainOptions& options) {
  double total = 0.0;
  for (const Window& w : windows) total += train_step(params, config, state, w, options);
  return windows.empty() ? 0.0 : total / static_cast<double>(windows.size());
}

double evaluate_loss(const ParameterSet& params, const NetworkConfig& config, const std::vector<Window>& windows) {
  double total = 0.0;
  for (const Window& w : windows) total += mse_loss(predict(params, config, w.features), w.labels).loss;
  return windows.empty() ? 0.0 : total / static_cast<double>(windows.size());
}

}  // namespace fedseq
