// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "fedseq/parameter_set.hpp"
#include "fedseq/recurrent.hpp"
#include "fedseq/tensor.hpp"

namespace fedseq {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d y_hat
};

/// loss = sum((y_hat - y)^2) / (2T) over T rows and all output columns;
/// grad = (y_hat - y) / T.
LossResult mse_loss(const Tensor& y_hat, const Tensor& y);

struct AdamState {
  ParameterSet m;
  ParameterSet v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;

  static AdamState for_params(const ParameterSet& params, double learning_rate);
};

/// One bias-corrected Adam update, in place.
void adam_step(ParameterSet& params, const ParameterSet& grad, AdamState& state);

/// Rescales grad so its global L2 norm is at most max_norm. Returns the norm
/// before clipping.
double clip_global_norm(ParameterSet& grad, double max_norm);

struct Window {
  Tensor features;  // [T, F]
  Tensor labels;    // [T, outputs]
};

struct TrainOptions {
  double clip_norm = 5.0;
};

/// forward, mse_loss, backward, clip, adam_step on a single sequence.
/// Returns the loss before the update.
double train_step(ParameterSet& params, const NetworkConfig& config, AdamState& state, const Window& window,
                  const TrainOptions& options = {});

/// One pass over windows in the given order; returns the mean loss.
double train_epoch(ParameterSet& params, const NetworkConfig& config, AdamState& state,
                   const std::vector<Window>& windows, const TrainOptions& options = {});

/// Mean loss over windows without updating anything.
double evaluate_loss(const ParameterSet& params, const NetworkConfig& config, const std::vector<Window>& windows);

}  // namespace fedseq
