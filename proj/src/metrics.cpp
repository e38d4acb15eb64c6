// SPDX-License-Identifier: Apache-2.0
#include "fedseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedseq/error.hpp"

namespace fedseq {
namespace {

struct Moments {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;
  double cov = 0.0;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::ShapeMismatch,
          "series lengths differ: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  require(x.size() >= 2, ErrorCode::InvalidArgument, "correlation needs at least two samples");
  const double n = static_cast<double>(x.size());
  Moments m;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mean_x += x[i];
    m.mean_y += y[i];
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov += dx * dy;
  }
  m.var_x /= n;
  m.var_y /= n;
  m.cov /= n;
  require(std::isfinite(m.var_x) && std::isfinite(m.var_y) && std::isfinite(m.cov), ErrorCode::NonFinite,
          "series moments are not finite");
  return m;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  const Moments m = moments(x, y);
  if (m.var_x <= 0.0 || m.var_y <= 0.0) {
    fail(ErrorCode::Degenerate, "pearson correlation is undefined for a constant series");
  }
  const double r = m.cov / std::sqrt(m.var_x * m.var_y);
  return std::clamp(r, -1.0, 1.0);
}

double ccc(std::span<const double> x, std::span<const double> y) {
  const Moments m = moments(x, y);
  const double gap = m.mean_x - m.mean_y;
  const double denom = m.var_x + m.var_y + gap * gap;
  if (!(denom > 0.0)) fail(ErrorCode::Degenerate, "ccc is undefined: both series constant with equal means");
  return std::clamp(2.0 * m.cov / denom, -1.0, 1.0);
}

MetricReport evaluate_series(std::span<const double> valence_pred, std::span<const double> valence_true,
                             std::span<const double> arousal_pred, std::span<const double> arousal_true) {
  require(valence_pred.size() == arousal_pred.size(), ErrorCode::ShapeMismatch,
          "valence and arousal series differ in length");
  MetricReport r;
  r.n_frames = valence_pred.size();
  r.valence_ccc = ccc(valence_pred, valence_true);
  r.arousal_ccc = ccc(arousal_pred, arousal_true);
  r.valence_pearson = pearson(valence_pred, valence_true);
  r.arousal_pearson = pearson(arousal_pred, arousal_true);
  return r;
}

}  // namespace fedseq
