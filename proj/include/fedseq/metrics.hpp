// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace fedseq {

/// Pearson correlation with population moments. Throws ErrorCode::Degenerate
/// if either series is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Concordance correlation coefficient,
///   2 cov(x, y) / (var x + var y + (mean x - mean y)^2),
/// with population moments. Throws ErrorCode::Degenerate when the
/// denominator is zero.
double ccc(std::span<const double> x, std::span<const double> y);

struct MetricReport {
  double valence_ccc = 0.0;
  double arousal_ccc = 0.0;
  double valence_pearson = 0.0;
  double arousal_pearson = 0.0;
  std::size_t n_frames = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Metrics over paired (prediction, label) columns. Column 0 is valence,
/// column 1 arousal.
MetricReport evaluate_series(std::span<const double> valence_pred, std::span<const double> valence_true,
                             std::span<const double> arousal_pred, std::span<const double> arousal_true);

}  // namespace fedseq
