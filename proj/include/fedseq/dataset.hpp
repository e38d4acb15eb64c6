// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedseq/optim.hpp"
#include "fedseq/tensor.hpp"

namespace fedseq {

class Rng;

inline constexpr std::size_t kAnnotatorCount = 6;
inline constexpr double kLabelStep = 0.01;

/// One participant's recording: N frames of F features plus per-frame
/// (valence, arousal) labels in [-1, 1].
struct FeatureSequence {
  std::string participant_id;
  Tensor frames;  // [N, F]
  Tensor labels;  // [N, 2]
  double frame_period_ms = 40.0;

  std::size_t frame_count() const { return frames.rows(); }
  std::size_t feature_count() const { return frames.cols(); }
  void validate() const;
};

/// Reads features/<id>.csv and the six annotator traces per dimension under
/// labels_dir (valence_<a>.csv, arousal_<a>.csv for a in 1..6). Labels are
/// the per-frame mean of the annotators.
FeatureSequence load_participant(const std::filesystem::path& features_path,
                                 const std::filesystem::path& labels_dir);

/// Loads every participant found under root/features, sorted by id.
std::vector<FeatureSequence> load_dataset(const std::filesystem::path& root);

/// Writes the on-disk layout read by load_dataset. Annotator traces are the
/// label plus zero-sum jitter on the label grid, derived from jitter_seed.
void write_dataset(const std::filesystem::path& root, const std::vector<FeatureSequence>& sequences,
                   std::uint64_t jitter_seed = 0);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  /// Participants whose frames produced the statistics.
  std::vector<std::string> sources;

  bool uses_participant(const std::string& id) const;
};

NormalizationStats fit_normalizer(const std::vector<FeatureSequence>& train);
FeatureSequence apply_normalizer(const NormalizationStats& stats, const FeatureSequence& seq);

/// Windows at offsets 0, stride, 2*stride, ...; a trailing remainder shorter
/// than length is dropped. length > N yields no windows.
std::vector<Window> window(const FeatureSequence& seq, std::size_t length, std::size_t stride);

/// Non-overlapping windows covering every frame; the last may be shorter.
std::vector<Window> cover_windows(const FeatureSequence& seq, std::size_t length);

struct FoldPlan {
  std::vector<std::vector<std::string>> folds;

  std::size_t size() const { return folds.size(); }
  /// All participants outside the given fold, sorted.
  std::vector<std::string> training_participants(std::size_t fold) const;
  /// Throws unless folds partition exactly the given participants.
  void validate_partition(const std::vector<std::string>& participants) const;
};

/// Seeded shuffle followed by round-robin assignment into k folds. Each fold
/// is returned sorted.
FoldPlan plan_folds(const std::vector<std::string>& participants, std::size_t k, Rng& rng);

/// Ground truth of the synthetic generator. Features are
///   x[t][f] = baseline[f] + offset_p[f] + scale[f] * (mixing z_t)[f] + noise,
/// with z_t an AR(1) latent process. With u[t][f] = (x[t][f] - baseline[f]) / scale[f],
///   label_d[t] = tanh(bias_d + sum_{lag,f} weight_d[lag][f] * u[max(t-lag,0)][f]) + noise,
/// clamped to [-1, 1] and rounded to the 0.01 grid.
struct SyntheticTruth {
  std::size_t features = 40;
  std::size_t latents = 6;
  std::size_t lags = 4;
  std::vector<double> baseline;      // [F]
  std::vector<double> scale;         // [F]
  std::vector<double> mixing;        // [F, K] row-major
  std::vector<double> valence_w;     // [lags, F] row-major
  std::vector<double> arousal_w;     // [lags, F]
  double valence_bias = 0.0;
  double arousal_bias = 0.0;
  double label_noise = 0.02;
  double feature_noise = 0.05;
};

SyntheticTruth synthetic_truth(std::uint64_t seed, std::size_t n_features = 40);

/// Participants are named P01, P02, ...
std::vector<FeatureSequence> generate_synthetic(std::size_t n_participants, std::size_t n_frames,
                                                std::uint64_t seed, std::size_t n_features = 40);

/// Rounds to the nearest multiple of the 0.01 label step.
double quantize_label(double value);

}  // namespace fedseq
