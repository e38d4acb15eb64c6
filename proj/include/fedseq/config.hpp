// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedseq/federation.hpp"
#include "fedseq/recurrent.hpp"

namespace fedseq {

enum class ExperimentMode { CentralAu, Federated };
enum class CccPooling { PooledPerFold, PerParticipant };
enum class Normalization { TrainingFold, PerParticipant };

std::string to_string(ExperimentMode mode);
std::string to_string(CccPooling pooling);
std::string to_string(Normalization normalization);

/// Everything needed to replay an experiment. Serialises to the flat
/// `key = value` file format read by parse(); lines starting with '#' are
/// comments.
struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::CentralAu;
  NetworkConfig network;
  std::size_t k_folds = 8;
  std::size_t epochs = 100;
  std::size_t epochs_per_round = 1;
  std::uint64_t seed = 0;
  std::size_t window_stride = 0;  // 0: same as sequence_length
  AggregationRule aggregation = AggregationRule::Mean;
  OptimizerStatePolicy optimizer_state = OptimizerStatePolicy::Persistent;
  CccPooling ccc_pooling = CccPooling::PooledPerFold;
  Normalization normalization = Normalization::TrainingFold;
  double clip_norm = 5.0;
  std::string data_dir;
  std::string output;
  std::string report_format = "text";
  std::string checkpoint;
  std::size_t fold_threads = 1;
  bool threaded_clients = false;
  std::uint64_t round_timeout_ms = 600000;
  std::size_t federated_clients = 0;
  bool paper_grid = false;

  std::size_t stride() const { return window_stride == 0 ? network.sequence_length : window_stride; }
  std::uint32_t rounds() const;
  std::chrono::milliseconds round_timeout() const { return std::chrono::milliseconds(round_timeout_ms); }
  std::string method_label() const;

  /// Sets one key from its textual value; throws on unknown keys.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  /// Canonical text form; parse(to_text()) reproduces the config exactly.
  std::string to_text() const;
  static ExperimentConfig parse(const std::string& text);
  /// Reads a config file and applies the FEDSEQ_SEED override.
  static ExperimentConfig load(const std::filesystem::path& path);

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Replaces the seed with $FEDSEQ_SEED when that variable is set.
void apply_environment(ExperimentConfig& config);

/// Checks network and protocol values against the published search grid.
/// Hard violations throw; soft ones (image-branch sequence lengths, k or
/// epoch counts other than the published protocol) are returned as warnings.
std::vector<std::string> validate_paper_grid(const ExperimentConfig& config);

/// The published optimum per architecture, AU and federated branches.
std::vector<ExperimentConfig> paper_optima(const ExperimentConfig& base);

/// Full Cartesian product of the AU search grid.
std::vector<ExperimentConfig> paper_search_grid(const ExperimentConfig& base);

}  // namespace fedseq
