// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedseq/config.hpp"
#include "fedseq/dataset.hpp"
#include "fedseq/metrics.hpp"
#include "fedseq/parameter_set.hpp"
#include "fedseq/transport.hpp"

namespace fedseq {

/// "fedseq <version> (git <rev>, <compiler>)".
std::string build_fingerprint();

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::string> eval_participants;
  std::vector<std::string> train_participants;
  MetricReport metrics;
  double train_seconds = 0.0;
  std::size_t clients = 1;
  /// Federated runs execute clients one after another; this is the training
  /// time divided by the number of clients, i.e. what parallel clients would
  /// have taken. Equal to train_seconds for central runs.
  double parallel_seconds = 0.0;
  double inference_100_seconds = 0.0;
  double inference_500_seconds = 0.0;

  friend bool operator==(const FoldResult&, const FoldResult&) = default;
};

/// Summary of one cross-validation run. The constructor rejects an empty
/// fold list and computes the means, so a RunReport is always complete.
class RunReport {
 public:
  RunReport(std::string method, std::string network, std::vector<FoldResult> folds, double wall_seconds,
            std::string config_text, std::string build, std::vector<std::string> warnings = {});

  const std::string& method() const noexcept { return method_; }    // Level1-AU or Level2-FL
  const std::string& network() const noexcept { return network_; }  // e.g. BiGRU
  const std::vector<FoldResult>& folds() const noexcept { return folds_; }
  double wall_seconds() const noexcept { return wall_seconds_; }
  const std::string& config_text() const noexcept { return config_text_; }
  const std::string& build() const noexcept { return build_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  double mean_valence_ccc() const noexcept { return mean_valence_ccc_; }
  double mean_arousal_ccc() const noexcept { return mean_arousal_ccc_; }
  double total_train_seconds() const noexcept { return total_train_seconds_; }
  /// Sum over folds of train_seconds / clients.
  double simulated_parallel_seconds() const noexcept { return simulated_parallel_seconds_; }
  double mean_inference_100_seconds() const noexcept { return mean_inference_100_seconds_; }
  double mean_inference_500_seconds() const noexcept { return mean_inference_500_seconds_; }

  friend bool operator==(const RunReport&, const RunReport&) = default;

 private:
  std::string method_;
  std::string network_;
  std::vector<FoldResult> folds_;
  double wall_seconds_ = 0.0;
  std::string config_text_;
  std::string build_;
  std::vector<std::string> warnings_;
  double mean_valence_ccc_ = 0.0;
  double mean_arousal_ccc_ = 0.0;
  double total_train_seconds_ = 0.0;
  double simulated_parallel_seconds_ = 0.0;
  double mean_inference_100_seconds_ = 0.0;
  double mean_inference_500_seconds_ = 0.0;
};

enum class ReportFormat { Text, Csv, JsonLines };
ReportFormat parse_report_format(const std::string& text);
std::string format_report(const RunReport& report, ReportFormat format);
/// Inverse of format_report(..., JsonLines).
RunReport parse_report_jsonl(const std::string& text);

/// Normalised train/eval data for one fold.
struct FoldData {
  std::vector<std::string> train_ids;
  std::vector<std::string> eval_ids;
  std::vector<FeatureSequence> train;
  std::vector<FeatureSequence> eval;
  /// Present for training-fold normalisation.
  std::optional<NormalizationStats> stats;
};

/// Splits and normalises one fold, then audits it: train and eval
/// participants must be disjoint and the normalisation statistics must come
/// from training participants only. A failed audit throws ErrorCode::Internal.
FoldData prepare_fold(const std::vector<FeatureSequence>& data, const FoldPlan& plan, std::size_t fold,
                      Normalization normalization);

/// Normalises each sequence with statistics fitted on its own frames.
std::vector<FeatureSequence> normalize_per_participant(const std::vector<FeatureSequence>& data);

struct TrainedModel {
  ParameterSet params;
  NetworkConfig network;
  double train_seconds = 0.0;
  std::size_t clients = 1;
};

/// Training windows of one participant under the experiment's window settings.
std::vector<Window> training_windows(const ExperimentConfig& config, const FeatureSequence& seq);

using EpochObserver = std::function<void(std::size_t epoch, double mean_loss, const ParameterSet& params)>;

/// Pooled training: one Adam state over the windows of every participant, in
/// participant order, for config.epochs epochs.
TrainedModel train_central(const ExperimentConfig& config, const std::vector<FeatureSequence>& train,
                           std::uint64_t init_seed, const EpochObserver& on_epoch = {});

/// One client per training participant, run over the simulated transport.
TrainedModel train_federated(const ExperimentConfig& config, const std::vector<FeatureSequence>& train,
                             std::uint64_t init_seed, const RoundObserver& on_round = {},
                             const MessageObserver& on_message = {});

/// Frame-level predictions over non-overlapping windows covering the sequence.
Tensor predict_sequence(const ParameterSet& params, const NetworkConfig& network, const FeatureSequence& seq);

/// CCC and Pearson on already normalised sequences. Pooled concatenates
/// every frame; per-participant averages the per-participant metrics.
MetricReport evaluate_model(const ParameterSet& params, const NetworkConfig& network,
                            const std::vector<FeatureSequence>& eval, CccPooling pooling);

/// Median wall time of five predictions over n_frames frames.
double time_inference(const ParameterSet& params, const NetworkConfig& network, std::size_t n_frames);

/// Seed for the initial weights of a fold.
std::uint64_t fold_init_seed(std::uint64_t seed, std::size_t fold);
FoldPlan make_fold_plan(const std::vector<FeatureSequence>& data, std::size_t k, std::uint64_t seed);

/// Participant-wise k-fold CV, central or federated (simulated transport).
RunReport run_cross_validation(const ExperimentConfig& config, const std::vector<FeatureSequence>& data);
/// Same, loading config.data_dir.
RunReport run_cross_validation(const ExperimentConfig& config);

/// A trained model plus what is needed to evaluate it on new recordings.
struct Checkpoint {
  NetworkConfig network;
  Normalization normalization = Normalization::TrainingFold;
  std::optional<NormalizationStats> stats;
  ParameterSet params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Evaluates a checkpoint on every participant of a dataset directory.
MetricReport evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<FeatureSequence>& data,
                                 CccPooling pooling);

/// TCP parameter server: waits for config.federated_clients clients, runs
/// config.rounds() rounds and returns the final model. ready(port) is called
/// once the socket is listening.
Checkpoint serve_federated(const ExperimentConfig& config, const std::string& listen_address,
                           const std::function<void(std::uint16_t)>& ready = {});

/// TCP client for one participant of a dataset directory. Without a config,
/// the architecture is taken from the first GLOBAL message and the other
/// settings keep their defaults. Returns the number of rounds trained.
std::uint32_t run_federated_client(const std::string& server_address, const std::string& participant_id,
                                   const std::filesystem::path& data_dir,
                                   const std::optional<ExperimentConfig>& config);

}  // namespace fedseq
