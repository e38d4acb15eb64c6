// SPDX-License-Identifier: Apache-2.0
#include "fedseq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "fedseq/error.hpp"
#include "fedseq/rng.hpp"

#ifndef FEDSEQ_VERSION
#define FEDSEQ_VERSION "0.0.0"
#endif
#ifndef FEDSEQ_GIT_REVISION
#define FEDSEQ_GIT_REVISION "unknown"
#endif

namespace fedseq {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string compiler_string() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown compiler";
#endif
}

// Rows [begin, begin + count) of a [N, C] tensor.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t cols = t.cols();
  auto src = t.data();
  std::vector<double> values(src.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                             src.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return Tensor({count, cols}, std::move(values));
}

Tensor predict_frames(const ParameterSet& params, const NetworkConfig& network, const Tensor& x) {
  const std::size_t n = x.rows();
  std::vector<double> out;
  out.reserve(n * network.outputs);
  for (std::size_t begin = 0; begin < n; begin += network.sequence_length) {
    const std::size_t count = std::min(network.sequence_length, n - begin);
    const Tensor y = predict(params, network, slice_rows(x, begin, count));
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return Tensor({n, network.outputs}, std::move(out));
}

MetricReport metrics_for(const Tensor& pred, const Tensor& labels) {
  const std::size_t n = pred.rows();
  std::vector<double> vp(n), vt(n), ap(n), at(n);
  for (std::size_t t = 0; t < n; ++t) {
    vp[t] = pred.at(t, 0);
    ap[t] = pred.at(t, 1);
    vt[t] = labels.at(t, 0);
    at[t] = labels.at(t, 1);
  }
  return evaluate_series(vp, vt, ap, at);
}

std::set<std::string> id_set(const std::vector<std::string>& ids) { return {ids.begin(), ids.end()}; }

}  // namespace

std::string build_fingerprint() {
  return std::string("fedseq ") + FEDSEQ_VERSION + " (git " + FEDSEQ_GIT_REVISION + ", " + compiler_string() + ")";
}

RunReport::RunReport(std::string method, std::string network, std::vector<FoldResult> folds, double wall_seconds,
                     std::string config_text, std::string build, std::vector<std::string> warnings)
    : method_(std::move(method)),
      network_(std::move(network)),
      folds_(std::move(folds)),
      wall_seconds_(wall_seconds),
      config_text_(std::move(config_text)),
      build_(std::move(build)),
      warnings_(std::move(warnings)) {
  require(!folds_.empty(), ErrorCode::InvalidArgument, "a run report needs at least one fold");
  for (const FoldResult& f : folds_) {
    mean_valence_ccc_ += f.metrics.valence_ccc;
    mean_arousal_ccc_ += f.metrics.arousal_ccc;
    total_train_seconds_ += f.train_seconds;
    simulated_parallel_seconds_ += f.parallel_seconds;
    mean_inference_100_seconds_ += f.inference_100_seconds;
    mean_inference_500_seconds_ += f.inference_500_seconds;
  }
  const double n = static_cast<double>(folds_.size());
  mean_valence_ccc_ /= n;
  mean_arousal_ccc_ /= n;
  mean_inference_100_seconds_ /= n;
  mean_inference_500_seconds_ /= n;
}

std::vector<FeatureSequence> normalize_per_participant(const std::vector<FeatureSequence>& data) {
  std::vector<FeatureSequence> out;
  out.reserve(data.size());
  for (const FeatureSequence& seq : data) out.push_back(apply_normalizer(fit_normalizer({seq}), seq));
  return out;
}

FoldData prepare_fold(const std::vector<FeatureSequence>& data, const FoldPlan& plan, std::size_t fold,
                      Normalization normalization) {
  require(fold < plan.size(), ErrorCode::InvalidArgument, "fold index out of range");
  FoldData out;
  out.train_ids = plan.training_participants(fold);
  out.eval_ids = plan.folds[fold];
  require(!out.train_ids.empty(), ErrorCode::InvalidArgument,
          "fold " + std::to_string(fold) + " leaves no training participants");

  const std::set<std::string> train_set = id_set(out.train_ids);
  for (const std::string& id : out.eval_ids) {
    require(!train_set.contains(id), ErrorCode::Internal,
            "leakage audit: participant " + id + " is in both train and eval of fold " + std::to_string(fold));
  }

  std::map<std::string, const FeatureSequence*> by_id;
  for (const FeatureSequence& seq : data) by_id[seq.participant_id] = &seq;
  auto lookup = [&](const std::string& id) -> const FeatureSequence& {
    auto it = by_id.find(id);
    require(it != by_id.end(), ErrorCode::InvalidArgument, "fold plan names unknown participant " + id);
    return *it->second;
  };

  std::vector<FeatureSequence> train_raw, eval_raw;
  for (const std::string& id : out.train_ids) train_raw.push_back(lookup(id));
  for (const std::string& id : out.eval_ids) eval_raw.push_back(lookup(id));

  if (normalization == Normalization::TrainingFold) {
    NormalizationStats stats = fit_normalizer(train_raw);
    for (const std::string& id : out.eval_ids) {
      require(!stats.uses_participant(id), ErrorCode::Internal,
              "leakage audit: normalisation statistics of fold " + std::to_string(fold) + " include eval participant " +
                  id);
    }
    for (const std::string& id : stats.sources) {
      require(train_set.contains(id), ErrorCode::Internal,
              "leakage audit: normalisation source " + id + " is not a training participant");
    }
    for (const FeatureSequence& seq : train_raw) out.train.push_back(apply_normalizer(stats, seq));
    for (const FeatureSequence& seq : eval_raw) out.eval.push_back(apply_normalizer(stats, seq));
    out.stats = std::move(stats);
  } else {
    out.train = normalize_per_participant(train_raw);
    out.eval = normalize_per_participant(eval_raw);
  }
  return out;
}

std::vector<Window> training_windows(const ExperimentConfig& config, const FeatureSequence& seq) {
  return window(seq, config.network.sequence_length, config.stride());
}

TrainedModel train_central(const ExperimentConfig& config, const std::vector<FeatureSequence>& train,
                           std::uint64_t init_seed, const EpochObserver& on_epoch) {
  config.network.validate();
  std::vector<Window> windows;
  for (const FeatureSequence& seq : train) {
    auto w = training_windows(config, seq);
    windows.insert(windows.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  require(!windows.empty(), ErrorCode::InvalidArgument, "no training windows (sequence_length longer than the data?)");

  Rng rng(init_seed);
  TrainedModel model{init_network(config.network, rng), config.network, 0.0, 1};
  AdamState state = AdamState::for_params(model.params, config.network.learning_rate);
  const TrainOptions options{config.clip_norm};
  const auto start = Clock::now();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = train_epoch(model.params, config.network, state, windows, options);
    if (on_epoch) on_epoch(epoch + 1, loss, model.params);
  }
  model.train_seconds = seconds_since(start);
  return model;
}

TrainedModel train_federated(const ExperimentConfig& config, const std::vector<FeatureSequence>& train,
                             std::uint64_t init_seed, const RoundObserver& on_round,
                             const MessageObserver& on_message) {
  config.network.validate();
  require(!train.empty(), ErrorCode::InvalidArgument, "federated training needs at least one participant");
  LocalTrainingOptions options;
  options.epochs_per_round = config.epochs_per_round;
  options.optimizer_state = config.optimizer_state;
  options.train.clip_norm = config.clip_norm;

  std::vector<std::unique_ptr<FederationClient>> clients;
  std::vector<FederationClient*> pointers;
  std::vector<std::string> ids;
  for (const FeatureSequence& seq : train) {
    clients.push_back(std::make_unique<FederationClient>(seq.participant_id, config.network,
                                                         training_windows(config, seq), options));
    pointers.push_back(clients.back().get());
    ids.push_back(seq.participant_id);
  }

  Rng rng(init_seed);
  FederationServer server(init_network(config.network, rng), ids, config.rounds(), config.aggregation);
  SimulatedTransport transport(pointers,
                               config.threaded_clients ? SimulatedTransport::Execution::Threaded
                                                       : SimulatedTransport::Execution::Sequential,
                               on_message);
  transport.connect();
  const auto start = Clock::now();
  ParameterSet global = run_federation(server, transport, config.round_timeout(), on_round);
  return TrainedModel{std::move(global), config.network, seconds_since(start), clients.size()};
}

Tensor predict_sequence(const ParameterSet& params, const NetworkConfig& network, const FeatureSequence& seq) {
  return predict_frames(params, network, seq.frames);
}

MetricReport evaluate_model(const ParameterSet& params, const NetworkConfig& network,
                            const std::vector<FeatureSequence>& eval, CccPooling pooling) {
  require(!eval.empty(), ErrorCode::InvalidArgument, "nothing to evaluate");
  if (pooling == CccPooling::PooledPerFold) {
    std::vector<double> pred, labels;
    std::size_t rows = 0;
    for (const FeatureSequence& seq : eval) {
      const Tensor y = predict_sequence(params, network, seq);
      pred.insert(pred.end(), y.data().begin(), y.data().end());
      labels.insert(labels.end(), seq.labels.data().begin(), seq.labels.data().end());
      rows += seq.frame_count();
    }
    return metrics_for(Tensor({rows, 2}, std::move(pred)), Tensor({rows, 2}, std::move(labels)));
  }
  MetricReport sum;
  for (const FeatureSequence& seq : eval) {
    const MetricReport r = metrics_for(predict_sequence(params, network, seq), seq.labels);
    sum.valence_ccc += r.valence_ccc;
    sum.arousal_ccc += r.arousal_ccc;
    sum.valence_pearson += r.valence_pearson;
    sum.arousal_pearson += r.arousal_pearson;
    sum.n_frames += r.n_frames;
  }
  const double n = static_cast<double>(eval.size());
  sum.valence_ccc /= n;
  sum.arousal_ccc /= n;
  sum.valence_pearson /= n;
  sum.arousal_pearson /= n;
  return sum;
}

double time_inference(const ParameterSet& params, const NetworkConfig& network, std::size_t n_frames) {
  if (n_frames == 0) return 0.0;
  std::vector<double> values(n_frames * network.input_size);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::sin(0.1 * static_cast<double>(i));
  const Tensor x({n_frames, network.input_size}, std::move(values));
  std::vector<double> times;
  for (int rep = 0; rep < 5; ++rep) {
    const auto start = Clock::now();
    const Tensor y = predict_frames(params, network, x);
    times.push_back(seconds_since(start));
    require(y.rows() == n_frames, ErrorCode::Internal, "inference returned the wrong number of frames");
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

std::uint64_t fold_init_seed(std::uint64_t seed, std::size_t fold) { return derive_seed(seed, "init", fold); }

FoldPlan make_fold_plan(const std::vector<FeatureSequence>& data, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const FeatureSequence& seq : data) ids.push_back(seq.participant_id);
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, "folds"));
  FoldPlan plan = plan_folds(ids, k, rng);
  plan.validate_partition(ids);
  return plan;
}

namespace {

std::filesystem::path fold_checkpoint_path(const std::string& base, std::size_t fold, std::size_t folds) {
  if (folds == 1) return base;
  return base + ".fold" + std::to_string(fold + 1);
}

FoldResult run_fold(const ExperimentConfig& config, const std::vector<FeatureSequence>& data, const FoldPlan& plan,
                    std::size_t fold) {
  FoldData split = prepare_fold(data, plan, fold, config.normalization);
  const std::uint64_t init_seed = fold_init_seed(config.seed, fold);
  TrainedModel model = config.mode == ExperimentMode::CentralAu ? train_central(config, split.train, init_seed)
                                                                : train_federated(config, split.train, init_seed);

  FoldResult result;
  result.fold = fold;
  result.eval_participants = split.eval_ids;
  result.train_participants = split.train_ids;
  result.metrics = evaluate_model(model.params, model.network, split.eval, config.ccc_pooling);
  result.train_seconds = model.train_seconds;
  result.clients = model.clients;
  result.parallel_seconds = model.train_seconds / static_cast<double>(model.clients);
  result.inference_100_seconds = time_inference(model.params, model.network, 100);
  result.inference_500_seconds = time_inference(model.params, model.network, 500);

  if (!config.checkpoint.empty()) {
    save_checkpoint(fold_checkpoint_path(config.checkpoint, fold, plan.size()),
                    Checkpoint{model.network, config.normalization, split.stats, model.params});
  }
  return result;
}

}  // namespace

RunReport run_cross_validation(const ExperimentConfig& config, const std::vector<FeatureSequence>& data) {
  config.validate();
  require(!data.empty(), ErrorCode::InvalidArgument, "dataset is empty");
  for (const FeatureSequence& seq : data) {
    require(seq.feature_count() == config.network.input_size, ErrorCode::ShapeMismatch,
            "participant " + seq.participant_id + " has " + std::to_string(seq.feature_count()) +
                " features, config.input_size is " + std::to_string(config.network.input_size));
  }
  require(config.k_folds >= 2, ErrorCode::InvalidArgument, "cross-validation needs k_folds >= 2");
  require(config.k_folds <= data.size(), ErrorCode::InvalidArgument,
          "k_folds (" + std::to_string(config.k_folds) + ") exceeds the number of participants (" +
              std::to_string(data.size()) + ")");

  const auto start = Clock::now();
  const FoldPlan plan = make_fold_plan(data, config.k_folds, config.seed);
  std::vector<FoldResult> results(plan.size());

  const std::size_t threads = std::min(config.fold_threads, plan.size());
  if (threads <= 1) {
    for (std::size_t f = 0; f < plan.size(); ++f) results[f] = run_fold(config, data, plan, f);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t f = next++; f < plan.size(); f = next++) {
          try {
            results[f] = run_fold(config, data, plan, f);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
  }

  std::vector<std::string> warnings;
  for (const FeatureSequence& seq : data) {
    if (seq.frame_count() < config.network.sequence_length) {
      warnings.push_back("participant " + seq.participant_id + " has " + std::to_string(seq.frame_count()) +
                         " frames, fewer than sequence_length; it yields no training windows");
    }
  }
  if (config.paper_grid) {
    for (std::string& w : validate_paper_grid(config)) warnings.push_back(std::move(w));
  }
  return RunReport(config.method_label(), network_label(config.network.cell), std::move(results),
                   seconds_since(start), config.to_text(), build_fingerprint(), std::move(warnings));
}

RunReport run_cross_validation(const ExperimentConfig& config) {
  require(!config.data_dir.empty(), ErrorCode::InvalidArgument, "config.data_dir is not set");
  return run_cross_validation(config, load_dataset(config.data_dir));
}

MetricReport evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<FeatureSequence>& data,
                                 CccPooling pooling) {
  require(!data.empty(), ErrorCode::InvalidArgument, "dataset is empty");
  std::vector<FeatureSequence> normalized;
  if (checkpoint.normalization == Normalization::PerParticipant) {
    normalized = normalize_per_participant(data);
  } else {
    require(checkpoint.stats.has_value(), ErrorCode::Parse, "checkpoint lacks normalisation statistics");
    for (const FeatureSequence& seq : data) normalized.push_back(apply_normalizer(*checkpoint.stats, seq));
  }
  return evaluate_model(checkpoint.params, checkpoint.network, normalized, pooling);
}

Checkpoint serve_federated(const ExperimentConfig& config, const std::string& listen_address,
                           const std::function<void(std::uint16_t)>& ready) {
  config.validate();
  require(config.federated_clients > 0, ErrorCode::InvalidArgument, "federated_clients must be set for a TCP run");
  TcpServerTransport transport(listen_address);
  if (ready) ready(transport.port());
  transport.accept_clients(config.federated_clients, config.round_timeout());

  Rng rng(fold_init_seed(config.seed, 0));
  FederationServer server = FederationServer::open(init_network(config.network, rng), config.federated_clients,
                                                   config.rounds(), config.aggregation);
  ParameterSet global = run_federation(server, transport, config.round_timeout());
  return Checkpoint{config.network, Normalization::PerParticipant, std::nullopt, std::move(global)};
}

std::uint32_t run_federated_client(const std::string& server_address, const std::string& participant_id,
                                   const std::filesystem::path& data_dir,
                                   const std::optional<ExperimentConfig>& config) {
  ExperimentConfig cfg = config.value_or(ExperimentConfig{});
  const FeatureSequence raw = load_participant(data_dir / "features" / (participant_id + ".csv"),
                                               data_dir / "labels" / participant_id);
  const FeatureSequence seq = normalize_per_participant({raw}).front();

  LocalTrainingOptions options;
  options.epochs_per_round = cfg.epochs_per_round;
  options.optimizer_state = cfg.optimizer_state;
  options.train.clip_norm = cfg.clip_norm;
  options.adopt_architecture = !config.has_value();
  if (options.adopt_architecture) cfg.network.input_size = seq.feature_count();

  FederationClient client(participant_id, cfg.network, training_windows(cfg, seq), options);
  return run_tcp_client(server_address, client, std::chrono::seconds(30), cfg.round_timeout());
}

}  // namespace fedseq
