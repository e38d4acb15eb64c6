// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <thread>

#include "fedseq/config.hpp"
#include "fedseq/dataset.hpp"
#include "fedseq/error.hpp"
#include "fedseq/harness.hpp"
#include "fedseq/rng.hpp"

using namespace fedseq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("fedseq_harness_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig small_config(ExperimentMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.network.cell = {CellVariant::Gru, true};
  c.network.input_size = 6;
  c.network.hidden_size = 4;
  c.network.fc_hidden = 3;
  c.network.sequence_length = 10;
  c.network.learning_rate = 1e-3;
  c.k_folds = 2;
  c.epochs = 2;
  c.seed = 11;
  return c;
}

std::vector<MetricReport> fold_metrics(const RunReport& r) {
  std::vector<MetricReport> out;
  for (const auto& f : r.folds()) out.push_back(f.metrics);
  return out;
}

FoldResult sample_fold(std::size_t i) {
  FoldResult f;
  f.fold = i;
  f.eval_participants = {"P0" + std::to_string(i + 1)};
  f.train_participants = {"P09"};
  f.metrics = MetricReport{0.5 + 0.1 * i, 0.25, 0.6, 0.3, 100};
  f.train_seconds = 2.0;
  f.clients = 2;
  f.parallel_seconds = 1.0;
  f.inference_100_seconds = 0.001;
  f.inference_500_seconds = 0.005;
  return f;
}

}  // namespace

TEST(Config, TextRoundTripIsExact) {
  ExperimentConfig c = small_config(ExperimentMode::Federated);
  c.network.learning_rate = 0.1 + 0.2;  // not representable in short decimal
  c.data_dir = "/tmp/some dir";
  c.aggregation = AggregationRule::WeightedMean;
  c.optimizer_state = OptimizerStatePolicy::ResetEachRound;
  c.ccc_pooling = CccPooling::PerParticipant;
  EXPECT_EQ(ExperimentConfig::parse(c.to_text()), c);
}

TEST(Config, ParseErrors) {
  EXPECT_THROW(ExperimentConfig::parse("no_such_key = 1\n"), Error);
  EXPECT_THROW(ExperimentConfig::parse("hidden_size = twelve\n"), Error);
  EXPECT_THROW(ExperimentConfig::parse("hidden_size 12\n"), Error);
  EXPECT_NO_THROW(ExperimentConfig::parse("# comment\n\nhidden_size = 12\n"));
}

TEST(Config, Validation) {
  ExperimentConfig c = small_config(ExperimentMode::CentralAu);
  EXPECT_NO_THROW(c.validate());
  c.network.hidden_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = small_config(ExperimentMode::CentralAu);
  c.network.learning_rate = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, RoundsFollowEpochs) {
  ExperimentConfig c = small_config(ExperimentMode::Federated);
  c.epochs = 100;
  c.epochs_per_round = 1;
  EXPECT_EQ(c.rounds(), 100u);
  c.epochs_per_round = 4;
  EXPECT_EQ(c.rounds(), 25u);
}

TEST(Config, SeedComesFromEnvironment) {
  TempDir dir;
  const fs::path file = dir.path / "c.txt";
  std::ofstream(file) << small_config(ExperimentMode::CentralAu).to_text();
  ::setenv("FEDSEQ_SEED", "4242", 1);
  const ExperimentConfig c = ExperimentConfig::load(file);
  ::unsetenv("FEDSEQ_SEED");
  EXPECT_EQ(c.seed, 4242u);
  EXPECT_EQ(ExperimentConfig::load(file).seed, 11u);
}

TEST(PaperGrid, HardAndSoftFindings) {
  ExperimentConfig c;
  c.network.cell = {CellVariant::Gru, true};
  c.network.hidden_size = 512;
  c.network.num_layers = 6;
  c.network.learning_rate = 1e-4;
  c.network.sequence_length = 600;
  EXPECT_TRUE(validate_paper_grid(c).empty());
  c.network.sequence_length = 8;
  EXPECT_EQ(validate_paper_grid(c).size(), 1u);
  c.network.hidden_size = 100;
  EXPECT_THROW(validate_paper_grid(c), Error);
}

TEST(PaperGrid, OptimaAndSearchGrid) {
  const auto optima = paper_optima(ExperimentConfig{});
  ASSERT_EQ(optima.size(), 6u);
  for (const auto& c : optima) EXPECT_NO_THROW(validate_paper_grid(c));
  EXPECT_EQ(optima[0].network.hidden_size, 512u);
  EXPECT_EQ(optima[3].mode, ExperimentMode::Federated);
  EXPECT_EQ(optima[3].network.sequence_length, 8u);
  EXPECT_EQ(paper_search_grid(ExperimentConfig{}).size(), 3u * 3 * 6 * 8 * 5);
}

TEST(Report, EmptyFoldListIsRejected) {
  EXPECT_THROW(RunReport("Level1-AU", "BiGRU", {}, 0, "", ""), Error);
}

TEST(Report, MeansAndTimes) {
  const RunReport r("Level2-FL", "BiGRU", {sample_fold(0), sample_fold(1)}, 9, "seed = 1\n", "b");
  EXPECT_NEAR(r.mean_valence_ccc(), 0.55, 1e-15);
  EXPECT_EQ(r.total_train_seconds(), 4.0);
  EXPECT_EQ(r.simulated_parallel_seconds(), 2.0);
}

TEST(Report, JsonLinesRoundTrip) {
  const RunReport r("Level1-AU", "BiLSTM", {sample_fold(0), sample_fold(1)}, 3.5, "seed = 1\n", "build x",
                    {"a warning"});
  EXPECT_EQ(parse_report_jsonl(format_report(r, ReportFormat::JsonLines)), r);
  EXPECT_THROW(parse_report_jsonl("{\"record\":\"fold\"}\n"), Error);
  EXPECT_THROW(parse_report_jsonl("not json\n"), Error);
}

TEST(Report, TextAndCsv) {
  const RunReport r("Level1-AU", "BiGRU", {sample_fold(0)}, 1, "", "b", {"w1"});
  const std::string text = format_report(r, ReportFormat::Text);
  EXPECT_NE(text.find("valence CCC"), std::string::npos);
  EXPECT_NE(text.find("Level1-AU"), std::string::npos);
  EXPECT_NE(text.find("warning: w1"), std::string::npos);
  const std::string csv = format_report(r, ReportFormat::Csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("method,network,fold,", 0), 0u);
  EXPECT_THROW(parse_report_format("xml"), Error);
}

TEST(Folds, PreparedFoldsPassTheLeakageAudit) {
  const auto data = generate_synthetic(5, 30, 2, 6);
  const FoldPlan plan = make_fold_plan(data, 2, 3);
  for (std::size_t f = 0; f < plan.size(); ++f) {
    const FoldData fd = prepare_fold(data, plan, f, Normalization::TrainingFold);
    ASSERT_TRUE(fd.stats.has_value());
    for (const auto& id : fd.eval_ids) EXPECT_FALSE(fd.stats->uses_participant(id));
    EXPECT_EQ(fd.train.size() + fd.eval.size(), data.size());
    EXPECT_FALSE(prepare_fold(data, plan, f, Normalization::PerParticipant).stats.has_value());
  }
}

TEST(Folds, OverlappingPlanFailsTheAudit) {
  const auto data = generate_synthetic(4, 30, 2, 6);
  FoldPlan bad;
  bad.folds = {{"P01", "P02"}, {"P02", "P03", "P04"}};
  EXPECT_THROW(prepare_fold(data, bad, 0, Normalization::TrainingFold), Error);
}

TEST(CrossValidation, TwoParticipantsTwoFolds) {
  const auto data = generate_synthetic(2, 40, 5, 6);
  const RunReport r = run_cross_validation(small_config(ExperimentMode::CentralAu), data);
  ASSERT_EQ(r.folds().size(), 2u);
  for (const auto& f : r.folds()) {
    EXPECT_EQ(f.eval_participants.size(), 1u);
    EXPECT_EQ(f.train_participants.size(), 1u);
    EXPECT_NE(f.eval_participants[0], f.train_participants[0]);
    EXPECT_EQ(f.metrics.n_frames, 40u);
  }
  EXPECT_EQ(r.method(), "Level1-AU");
  EXPECT_EQ(r.network(), "BiGRU");
}

TEST(CrossValidation, RejectsBadFoldCounts) {
  const auto data = generate_synthetic(2, 40, 5, 6);
  ExperimentConfig c = small_config(ExperimentMode::CentralAu);
  c.k_folds = 3;
  EXPECT_THROW(run_cross_validation(c, data), Error);
  c.k_folds = 1;
  EXPECT_THROW(run_cross_validation(c, data), Error);
  c = small_config(ExperimentMode::CentralAu);
  c.network.input_size = 7;
  EXPECT_THROW(run_cross_validation(c, data), Error);
}

TEST(CrossValidation, ShortParticipantIsReported) {
  // With four participants every training fold keeps at least one full recording.
  auto data = generate_synthetic(4, 40, 5, 6);
  data[2] = generate_synthetic(4, 5, 5, 6)[2];
  const RunReport r = run_cross_validation(small_config(ExperimentMode::CentralAu), data);
  ASSERT_EQ(r.warnings().size(), 1u);
  EXPECT_NE(r.warnings()[0].find("P03"), std::string::npos);
}

TEST(CrossValidation, RepeatsExactlyAndReplaysFromItsConfigEcho) {
  const auto data = generate_synthetic(4, 40, 5, 6);
  for (auto mode : {ExperimentMode::CentralAu, ExperimentMode::Federated}) {
    const RunReport a = run_cross_validation(small_config(mode), data);
    const RunReport b = run_cross_validation(small_config(mode), data);
    EXPECT_EQ(fold_metrics(a), fold_metrics(b));
    const RunReport replay = run_cross_validation(ExperimentConfig::parse(a.config_text()), data);
    EXPECT_EQ(fold_metrics(replay), fold_metrics(a));
  }
}

TEST(CrossValidation, FoldThreadsDoNotChangeResults) {
  const auto data = generate_synthetic(4, 40, 5, 6);
  ExperimentConfig c = small_config(ExperimentMode::Federated);
  const RunReport a = run_cross_validation(c, data);
  c.fold_threads = 2;
  c.threaded_clients = true;
  EXPECT_EQ(fold_metrics(run_cross_validation(c, data)), fold_metrics(a));
}

TEST(Training, FederatedWithOneParticipantEqualsCentral) {
  const auto data = generate_synthetic(1, 50, 9, 6);
  ExperimentConfig central = small_config(ExperimentMode::CentralAu);
  central.epochs = 3;
  ExperimentConfig federated = central;
  federated.mode = ExperimentMode::Federated;
  const TrainedModel a = train_central(central, data, 77);
  const TrainedModel b = train_federated(federated, data, 77);
  EXPECT_TRUE(bitwise_equal(a.params, b.params));
  const MetricReport ma = evaluate_model(a.params, a.network, data, CccPooling::PooledPerFold);
  const MetricReport mb = evaluate_model(b.params, b.network, data, CccPooling::PooledPerFold);
  EXPECT_NEAR(ma.valence_ccc, mb.valence_ccc, 1e-12);
  EXPECT_NEAR(ma.arousal_ccc, mb.arousal_ccc, 1e-12);
}

TEST(Training, EpochObserverSeesEveryEpoch) {
  const auto data = generate_synthetic(1, 50, 9, 6);
  std::vector<std::size_t> epochs;
  train_central(small_config(ExperimentMode::CentralAu), data, 1,
                [&](std::size_t e, double loss, const ParameterSet&) {
                  epochs.push_back(e);
                  EXPECT_TRUE(std::isfinite(loss));
                });
  EXPECT_EQ(epochs, (std::vector<std::size_t>{1, 2}));
}

TEST(Evaluation, PredictionsCoverEveryFrame) {
  const auto data = generate_synthetic(1, 37, 9, 6);
  const ExperimentConfig c = small_config(ExperimentMode::CentralAu);
  Rng rng(1);
  const ParameterSet p = init_network(c.network, rng);
  const Tensor y = predict_sequence(p, c.network, data[0]);
  EXPECT_EQ(y.shape(), (Shape{37, 2}));
}

TEST(Evaluation, InferenceTiming) {
  const ExperimentConfig c = small_config(ExperimentMode::CentralAu);
  Rng rng(1);
  const ParameterSet p = init_network(c.network, rng);
  EXPECT_EQ(time_inference(p, c.network, 0), 0.0);
  const double t100 = time_inference(p, c.network, 100);
  const double t500 = time_inference(p, c.network, 500);
  EXPECT_GT(t100, 0.0);
  EXPECT_GE(t500, t100);
  const double again = time_inference(p, c.network, 100);
  EXPECT_LT(std::max(t100, again) / std::min(t100, again), 3.0);
}

TEST(Checkpoint, RoundTripAndEvaluation) {
  TempDir dir;
  const auto data = generate_synthetic(2, 40, 3, 6);
  const ExperimentConfig c = small_config(ExperimentMode::CentralAu);
  Checkpoint ck;
  ck.network = c.network;
  ck.stats = fit_normalizer(data);
  Rng rng(4);
  ck.params = init_network(c.network, rng);
  save_checkpoint(dir.path / "m.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir.path / "m.ckpt");
  EXPECT_TRUE(bitwise_equal(back.params, ck.params));
  EXPECT_EQ(back.network, ck.network);
  EXPECT_EQ(back.stats->mean, ck.stats->mean);
  EXPECT_EQ(back.stats->sources, ck.stats->sources);
  const MetricReport a = evaluate_checkpoint(ck, data, CccPooling::PooledPerFold);
  const MetricReport b = evaluate_checkpoint(back, data, CccPooling::PooledPerFold);
  EXPECT_EQ(a.valence_ccc, b.valence_ccc);
  EXPECT_EQ(a.n_frames, 80u);

  std::ofstream(dir.path / "bad.ckpt") << "fedseq-checkpoint 1\ncell = gru\n";
  EXPECT_THROW(load_checkpoint(dir.path / "bad.ckpt"), Error);
  EXPECT_THROW(load_checkpoint(dir.path / "missing.ckpt"), Error);
}

TEST(Checkpoint, WrittenPerFold) {
  TempDir dir;
  const auto data = generate_synthetic(2, 40, 5, 6);
  ExperimentConfig c = small_config(ExperimentMode::CentralAu);
  c.checkpoint = (dir.path / "run.ckpt").string();
  run_cross_validation(c, data);
  EXPECT_TRUE(fs::exists(dir.path / "run.ckpt.fold1"));
  EXPECT_TRUE(fs::exists(dir.path / "run.ckpt.fold2"));
}

TEST(Tcp, ServerAndClientsOverLoopback) {
  TempDir dir;
  // The client without a config keeps the default sequence length of 100.
  const auto data = generate_synthetic(2, 120, 5, 6);
  write_dataset(dir.path, data);
  ExperimentConfig c = small_config(ExperimentMode::Federated);
  c.federated_clients = 2;
  c.round_timeout_ms = 30000;
  std::promise<std::uint16_t> port;
  auto ready = port.get_future();
  std::optional<Checkpoint> result;
  std::exception_ptr failure[3];
  auto guarded = [&](int slot, auto body) {
    return std::thread([&, slot, body] {
      try {
        body();
      } catch (...) {
        failure[slot] = std::current_exception();
      }
    });
  };
  std::thread server = guarded(0, [&] {
    result = serve_federated(c, "127.0.0.1:0", [&](std::uint16_t p) { port.set_value(p); });
  });
  const std::string address = "127.0.0.1:" + std::to_string(ready.get());
  std::uint32_t r1 = 0, r2 = 0;
  std::thread c1 = guarded(1, [&] { r1 = run_federated_client(address, "P01", dir.path, c); });
  std::thread c2 = guarded(2, [&] { r2 = run_federated_client(address, "P02", dir.path, std::nullopt); });
  c1.join();
  c2.join();
  server.join();
  for (auto& f : failure) {
    if (f) std::rethrow_exception(f);
  }
  ASSERT_TRUE(result.has_value());
  EXPECT_EQ(r1, c.rounds());
  EXPECT_EQ(r2, c.rounds());
  EXPECT_EQ(result->normalization, Normalization::PerParticipant);
  EXPECT_TRUE(result->params.all_finite());
}
