// SPDX-License-Identifier: Apache-2.0
#include "fedseq/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fedseq/error.hpp"

namespace fedseq {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    fail(ErrorCode::Parse, "config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    fail(ErrorCode::Parse, "config key '" + key + "': expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::Parse, "config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
bool contains(std::initializer_list<T> values, T v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

constexpr std::initializer_list<std::size_t> kHiddenGrid = {8, 16, 64, 128, 256, 512};
constexpr std::initializer_list<double> kLearningRateGrid = {1e-3, 1e-4, 1e-5};
constexpr std::initializer_list<std::size_t> kAuSequenceGrid = {50, 100, 200, 400, 600, 800, 1000, 2000};
constexpr std::initializer_list<std::size_t> kImageSequenceGrid = {4, 8, 16, 32};
constexpr std::initializer_list<std::size_t> kLayerGrid = {1, 2, 4, 6, 8};

}  // namespace

std::string to_string(ExperimentMode mode) { return mode == ExperimentMode::CentralAu ? "central_au" : "federated"; }

std::string to_string(CccPooling pooling) {
  return pooling == CccPooling::PooledPerFold ? "pooled" : "per_participant";
}

std::string to_string(Normalization normalization) {
  return normalization == Normalization::TrainingFold ? "training_fold" : "per_participant";
}

std::uint32_t ExperimentConfig::rounds() const {
  return static_cast<std::uint32_t>(epochs / std::max<std::size_t>(epochs_per_round, 1));
}

std::string ExperimentConfig::method_label() const {
  return mode == ExperimentMode::CentralAu ? "Level1-AU" : "Level2-FL";
}

void ExperimentConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = lower(trim(key_in));
  const std::string value = trim(value_in);
  if (key == "mode") {
    const std::string v = lower(value);
    if (v == "central_au" || v == "central") {
      mode = ExperimentMode::CentralAu;
    } else if (v == "federated") {
      mode = ExperimentMode::Federated;
    } else {
      fail(ErrorCode::Parse, "config key 'mode': expected central_au or federated, got '" + value + "'");
    }
  } else if (key == "cell") {
    network.cell.variant = parse_cell_variant(value);
  } else if (key == "bidirectional") {
    network.cell.bidirectional = parse_bool(key, value);
  } else if (key == "input_size") {
    network.input_size = parse_size(key, value);
  } else if (key == "hidden_size") {
    network.hidden_size = parse_size(key, value);
  } else if (key == "num_layers") {
    network.num_layers = parse_size(key, value);
  } else if (key == "fc_hidden") {
    network.fc_hidden = parse_size(key, value);
  } else if (key == "outputs") {
    network.outputs = parse_size(key, value);
  } else if (key == "sequence_length") {
    network.sequence_length = parse_size(key, value);
  } else if (key == "learning_rate") {
    network.learning_rate = parse_double(key, value);
  } else if (key == "k_folds") {
    k_folds = parse_size(key, value);
  } else if (key == "epochs") {
    epochs = parse_size(key, value);
  } else if (key == "epochs_per_round") {
    epochs_per_round = parse_size(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "window_stride") {
    window_stride = parse_size(key, value);
  } else if (key == "aggregation") {
    aggregation = parse_aggregation_rule(lower(value));
  } else if (key == "optimizer_state") {
    const std::string v = lower(value);
    if (v == "persistent") {
      optimizer_state = OptimizerStatePolicy::Persistent;
    } else if (v == "reset") {
      optimizer_state = OptimizerStatePolicy::ResetEachRound;
    } else {
      fail(ErrorCode::Parse, "config key 'optimizer_state': expected persistent or reset");
    }
  } else if (key == "ccc_pooling") {
    const std::string v = lower(value);
    if (v == "pooled") {
      ccc_pooling = CccPooling::PooledPerFold;
    } else if (v == "per_participant") {
      ccc_pooling = CccPooling::PerParticipant;
    } else {
      fail(ErrorCode::Parse, "config key 'ccc_pooling': expected pooled or per_participant");
    }
  } else if (key == "normalization") {
    const std::string v = lower(value);
    if (v == "training_fold") {
      normalization = Normalization::TrainingFold;
    } else if (v == "per_participant") {
      normalization = Normalization::PerParticipant;
    } else {
      fail(ErrorCode::Parse, "config key 'normalization': expected training_fold or per_participant");
    }
  } else if (key == "clip_norm") {
    clip_norm = parse_double(key, value);
  } else if (key == "data_dir") {
    data_dir = value;
  } else if (key == "output") {
    output = value;
  } else if (key == "report_format") {
    report_format = lower(value);
  } else if (key == "checkpoint") {
    checkpoint = value;
  } else if (key == "fold_threads") {
    fold_threads = parse_size(key, value);
  } else if (key == "threaded_clients") {
    threaded_clients = parse_bool(key, value);
  } else if (key == "round_timeout_ms") {
    round_timeout_ms = parse_u64(key, value);
  } else if (key == "federated_clients") {
    federated_clients = parse_size(key, value);
  } else if (key == "paper_grid") {
    paper_grid = parse_bool(key, value);
  } else {
    fail(ErrorCode::Parse, "unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  network.validate();
  require(k_folds >= 1, ErrorCode::InvalidArgument, "k_folds must be at least 1");
  require(epochs_per_round >= 1, ErrorCode::InvalidArgument, "epochs_per_round must be at least 1");
  require(epochs % epochs_per_round == 0, ErrorCode::InvalidArgument,
          "epochs must be a multiple of epochs_per_round");
  require(clip_norm >= 0.0, ErrorCode::InvalidArgument, "clip_norm must be non-negative (0 disables clipping)");
  require(report_format == "text" || report_format == "csv" || report_format == "jsonl", ErrorCode::InvalidArgument,
          "report_format must be text, csv or jsonl");
  require(fold_threads >= 1, ErrorCode::InvalidArgument, "fold_threads must be at least 1");
  require(round_timeout_ms > 0, ErrorCode::InvalidArgument, "round_timeout_ms must be positive");
  if (paper_grid) validate_paper_grid(*this);
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "mode = " << to_string(mode) << '\n'
     << "cell = " << to_string(network.cell.variant) << '\n'
     << "bidirectional = " << (network.cell.bidirectional ? "true" : "false") << '\n'
     << "input_size = " << network.input_size << '\n'
     << "hidden_size = " << network.hidden_size << '\n'
     << "num_layers = " << network.num_layers << '\n'
     << "fc_hidden = " << network.fc_hidden << '\n'
     << "outputs = " << network.outputs << '\n'
     << "sequence_length = " << network.sequence_length << '\n'
     << "learning_rate = " << format_double(network.learning_rate) << '\n'
     << "k_folds = " << k_folds << '\n'
     << "epochs = " << epochs << '\n'
     << "epochs_per_round = " << epochs_per_round << '\n'
     << "seed = " << seed << '\n'
     << "window_stride = " << window_stride << '\n'
     << "aggregation = " << to_string(aggregation) << '\n'
     << "optimizer_state = " << (optimizer_state == OptimizerStatePolicy::Persistent ? "persistent" : "reset") << '\n'
     << "ccc_pooling = " << to_string(ccc_pooling) << '\n'
     << "normalization = " << to_string(normalization) << '\n'
     << "clip_norm = " << format_double(clip_norm) << '\n'
     << "data_dir = " << data_dir << '\n'
     << "output = " << output << '\n'
     << "report_format = " << report_format << '\n'
     << "checkpoint = " << checkpoint << '\n'
     << "fold_threads = " << fold_threads << '\n'
     << "threaded_clients = " << (threaded_clients ? "true" : "false") << '\n'
     << "round_timeout_ms = " << round_timeout_ms << '\n'
     << "federated_clients = " << federated_clients << '\n'
     << "paper_grid = " << (paper_grid ? "true" : "false") << '\n';
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::Parse, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      config.set(t.substr(0, eq), t.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  ExperimentConfig config = parse(buffer.str());
  apply_environment(config);
  return config;
}

void apply_environment(ExperimentConfig& config) {
  if (const char* env = std::getenv("FEDSEQ_SEED"); env != nullptr && *env != '\0') {
    config.seed = parse_u64("FEDSEQ_SEED", trim(env));
  }
}

std::vector<std::string> validate_paper_grid(const ExperimentConfig& config) {
  const NetworkConfig& n = config.network;
  std::vector<std::string> warnings;
  require(contains(kHiddenGrid, n.hidden_size), ErrorCode::InvalidArgument,
          "hidden_size " + std::to_string(n.hidden_size) + " is not in {8,16,64,128,256,512}");
  require(contains(kLearningRateGrid, n.learning_rate), ErrorCode::InvalidArgument,
          "learning_rate " + format_double(n.learning_rate) + " is not in {1e-3,1e-4,1e-5}");
  require(contains(kLayerGrid, n.num_layers), ErrorCode::InvalidArgument,
          "num_layers " + std::to_string(n.num_layers) + " is not in {1,2,4,6,8}");
  require(n.fc_hidden == 10, ErrorCode::InvalidArgument, "fc_hidden must be 10");
  require(n.outputs == 2, ErrorCode::InvalidArgument, "outputs must be 2 (valence, arousal)");
  if (contains(kImageSequenceGrid, n.sequence_length)) {
    warnings.push_back("sequence_length " + std::to_string(n.sequence_length) +
                       " belongs to the image branch, which this build does not implement; treated as a frame window");
  } else {
    require(contains(kAuSequenceGrid, n.sequence_length), ErrorCode::InvalidArgument,
            "sequence_length " + std::to_string(n.sequence_length) +
                " is not in {50,100,200,400,600,800,1000,2000} or {4,8,16,32}");
  }
  if (n.cell.variant != CellVariant::SimpleRnn && !n.cell.bidirectional) {
    warnings.push_back("gated cells are bidirectional in the published configurations");
  }
  if (config.k_folds != 8) warnings.push_back("published protocol uses k_folds = 8");
  if (config.epochs != 100) warnings.push_back("published protocol trains for 100 epochs");
  return warnings;
}

std::vector<ExperimentConfig> paper_optima(const ExperimentConfig& base) {
  struct Row {
    ExperimentMode mode;
    CellVariant cell;
    bool bidirectional;
    double lr;
    std::size_t seq;
    std::size_t hidden;
    std::size_t layers;
  };
  const Row rows[] = {
      {ExperimentMode::CentralAu, CellVariant::Gru, true, 1e-4, 600, 512, 6},
      {ExperimentMode::CentralAu, CellVariant::Lstm, true, 1e-4, 600, 128, 6},
      {ExperimentMode::CentralAu, CellVariant::SimpleRnn, false, 1e-4, 2000, 128, 2},
      {ExperimentMode::Federated, CellVariant::Gru, true, 1e-4, 8, 128, 6},
      {ExperimentMode::Federated, CellVariant::Lstm, true, 1e-4, 8, 128, 6},
      {ExperimentMode::Federated, CellVariant::SimpleRnn, false, 1e-4, 8, 128, 6},
  };
  std::vector<ExperimentConfig> out;
  for (const Row& r : rows) {
    ExperimentConfig c = base;
    c.mode = r.mode;
    c.network.cell = {r.cell, r.bidirectional};
    c.network.learning_rate = r.lr;
    c.network.sequence_length = r.seq;
    c.network.hidden_size = r.hidden;
    c.network.num_layers = r.layers;
    c.network.fc_hidden = 10;
    c.network.outputs = 2;
    out.push_back(c);
  }
  return out;
}

std::vector<ExperimentConfig> paper_search_grid(const ExperimentConfig& base) {
  std::vector<ExperimentConfig> out;
  const CellKind cells[] = {{CellVariant::Gru, true}, {CellVariant::Lstm, true}, {CellVariant::SimpleRnn, false}};
  for (const CellKind& cell : cells)
    for (double lr : kLearningRateGrid)
      for (std::size_t hidden : kHiddenGrid)
        for (std::size_t seq : kAuSequenceGrid)
          for (std::size_t layers : kLayerGrid) {
            ExperimentConfig c = base;
            c.network.cell = cell;
            c.network.learning_rate = lr;
            c.network.hidden_size = hidden;
            c.network.sequence_length = seq;
            c.network.num_layers = layers;
            c.network.fc_hidden = 10;
            c.network.outputs = 2;
            out.push_back(c);
          }
  return out;
}

}  // namespace fedseq
