// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Talks to the library only through fedseq.h.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedseq/fedseq.h"

namespace {

struct Failure : std::runtime_error {
  Failure(fedseq_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
  fedseq_status status;
};

void check(fedseq_status status) {
  if (status != FEDSEQ_OK) throw Failure(status, fedseq_last_error());
}

struct ConfigDeleter {
  void operator()(fedseq_config* c) const { fedseq_config_free(c); }
};
struct ReportDeleter {
  void operator()(fedseq_report* r) const { fedseq_report_free(r); }
};
struct ModelDeleter {
  void operator()(fedseq_model* m) const { fedseq_model_free(m); }
};
using ConfigPtr = std::unique_ptr<fedseq_config, ConfigDeleter>;
using ReportPtr = std::unique_ptr<fedseq_report, ReportDeleter>;
using ModelPtr = std::unique_ptr<fedseq_model, ModelDeleter>;

std::string take_string(char* s) {
  std::string out = s != nullptr ? s : "";
  fedseq_string_free(s);
  return out;
}

ConfigPtr load_config(const std::string& path, const std::vector<std::string>& overrides) {
  fedseq_config* raw = nullptr;
  if (path.empty()) {
    check(fedseq_config_new(&raw));
  } else {
    check(fedseq_config_load(path.c_str(), &raw));
  }
  ConfigPtr config(raw);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure(FEDSEQ_ERR_INVALID_ARGUMENT, "--set expects key=value, got " + kv);
    check(fedseq_config_set(config.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  return config;
}

std::string get(const fedseq_config* config, const char* key) {
  char* out = nullptr;
  check(fedseq_config_get(config, key, &out));
  return take_string(out);
}

void print_grid_warnings(const fedseq_config* config) {
  if (get(config, "paper_grid") != "true") return;
  char* warnings = nullptr;
  check(fedseq_config_check_paper_grid(config, &warnings));
  const std::string text = take_string(warnings);
  if (!text.empty()) std::cerr << text;
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Failure(FEDSEQ_ERR_IO, "cannot write " + path);
  out << text;
  std::cerr << "report written to " << path << '\n';
}

void run_cv(fedseq_config* config, const std::string& format_override) {
  check(fedseq_config_validate(config));
  print_grid_warnings(config);
  fedseq_report* raw = nullptr;
  check(fedseq_run_cross_validation(config, &raw));
  ReportPtr report(raw);
  const std::string format = format_override.empty() ? get(config, "report_format") : format_override;
  char* text = nullptr;
  check(fedseq_report_format(report.get(), format.c_str(), &text));
  emit(take_string(text), get(config, "output"));
}

void print_metrics(const fedseq_metrics& m) {
  std::printf("frames       %zu\n", m.n_frames);
  std::printf("valence CCC  %.4f  (Pearson %.4f)\n", m.valence_ccc, m.valence_pearson);
  std::printf("arousal CCC  %.4f  (Pearson %.4f)\n", m.arousal_ccc, m.arousal_pearson);
}

void on_ready(uint16_t port, void*) {
  std::cerr << "listening on port " << port << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated sequence regression of valence and arousal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("fedseq ") + fedseq_version());

  std::string config_path;
  std::vector<std::string> overrides;
  std::string format;

  auto* central = app.add_subcommand("train-central", "Participant-wise k-fold CV with pooled training");
  central->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  central->add_option("--set", overrides, "Override a config key (key=value)");
  central->add_option("--format", format, "Report format: text, csv or jsonl");

  std::string transport = "sim";
  std::string listen = "127.0.0.1:0";
  std::string model_out;
  std::size_t clients = 0;
  auto* federated = app.add_subcommand("train-federated", "Federated training (simulated CV or TCP server)");
  federated->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  federated->add_option("--set", overrides, "Override a config key (key=value)");
  federated->add_option("--format", format, "Report format: text, csv or jsonl (sim only)");
  federated->add_option("--transport", transport, "sim or tcp")->check(CLI::IsMember({"sim", "tcp"}));
  federated->add_option("--listen", listen, "Listen address for tcp, host:port");
  federated->add_option("--clients", clients, "Number of TCP clients to wait for (overrides federated_clients)");
  federated->add_option("--model", model_out, "Where to save the final global model (tcp)");

  std::string server, participant, data_dir;
  auto* client = app.add_subcommand("client", "Run one federated client over TCP");
  client->add_option("--server", server, "Server address host:port")->required();
  client->add_option("--participant", participant, "Participant id, e.g. P03")->required();
  client->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  client->add_option("--config", config_path, "Training settings; the architecture comes from the server if omitted")
      ->check(CLI::ExistingFile);

  std::string model_path, pooling = "pooled";
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a saved model on a dataset");
  evaluate->add_option("--model", model_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--pooling", pooling, "pooled or per_participant")
      ->check(CLI::IsMember({"pooled", "per_participant"}));

  std::size_t participants = 23, frames = 7501, features = 40;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic dataset in the on-disk layout");
  gen->add_option("--participants", participants, "Number of participants")->check(CLI::PositiveNumber);
  gen->add_option("--frames", frames, "Frames per participant")->check(CLI::PositiveNumber);
  gen->add_option("--features", features, "Feature columns")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out_dir, "Output directory")->required();

  bool paper_grid = false, search = false, dry_run = false;
  std::size_t limit = 0;
  auto* grid = app.add_subcommand("grid", "Run the published configurations or the full search grid");
  grid->add_flag("--paper-grid", paper_grid, "Validate every configuration against the published grid");
  grid->add_flag("--search", search, "Full search grid instead of the published optima");
  grid->add_flag("--dry-run", dry_run, "List configurations without training");
  grid->add_option("--limit", limit, "Run at most this many configurations");
  grid->add_option("--config", config_path, "Base config (data_dir, epochs, seed, ...)")->check(CLI::ExistingFile);
  grid->add_option("--set", overrides, "Override a base config key (key=value)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*central) {
      ConfigPtr config = load_config(config_path, overrides);
      check(fedseq_config_set(config.get(), "mode", "central_au"));
      run_cv(config.get(), format);
    } else if (*federated) {
      ConfigPtr config = load_config(config_path, overrides);
      check(fedseq_config_set(config.get(), "mode", "federated"));
      if (transport == "sim") {
        run_cv(config.get(), format);
      } else {
        if (clients > 0) check(fedseq_config_set(config.get(), "federated_clients", std::to_string(clients).c_str()));
        check(fedseq_config_validate(config.get()));
        print_grid_warnings(config.get());
        fedseq_model* raw = nullptr;
        check(fedseq_serve_federated(config.get(), listen.c_str(), on_ready, nullptr, &raw));
        ModelPtr model(raw);
        const std::string path = model_out.empty() ? get(config.get(), "checkpoint") : model_out;
        if (!path.empty()) {
          check(fedseq_model_save(model.get(), path.c_str()));
          std::cerr << "model saved to " << path << '\n';
        }
        std::cout << "federated training finished\n";
      }
    } else if (*client) {
      ConfigPtr config;
      if (!config_path.empty()) config = load_config(config_path, {});
      uint32_t rounds = 0;
      check(fedseq_run_client(server.c_str(), participant.c_str(), data_dir.c_str(), config.get(), &rounds));
      std::cout << "client " << participant << " finished after " << rounds << " rounds\n";
    } else if (*evaluate) {
      fedseq_model* raw = nullptr;
      check(fedseq_model_load(model_path.c_str(), &raw));
      ModelPtr model(raw);
      char* description = nullptr;
      check(fedseq_model_describe(model.get(), &description));
      std::cout << take_string(description) << '\n';
      fedseq_metrics m{};
      check(fedseq_evaluate(model.get(), data_dir.c_str(), pooling.c_str(), &m));
      print_metrics(m);
    } else if (*gen) {
      check(fedseq_generate_synthetic(participants, frames, seed, features, out_dir.c_str()));
      std::cout << "wrote " << participants << " participants x " << frames << " frames to " << out_dir << '\n';
    } else if (*grid) {
      ConfigPtr base = load_config(config_path, overrides);
      std::size_t count = 0;
      check(fedseq_grid_size(base.get(), search, &count));
      if (limit > 0 && limit < count) count = limit;
      for (std::size_t i = 0; i < count; ++i) {
        fedseq_config* raw = nullptr;
        check(fedseq_grid_config(base.get(), search, i, &raw));
        ConfigPtr config(raw);
        if (paper_grid) check(fedseq_config_set(config.get(), "paper_grid", "true"));
        const std::string label = get(config.get(), "mode") + " " + get(config.get(), "cell") +
                                  (get(config.get(), "bidirectional") == "true" ? " bi" : "") +
                                  " lr=" + get(config.get(), "learning_rate") + " seq=" +
                                  get(config.get(), "sequence_length") + " hidden=" +
                                  get(config.get(), "hidden_size") + " layers=" + get(config.get(), "num_layers");
        if (paper_grid) {
          char* warnings = nullptr;
          check(fedseq_config_check_paper_grid(config.get(), &warnings));
          std::string w = take_string(warnings);
          for (std::size_t pos; (pos = w.find('\n')) != std::string::npos; w.erase(0, pos + 1)) {
            std::cerr << "[" << i + 1 << "] warning: " << w.substr(0, pos) << '\n';
          }
        }
        if (dry_run) {
          std::cout << i + 1 << '\t' << label << '\n';
          continue;
        }
        check(fedseq_config_set(config.get(), "output", ""));
        fedseq_report* report_raw = nullptr;
        check(fedseq_run_cross_validation(config.get(), &report_raw));
        ReportPtr report(report_raw);
        double valence = 0.0, arousal = 0.0;
        check(fedseq_report_mean_ccc(report.get(), &valence, &arousal));
        std::printf("%zu\t%s\tvalence CCC %.4f\tarousal CCC %.4f\n", i + 1, label.c_str(), valence, arousal);
        std::fflush(stdout);
      }
    }
  } catch (const Failure& f) {
    std::cerr << "error (" << fedseq_status_name(f.status) << "): " << f.what() << '\n';
    return static_cast<int>(f.status);
  }
  return 0;
}
