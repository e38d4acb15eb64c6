// SPDX-License-Identifier: Apache-2.0
#include "fedseq/fedseq.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "fedseq/config.hpp"
#include "fedseq/dataset.hpp"
#include "fedseq/error.hpp"
#include "fedseq/harness.hpp"

struct fedseq_config {
  fedseq::ExperimentConfig value;
};

struct fedseq_report {
  fedseq::RunReport value;
};

struct fedseq_model {
  fedseq::Checkpoint value;
};

namespace {

thread_local std::string last_error;

fedseq_status status_of(fedseq::ErrorCode code) {
  using fedseq::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return FEDSEQ_ERR_INVALID_ARGUMENT;
    case ErrorCode::ShapeMismatch: return FEDSEQ_ERR_SHAPE_MISMATCH;
    case ErrorCode::NonFinite: return FEDSEQ_ERR_NON_FINITE;
    case ErrorCode::Degenerate: return FEDSEQ_ERR_DEGENERATE;
    case ErrorCode::Io: return FEDSEQ_ERR_IO;
    case ErrorCode::Parse: return FEDSEQ_ERR_PARSE;
    case ErrorCode::Protocol: return FEDSEQ_ERR_PROTOCOL;
    case ErrorCode::Timeout: return FEDSEQ_ERR_TIMEOUT;
    case ErrorCode::LayoutMismatch: return FEDSEQ_ERR_LAYOUT_MISMATCH;
    case ErrorCode::Internal: return FEDSEQ_ERR_INTERNAL;
  }
  return FEDSEQ_ERR_UNKNOWN;
}

template <typename F>
fedseq_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return FEDSEQ_OK;
  } catch (const fedseq::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return FEDSEQ_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FEDSEQ_ERR_UNKNOWN;
  } catch (...) {
    last_error = "unknown error";
    return FEDSEQ_ERR_UNKNOWN;
  }
}

void need(const void* p, const char* what) {
  fedseq::require(p != nullptr, fedseq::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

fedseq_metrics to_c(const fedseq::MetricReport& m) {
  return fedseq_metrics{m.valence_ccc, m.arousal_ccc, m.valence_pearson, m.arousal_pearson, m.n_frames};
}

std::vector<fedseq::ExperimentConfig> grid(const fedseq::ExperimentConfig& base, int search) {
  return search ? fedseq::paper_search_grid(base) : fedseq::paper_optima(base);
}

}  // namespace

extern "C" {

const char* fedseq_version(void) { return FEDSEQ_VERSION; }

const char* fedseq_build_fingerprint(void) {
  static const std::string fingerprint = fedseq::build_fingerprint();
  return fingerprint.c_str();
}

const char* fedseq_last_error(void) { return last_error.c_str(); }

const char* fedseq_status_name(fedseq_status status) {
  switch (status) {
    case FEDSEQ_OK: return "ok";
    case FEDSEQ_ERR_UNKNOWN: return "unknown";
    default: return fedseq::to_string(static_cast<fedseq::ErrorCode>(status));
  }
}

void fedseq_string_free(char* s) { std::free(s); }

fedseq_status fedseq_config_new(fedseq_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new fedseq_config{};
  });
}

fedseq_status fedseq_config_load(const char* path, fedseq_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new fedseq_config{fedseq::ExperimentConfig::load(path)};
  });
}

fedseq_status fedseq_config_parse(const char* text, fedseq_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new fedseq_config{fedseq::ExperimentConfig::parse(text)};
  });
}

fedseq_status fedseq_config_set(fedseq_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->value.set(key, value);
  });
}

fedseq_status fedseq_config_get(const fedseq_config* config, const char* key, char** out) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(out, "out");
    std::istringstream in(config->value.to_text());
    const std::string prefix = std::string(key) + " = ";
    for (std::string line; std::getline(in, line);) {
      if (line.rfind(prefix, 0) == 0) {
        *out = copy_string(line.substr(prefix.size()));
        return;
      }
    }
    fedseq::fail(fedseq::ErrorCode::InvalidArgument, std::string("unknown config key '") + key + "'");
  });
}

fedseq_status fedseq_config_validate(const fedseq_config* config) {
  return guarded([&] {
    need(config, "config");
    config->value.validate();
  });
}

fedseq_status fedseq_config_check_paper_grid(const fedseq_config* config, char** warnings) {
  return guarded([&] {
    need(config, "config");
    need(warnings, "warnings");
    std::string joined;
    for (const std::string& w : fedseq::validate_paper_grid(config->value)) joined += w + '\n';
    *warnings = copy_string(joined);
  });
}

fedseq_status fedseq_config_to_text(const fedseq_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = copy_string(config->value.to_text());
  });
}

void fedseq_config_free(fedseq_config* config) { delete config; }

fedseq_status fedseq_grid_size(const fedseq_config* base, int search, size_t* count) {
  return guarded([&] {
    need(base, "base");
    need(count, "count");
    *count = grid(base->value, search).size();
  });
}

fedseq_status fedseq_grid_config(const fedseq_config* base, int search, size_t index, fedseq_config** out) {
  return guarded([&] {
    need(base, "base");
    need(out, "out");
    auto configs = grid(base->value, search);
    fedseq::require(index < configs.size(), fedseq::ErrorCode::InvalidArgument, "grid index out of range");
    *out = new fedseq_config{std::move(configs[index])};
  });
}

fedseq_status fedseq_run_cross_validation(const fedseq_config* config, fedseq_report** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new fedseq_report{fedseq::run_cross_validation(config->value)};
  });
}

fedseq_status fedseq_report_format(const fedseq_report* report, const char* format, char** out) {
  return guarded([&] {
    need(report, "report");
    need(format, "format");
    need(out, "out");
    *out = copy_string(fedseq::format_report(report->value, fedseq::parse_report_format(format)));
  });
}

fedseq_status fedseq_report_parse_jsonl(const char* text, fedseq_report** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new fedseq_report{fedseq::parse_report_jsonl(text)};
  });
}

fedseq_status fedseq_report_mean_ccc(const fedseq_report* report, double* valence, double* arousal) {
  return guarded([&] {
    need(report, "report");
    need(valence, "valence");
    need(arousal, "arousal");
    *valence = report->value.mean_valence_ccc();
    *arousal = report->value.mean_arousal_ccc();
  });
}

fedseq_status fedseq_report_fold_count(const fedseq_report* report, size_t* count) {
  return guarded([&] {
    need(report, "report");
    need(count, "count");
    *count = report->value.folds().size();
  });
}

fedseq_status fedseq_report_fold_metrics(const fedseq_report* report, size_t fold, fedseq_metrics* out) {
  return guarded([&] {
    need(report, "report");
    need(out, "out");
    fedseq::require(fold < report->value.folds().size(), fedseq::ErrorCode::InvalidArgument,
                    "fold index out of range");
    *out = to_c(report->value.folds()[fold].metrics);
  });
}

void fedseq_report_free(fedseq_report* report) { delete report; }

fedseq_status fedseq_generate_synthetic(size_t participants, size_t frames, uint64_t seed, size_t features,
                                        const char* out_dir) {
  return guarded([&] {
    need(out_dir, "out_dir");
    fedseq::require(participants > 0 && frames > 0 && features > 0, fedseq::ErrorCode::InvalidArgument,
                    "participants, frames and features must be positive");
    fedseq::write_dataset(out_dir, fedseq::generate_synthetic(participants, frames, seed, features), seed);
  });
}

fedseq_status fedseq_model_load(const char* path, fedseq_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new fedseq_model{fedseq::load_checkpoint(path)};
  });
}

fedseq_status fedseq_model_save(const fedseq_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    fedseq::save_checkpoint(path, model->value);
  });
}

fedseq_status fedseq_model_describe(const fedseq_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    const fedseq::NetworkConfig& n = model->value.network;
    std::ostringstream os;
    os << fedseq::network_label(n.cell) << " hidden=" << n.hidden_size << " layers=" << n.num_layers
       << " sequence_length=" << n.sequence_length << " parameters=" << model->value.params.element_count()
       << " normalization=" << fedseq::to_string(model->value.normalization);
    *out = copy_string(os.str());
  });
}

fedseq_status fedseq_evaluate(const fedseq_model* model, const char* data_dir, const char* pooling,
                              fedseq_metrics* out) {
  return guarded([&] {
    need(model, "model");
    need(data_dir, "data_dir");
    need(out, "out");
    fedseq::CccPooling mode = fedseq::CccPooling::PooledPerFold;
    if (pooling != nullptr) {
      const std::string p = pooling;
      if (p == "per_participant") {
        mode = fedseq::CccPooling::PerParticipant;
      } else {
        fedseq::require(p == "pooled", fedseq::ErrorCode::InvalidArgument,
                        "pooling must be pooled or per_participant");
      }
    }
    *out = to_c(fedseq::evaluate_checkpoint(model->value, fedseq::load_dataset(data_dir), mode));
  });
}

void fedseq_model_free(fedseq_model* model) { delete model; }

fedseq_status fedseq_serve_federated(const fedseq_config* config, const char* listen_address,
                                     fedseq_ready_fn ready, void* user, fedseq_model** out) {
  return guarded([&] {
    need(config, "config");
    need(listen_address, "listen_address");
    need(out, "out");
    auto on_ready = [&](std::uint16_t port) {
      if (ready != nullptr) ready(port, user);
    };
    *out = new fedseq_model{fedseq::serve_federated(config->value, listen_address, on_ready)};
  });
}

fedseq_status fedseq_run_client(const char* server_address, const char* participant_id, const char* data_dir,
                                const fedseq_config* config, uint32_t* rounds) {
  return guarded([&] {
    need(server_address, "server_address");
    need(participant_id, "participant_id");
    need(data_dir, "data_dir");
    std::optional<fedseq::ExperimentConfig> cfg;
    if (config != nullptr) cfg = config->value;
    const std::uint32_t n = fedseq::run_federated_client(server_address, participant_id, data_dir, cfg);
    if (rounds != nullptr) *rounds = n;
  });
}

}  // extern "C"
