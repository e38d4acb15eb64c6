// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "fedseq/error.hpp"
#include "fedseq/harness.hpp"
#include "fedseq/wire.hpp"

namespace fedseq {
namespace {

constexpr const char* kMagicLine = "fedseq-checkpoint 1";

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    if (i) out += ' ';
    out += buf;
  }
  return out;
}

std::vector<double> split_doubles(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      fail(ErrorCode::Parse, "checkpoint: bad number '" + token + "'");
    }
  }
  return out;
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string id;
  while (std::getline(in, id, ',')) {
    if (!id.empty()) out.push_back(id);
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  checkpoint.network.validate();
  require_same_layout(network_layout(checkpoint.network), checkpoint.params, "checkpoint");
  const Bytes payload = encode_parameter_set(checkpoint.params);

  ExperimentConfig echo;
  echo.network = checkpoint.network;
  std::ostringstream header;
  header << kMagicLine << '\n';
  // Only the network keys of the config format.
  std::istringstream config_lines(echo.to_text());
  for (std::string line; std::getline(config_lines, line);) {
    const std::string key = line.substr(0, line.find(' '));
    if (key == "cell" || key == "bidirectional" || key == "input_size" || key == "hidden_size" ||
        key == "num_layers" || key == "fc_hidden" || key == "outputs" || key == "sequence_length" ||
        key == "learning_rate") {
      header << line << '\n';
    }
  }
  header << "normalization = " << to_string(checkpoint.normalization) << '\n';
  if (checkpoint.stats) {
    std::string sources;
    for (const std::string& id : checkpoint.stats->sources) sources += (sources.empty() ? "" : ",") + id;
    header << "norm_sources = " << sources << '\n'
           << "norm_mean = " << join_doubles(checkpoint.stats->mean) << '\n'
           << "norm_std = " << join_doubles(checkpoint.stats->stddev) << '\n';
  }
  header << "payload_bytes = " << payload.size() << "\n\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write checkpoint " + path.string());
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ErrorCode::Io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == kMagicLine, ErrorCode::Parse, path.string() + " is not a fedseq checkpoint");

  std::map<std::string, std::string> fields;
  while (std::getline(in, line) && !line.empty()) {
    const auto eq = line.find(" = ");
    require(eq != std::string::npos, ErrorCode::Parse, "checkpoint: malformed header line '" + line + "'");
    fields[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto take = [&](const std::string& key) {
    auto it = fields.find(key);
    require(it != fields.end(), ErrorCode::Parse, "checkpoint: missing '" + key + "'");
    std::string v = it->second;
    fields.erase(it);
    return v;
  };

  ExperimentConfig config;
  for (const char* key : {"cell", "bidirectional", "input_size", "hidden_size", "num_layers", "fc_hidden", "outputs",
                          "sequence_length", "learning_rate"}) {
    config.set(key, take(key));
  }
  Checkpoint checkpoint;
  checkpoint.network = config.network;
  checkpoint.network.validate();
  const std::string normalization = take("normalization");
  if (normalization == "per_participant") {
    checkpoint.normalization = Normalization::PerParticipant;
  } else {
    require(normalization == "training_fold", ErrorCode::Parse, "checkpoint: unknown normalization");
    NormalizationStats stats;
    stats.sources = split_ids(take("norm_sources"));
    stats.mean = split_doubles(take("norm_mean"));
    stats.stddev = split_doubles(take("norm_std"));
    require(stats.mean.size() == checkpoint.network.input_size && stats.stddev.size() == stats.mean.size(),
            ErrorCode::Parse, "checkpoint: normalisation statistics do not match input_size");
    checkpoint.stats = std::move(stats);
  }

  const std::string size_text = take("payload_bytes");
  std::size_t size = 0;
  try {
    size = std::stoull(size_text);
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, "checkpoint: bad payload_bytes");
  }
  require(fields.empty(), ErrorCode::Parse, "checkpoint: unexpected header key '" +
                                                (fields.empty() ? std::string() : fields.begin()->first) + "'");
  Bytes payload(size);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(size));
  require(static_cast<std::size_t>(in.gcount()) == size, ErrorCode::Parse, "checkpoint: truncated payload");
  require(in.peek() == std::char_traits<char>::eof(), ErrorCode::Parse, "checkpoint: trailing bytes");
  checkpoint.params = decode_parameter_set(payload);
  require_same_layout(network_layout(checkpoint.network), checkpoint.params, "checkpoint");
  return checkpoint;
}

}  // namespace fedseq
