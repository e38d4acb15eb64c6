// SPDX-License-Identifier: Apache-2.0
#include "fedseq/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "fedseq/error.hpp"
#include "fedseq/rng.hpp"

namespace fedseq {
namespace fs = std::filesystem;
namespace {

constexpr const char* kDimensions[2] = {"valence", "arousal"};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_number(const std::string& field, const fs::path& path, std::size_t line_no) {
  const std::string t = trim(field);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (!t.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (t.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": malformed number '" + t + "'");
  }
  if (!std::isfinite(value)) {
    fail(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": non-finite value");
  }
  return value;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (table.header.empty()) {
      for (auto& f : fields) table.header.push_back(trim(f));
      continue;
    }
    if (fields.size() != table.header.size()) {
      fail(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(table.header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_number(f, path, line_no));
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) fail(ErrorCode::Parse, path.string() + ": missing header");
  if (table.rows.empty()) fail(ErrorCode::Parse, path.string() + ": no data rows");
  return table;
}

void check_time_alignment(const CsvTable& features, const CsvTable& labels, const fs::path& label_path) {
  if (labels.rows.size() != features.rows.size()) {
    fail(ErrorCode::Parse, label_path.string() + ": " + std::to_string(labels.rows.size()) +
                               " frames, features have " + std::to_string(features.rows.size()));
  }
  for (std::size_t i = 0; i < labels.rows.size(); ++i) {
    if (std::abs(labels.rows[i][0] - features.rows[i][0]) > 1e-6) {
      fail(ErrorCode::Parse, label_path.string() + ": time_ms of frame " + std::to_string(i) +
                                 " does not match the feature file");
    }
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_label(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

void FeatureSequence::validate() const {
  require(!participant_id.empty(), ErrorCode::InvalidArgument, "participant id must not be empty");
  require(frames.rank() == 2 && labels.rank() == 2, ErrorCode::ShapeMismatch, "frames and labels must be matrices");
  require(frames.rows() == labels.rows(), ErrorCode::ShapeMismatch,
          participant_id + ": feature and label frame counts differ");
  require(labels.cols() == 2, ErrorCode::ShapeMismatch, participant_id + ": labels must have two columns");
  for (double v : labels.data()) {
    require(v >= -1.0 && v <= 1.0, ErrorCode::InvalidArgument, participant_id + ": label outside [-1, 1]");
  }
  require(frame_period_ms > 0.0, ErrorCode::InvalidArgument, "frame period must be positive");
}

FeatureSequence load_participant(const fs::path& features_path, const fs::path& labels_dir) {
  const CsvTable features = read_csv(features_path);
  require(features.header.size() >= 2 && features.header[0] == "time_ms", ErrorCode::Parse,
          features_path.string() + ": header must start with time_ms");
  for (std::size_t c = 1; c < features.header.size(); ++c) {
    require(features.header[c] == "au_" + std::to_string(c), ErrorCode::Parse,
            features_path.string() + ": expected column au_" + std::to_string(c) + ", got '" +
                features.header[c] + "'");
  }
  const std::size_t n = features.rows.size();
  const std::size_t f = features.header.size() - 1;

  FeatureSequence seq;
  seq.participant_id = features_path.stem().string();
  std::vector<double> frame_values;
  frame_values.reserve(n * f);
  for (const auto& row : features.rows) frame_values.insert(frame_values.end(), row.begin() + 1, row.end());
  seq.frames = Tensor({n, f}, std::move(frame_values));
  if (n >= 2) {
    const double period = features.rows[1][0] - features.rows[0][0];
    if (period > 0.0) seq.frame_period_ms = period;
  }

  std::vector<double> labels(n * 2, 0.0);
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t a = 1; a <= kAnnotatorCount; ++a) {
      const fs::path path = labels_dir / (std::string(kDimensions[d]) + "_" + std::to_string(a) + ".csv");
      const CsvTable trace = read_csv(path);
      require(trace.header.size() == 2 && trace.header[0] == "time_ms" && trace.header[1] == "value",
              ErrorCode::Parse, path.string() + ": header must be time_ms,value");
      check_time_alignment(features, trace, path);
      for (std::size_t i = 0; i < n; ++i) labels[i * 2 + d] += trace.rows[i][1];
    }
  }
  for (std::size_t i = 0; i < n * 2; ++i) {
    labels[i] /= static_cast<double>(kAnnotatorCount);
    if (labels[i] < -1.0 || labels[i] > 1.0) {
      fail(ErrorCode::InvalidArgument, seq.participant_id + ": fused label " + format_double(labels[i]) +
                                           " at frame " + std::to_string(i / 2) + " is outside [-1, 1]");
    }
  }
  seq.labels = Tensor({n, 2}, std::move(labels));
  return seq;
}

std::vector<FeatureSequence> load_dataset(const fs::path& root) {
  const fs::path features_dir = root / "features";
  if (!fs::is_directory(features_dir)) fail(ErrorCode::Io, "no features directory under " + root.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(features_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::Io, "no participant feature files in " + features_dir.string());
  std::vector<FeatureSequence> out;
  out.reserve(files.size());
  for (const auto& file : files) {
    out.push_back(load_participant(file, root / "labels" / file.stem()));
  }
  const std::size_t width = out.front().feature_count();
  for (const auto& s : out) {
    require(s.feature_count() == width, ErrorCode::ShapeMismatch,
            s.participant_id + ": feature width differs from other participants");
  }
  return out;
}

void write_dataset(const fs::path& root, const std::vector<FeatureSequence>& sequences, std::uint64_t jitter_seed) {
  fs::create_directories(root / "features");
  for (const auto& seq : sequences) {
    seq.validate();
    const std::size_t n = seq.frame_count();
    const std::size_t f = seq.feature_count();
    {
      std::ofstream out(root / "features" / (seq.participant_id + ".csv"));
      if (!out) fail(ErrorCode::Io, "cannot write features for " + seq.participant_id);
      out << "time_ms";
      for (std::size_t c = 1; c <= f; ++c) out << ",au_" << c;
      out << '\n';
      for (std::size_t i = 0; i < n; ++i) {
        out << format_double(static_cast<double>(i) * seq.frame_period_ms);
        for (double v : seq.frames.row(i)) out << ',' << format_double(v);
        out << '\n';
      }
      if (!out) fail(ErrorCode::Io, "failed writing features for " + seq.participant_id);
    }

    const fs::path label_dir = root / "labels" / seq.participant_id;
    fs::create_directories(label_dir);
    Rng rng(derive_seed(jitter_seed, "annotators:" + seq.participant_id));
    // Annotators come in pairs (label + j, label - j) so the six-way mean is the label.
    std::vector<std::vector<double>> traces(kAnnotatorCount * 2, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < 2; ++d) {
        const double label = seq.labels.at(i, d);
        for (std::size_t pair = 0; pair < kAnnotatorCount / 2; ++pair) {
          double jitter = kLabelStep * static_cast<double>(rng.below(6));
          if (std::abs(label) + jitter > 1.0) jitter = 0.0;
          traces[d * kAnnotatorCount + 2 * pair][i] = quantize_label(label + jitter);
          traces[d * kAnnotatorCount + 2 * pair + 1][i] = quantize_label(label - jitter);
        }
      }
    }
    for (std::size_t d = 0; d < 2; ++d) {
      for (std::size_t a = 0; a < kAnnotatorCount; ++a) {
        std::ofstream out(label_dir / (std::string(kDimensions[d]) + "_" + std::to_string(a + 1) + ".csv"));
        if (!out) fail(ErrorCode::Io, "cannot write labels for " + seq.participant_id);
        out << "time_ms,value\n";
        const auto& trace = traces[d * kAnnotatorCount + a];
        for (std::size_t i = 0; i < n; ++i) {
          out << format_double(static_cast<double>(i) * seq.frame_period_ms) << ',' << format_label(trace[i]) << '\n';
        }
      }
    }
  }
}

bool NormalizationStats::uses_participant(const std::string& id) const {
  return std::find(sources.begin(), sources.end(), id) != sources.end();
}

NormalizationStats fit_normalizer(const std::vector<FeatureSequence>& train) {
  require(!train.empty(), ErrorCode::InvalidArgument, "fit_normalizer needs at least one training sequence");
  const std::size_t f = train.front().feature_count();
  NormalizationStats stats;
  stats.mean.assign(f, 0.0);
  stats.stddev.assign(f, 0.0);
  double count = 0.0;
  for (const auto& seq : train) {
    require(seq.feature_count() == f, ErrorCode::ShapeMismatch, "training sequences differ in feature width");
    for (std::size_t i = 0; i < seq.frame_count(); ++i) {
      auto row = seq.frames.row(i);
      for (std::size_t c = 0; c < f; ++c) stats.mean[c] += row[c];
    }
    count += static_cast<double>(seq.frame_count());
    stats.sources.push_back(seq.participant_id);
  }
  for (double& m : stats.mean) m /= count;
  for (const auto& seq : train) {
    for (std::size_t i = 0; i < seq.frame_count(); ++i) {
      auto row = seq.frames.row(i);
      for (std::size_t c = 0; c < f; ++c) {
        const double d = row[c] - stats.mean[c];
        stats.stddev[c] += d * d;
      }
    }
  }
  for (double& s : stats.stddev) {
    s = std::sqrt(s / count);
    if (s < 1e-8) s = 1.0;
  }
  std::sort(stats.sources.begin(), stats.sources.end());
  return stats;
}

FeatureSequence apply_normalizer(const NormalizationStats& stats, const FeatureSequence& seq) {
  require(seq.feature_count() == stats.mean.size(), ErrorCode::ShapeMismatch,
          seq.participant_id + ": feature width does not match normalization statistics");
  FeatureSequence out = seq;
  const std::size_t f = seq.feature_count();
  for (std::size_t i = 0; i < out.frame_count(); ++i) {
    auto row = out.frames.row(i);
    for (std::size_t c = 0; c < f; ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
  }
  return out;
}

namespace {

Window slice(const FeatureSequence& seq, std::size_t start, std::size_t length) {
  const std::size_t f = seq.feature_count();
  const std::size_t o = seq.labels.cols();
  std::vector<double> x(seq.frames.data().begin() + static_cast<std::ptrdiff_t>(start * f),
                        seq.frames.data().begin() + static_cast<std::ptrdiff_t>((start + length) * f));
  std::vector<double> y(seq.labels.data().begin() + static_cast<std::ptrdiff_t>(start * o),
                        seq.labels.data().begin() + static_cast<std::ptrdiff_t>((start + length) * o));
  return Window{Tensor({length, f}, std::move(x)), Tensor({length, o}, std::move(y))};
}

}  // namespace

std::vector<Window> window(const FeatureSequence& seq, std::size_t length, std::size_t stride) {
  require(length >= 1, ErrorCode::InvalidArgument, "window length must be >= 1");
  require(stride >= 1, ErrorCode::InvalidArgument, "window stride must be >= 1");
  std::vector<Window> out;
  const std::size_t n = seq.frame_count();
  for (std::size_t start = 0; start + length <= n; start += stride) out.push_back(slice(seq, start, length));
  return out;
}

std::vector<Window> cover_windows(const FeatureSequence& seq, std::size_t length) {
  require(length >= 1, ErrorCode::InvalidArgument, "window length must be >= 1");
  std::vector<Window> out;
  const std::size_t n = seq.frame_count();
  for (std::size_t start = 0; start < n; start += length) out.push_back(slice(seq, start, std::min(length, n - start)));
  return out;
}

std::vector<std::string> FoldPlan::training_participants(std::size_t fold) const {
  require(fold < folds.size(), ErrorCode::InvalidArgument, "fold index out of range");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    if (i != fold) out.insert(out.end(), folds[i].begin(), folds[i].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void FoldPlan::validate_partition(const std::vector<std::string>& participants) const {
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& fold : folds) {
    require(!fold.empty(), ErrorCode::Internal, "fold plan contains an empty fold");
    for (const auto& id : fold) {
      require(seen.insert(id).second, ErrorCode::Internal, "participant " + id + " appears in two folds");
      ++total;
    }
  }
  const std::set<std::string> expected(participants.begin(), participants.end());
  require(seen == expected && total == participants.size(), ErrorCode::Internal,
          "fold plan does not cover the participant set");
}

FoldPlan plan_folds(const std::vector<std::string>& participants, std::size_t k, Rng& rng) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
  require(k <= participants.size(), ErrorCode::InvalidArgument,
          "k = " + std::to_string(k) + " exceeds the number of participants (" +
              std::to_string(participants.size()) + ")");
  const std::set<std::string> unique(participants.begin(), participants.end());
  require(unique.size() == participants.size(), ErrorCode::InvalidArgument, "participant ids must be unique");

  std::vector<std::string> order(unique.begin(), unique.end());
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  FoldPlan plan;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < order.size(); ++i) plan.folds[i % k].push_back(order[i]);
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

double quantize_label(double value) {
  return std::round(value * 100.0) / 100.0;
}

SyntheticTruth synthetic_truth(std::uint64_t seed, std::size_t n_features) {
  require(n_features > 0, ErrorCode::InvalidArgument, "n_features must be positive");
  SyntheticTruth truth;
  truth.features = n_features;
  const std::size_t f = n_features;
  const std::size_t k = truth.latents;
  const std::size_t lags = truth.lags;
  Rng rng(derive_seed(seed, "synthetic-truth"));

  truth.baseline.resize(f);
  truth.scale.resize(f);
  for (std::size_t c = 0; c < f; ++c) {
    truth.baseline[c] = rng.uniform(0.5, 2.0);
    truth.scale[c] = rng.uniform(0.3, 1.0);
  }
  truth.mixing.resize(f * k);
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (double& m : truth.mixing) m = rng.normal() * mix_scale;

  // Lag weights decay geometrically; each dimension is rescaled so its
  // pre-activation has roughly unit variance under a slowly varying latent.
  auto make_weights = [&](std::vector<double>& w) {
    w.resize(lags * f);
    for (std::size_t l = 0; l < lags; ++l) {
      const double decay = std::pow(0.7, static_cast<double>(l));
      for (std::size_t c = 0; c < f; ++c) w[l * f + c] = rng.normal() * decay;
    }
    std::vector<double> summed(f, 0.0);
    for (std::size_t l = 0; l < lags; ++l)
      for (std::size_t c = 0; c < f; ++c) summed[c] += w[l * f + c];
    double variance = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double proj = 0.0;
      for (std::size_t c = 0; c < f; ++c) proj += summed[c] * truth.mixing[c * k + j];
      variance += proj * proj;
    }
    const double gain = 1.2 / std::sqrt(std::max(variance, 1e-12));
    for (double& v : w) v *= gain;
  };
  make_weights(truth.valence_w);
  make_weights(truth.arousal_w);
  truth.valence_bias = rng.uniform(-0.2, 0.2);
  truth.arousal_bias = rng.uniform(-0.2, 0.2);
  return truth;
}

std::vector<FeatureSequence> generate_synthetic(std::size_t n_participants, std::size_t n_frames,
                                                std::uint64_t seed, std::size_t n_features) {
  require(n_participants > 0 && n_frames > 0, ErrorCode::InvalidArgument, "synthetic sizes must be positive");
  const SyntheticTruth truth = synthetic_truth(seed, n_features);
  const std::size_t f = truth.features;
  const std::size_t k = truth.latents;
  const std::size_t lags = truth.lags;

  std::vector<FeatureSequence> out;
  out.reserve(n_participants);
  for (std::size_t p = 0; p < n_participants; ++p) {
    Rng rng(derive_seed(seed, "synthetic-participant", p));
    std::vector<double> phi(k);
    for (double& v : phi) v = rng.uniform(0.9, 0.98);
    std::vector<double> offset(f);
    for (double& v : offset) v = 0.1 * rng.normal();

    std::vector<double> z(k);
    for (double& v : z) v = rng.normal();
    std::vector<double> frames(n_frames * f);
    std::vector<double> unit(n_frames * f);
    for (std::size_t t = 0; t < n_frames; ++t) {
      if (t > 0) {
        for (std::size_t j = 0; j < k; ++j) z[j] = phi[j] * z[j] + std::sqrt(1.0 - phi[j] * phi[j]) * rng.normal();
      }
      for (std::size_t c = 0; c < f; ++c) {
        double mixed = 0.0;
        for (std::size_t j = 0; j < k; ++j) mixed += truth.mixing[c * k + j] * z[j];
        const double x = truth.baseline[c] + offset[c] + truth.scale[c] * mixed + truth.feature_noise * rng.normal();
        frames[t * f + c] = x;
        unit[t * f + c] = (x - truth.baseline[c]) / truth.scale[c];
      }
    }

    std::vector<double> labels(n_frames * 2);
    for (std::size_t t = 0; t < n_frames; ++t) {
      double pre_v = truth.valence_bias;
      double pre_a = truth.arousal_bias;
      for (std::size_t l = 0; l < lags; ++l) {
        const std::size_t src = t >= l ? t - l : 0;
        for (std::size_t c = 0; c < f; ++c) {
          pre_v += truth.valence_w[l * f + c] * unit[src * f + c];
          pre_a += truth.arousal_w[l * f + c] * unit[src * f + c];
        }
      }
      const double v = std::tanh(pre_v) + truth.label_noise * rng.normal();
      const double a = std::tanh(pre_a) + truth.label_noise * rng.normal();
      labels[t * 2] = quantize_label(std::clamp(v, -1.0, 1.0));
      labels[t * 2 + 1] = quantize_label(std::clamp(a, -1.0, 1.0));
    }

    char id[32];
    std::snprintf(id, sizeof id, "P%02zu", p + 1);
    FeatureSequence seq;
    seq.participant_id = id;
    seq.frames = Tensor({n_frames, f}, std::move(frames));
    seq.labels = Tensor({n_frames, 2}, std::move(labels));
    seq.frame_period_ms = 40.0;
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace fedseq
