// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "fedseq/error.hpp"
#include "fedseq/harness.hpp"

namespace fedseq {
namespace {

using nlohmann::json;

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string exact(double v) { return fmt("%.17g", v); }

std::string join(const std::vector<std::string>& ids, char sep) {
  std::string out;
  for (const std::string& id : ids) {
    if (!out.empty()) out += sep;
    out += id;
  }
  return out;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string text_table(const RunReport& r) {
  std::ostringstream os;
  const bool federated = r.method() == "Level2-FL";
  const std::size_t w[] = {11, 9, 13, 13, 14, 22};
  auto row = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i + 1 < cells.size() ? pad(cells[i], w[i]) : cells[i]);
    os << '\n';
  };
  row({"method", "network", "valence CCC", "arousal CCC", "train time(s)", "inference 100/500 (s)"});
  row({r.method(), r.network(), fmt("%.3f", r.mean_valence_ccc()), fmt("%.3f", r.mean_arousal_ccc()),
       fmt("%.1f", federated ? r.simulated_parallel_seconds() : r.total_train_seconds()),
       fmt("%.4f", r.mean_inference_100_seconds()) + " / " + fmt("%.4f", r.mean_inference_500_seconds())});
  if (federated) {
    os << "(federated train time is total client training time / clients; sequential total "
       << fmt("%.1f", r.total_train_seconds()) << " s)\n";
  }
  os << '\n';
  os << pad("fold", 6) << pad("eval participants", 20) << pad("valence CCC", 13) << pad("arousal CCC", 13)
     << pad("train(s)", 10) << "frames\n";
  for (const FoldResult& f : r.folds()) {
    os << pad(std::to_string(f.fold + 1), 6) << pad(join(f.eval_participants, ','), 20)
       << pad(fmt("%.4f", f.metrics.valence_ccc), 13) << pad(fmt("%.4f", f.metrics.arousal_ccc), 13)
       << pad(fmt("%.1f", f.train_seconds), 10) << f.metrics.n_frames << '\n';
  }
  os << '\n' << "wall time " << fmt("%.1f", r.wall_seconds()) << " s; " << r.build() << '\n';
  for (const std::string& w : r.warnings()) os << "warning: " << w << '\n';
  return os.str();
}

std::string csv(const RunReport& r) {
  std::ostringstream os;
  os << "method,network,fold,eval_participants,n_frames,valence_ccc,arousal_ccc,valence_pearson,arousal_pearson,"
        "train_seconds,clients,parallel_seconds,inference_100_seconds,inference_500_seconds\n";
  for (const FoldResult& f : r.folds()) {
    os << r.method() << ',' << r.network() << ',' << f.fold + 1 << ',' << join(f.eval_participants, ';') << ','
       << f.metrics.n_frames << ',' << exact(f.metrics.valence_ccc) << ',' << exact(f.metrics.arousal_ccc) << ','
       << exact(f.metrics.valence_pearson) << ',' << exact(f.metrics.arousal_pearson) << ','
       << exact(f.train_seconds) << ',' << f.clients << ',' << exact(f.parallel_seconds) << ','
       << exact(f.inference_100_seconds) << ',' << exact(f.inference_500_seconds) << '\n';
  }
  return os.str();
}

json fold_json(const FoldResult& f) {
  return json{{"record", "fold"},
              {"fold", f.fold},
              {"eval_participants", f.eval_participants},
              {"train_participants", f.train_participants},
              {"n_frames", f.metrics.n_frames},
              {"valence_ccc", f.metrics.valence_ccc},
              {"arousal_ccc", f.metrics.arousal_ccc},
              {"valence_pearson", f.metrics.valence_pearson},
              {"arousal_pearson", f.metrics.arousal_pearson},
              {"train_seconds", f.train_seconds},
              {"clients", f.clients},
              {"parallel_seconds", f.parallel_seconds},
              {"inference_100_seconds", f.inference_100_seconds},
              {"inference_500_seconds", f.inference_500_seconds}};
}

std::string jsonl(const RunReport& r) {
  json run{{"record", "run"},
           {"method", r.method()},
           {"network", r.network()},
           {"folds", r.folds().size()},
           {"mean_valence_ccc", r.mean_valence_ccc()},
           {"mean_arousal_ccc", r.mean_arousal_ccc()},
           {"total_train_seconds", r.total_train_seconds()},
           {"simulated_parallel_seconds", r.simulated_parallel_seconds()},
           {"wall_seconds", r.wall_seconds()},
           {"config", r.config_text()},
           {"build", r.build()},
           {"warnings", r.warnings()}};
  std::string out = run.dump() + '\n';
  for (const FoldResult& f : r.folds()) out += fold_json(f).dump() + '\n';
  return out;
}

}  // namespace

ReportFormat parse_report_format(const std::string& text) {
  if (text == "text") return ReportFormat::Text;
  if (text == "csv") return ReportFormat::Csv;
  if (text == "jsonl" || text == "json-lines") return ReportFormat::JsonLines;
  fail(ErrorCode::InvalidArgument, "unknown report format '" + text + "' (expected text, csv or jsonl)");
}

std::string format_report(const RunReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Text: return text_table(report);
    case ReportFormat::Csv: return csv(report);
    case ReportFormat::JsonLines: return jsonl(report);
  }
  return {};
}

RunReport parse_report_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::optional<json> run;
  std::vector<FoldResult> folds;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string record = j.at("record");
      if (record == "run") {
        require(!run, ErrorCode::Parse, "report: more than one run record");
        run = j;
      } else if (record == "fold") {
        FoldResult f;
        f.fold = j.at("fold");
        f.eval_participants = j.at("eval_participants").get<std::vector<std::string>>();
        f.train_participants = j.at("train_participants").get<std::vector<std::string>>();
        f.metrics.n_frames = j.at("n_frames");
        f.metrics.valence_ccc = j.at("valence_ccc");
        f.metrics.arousal_ccc = j.at("arousal_ccc");
        f.metrics.valence_pearson = j.at("valence_pearson");
        f.metrics.arousal_pearson = j.at("arousal_pearson");
        f.train_seconds = j.at("train_seconds");
        f.clients = j.at("clients");
        f.parallel_seconds = j.at("parallel_seconds");
        f.inference_100_seconds = j.at("inference_100_seconds");
        f.inference_500_seconds = j.at("inference_500_seconds");
        folds.push_back(std::move(f));
      } else {
        fail(ErrorCode::Parse, "report: unknown record type '" + record + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("report: ") + e.what());
  }
  require(run.has_value(), ErrorCode::Parse, "report: missing run record");
  const json& r = *run;
  require(r.at("folds").get<std::size_t>() == folds.size(), ErrorCode::Parse, "report: fold count mismatch");
  return RunReport(r.at("method"), r.at("network"), std::move(folds), r.at("wall_seconds"), r.at("config"),
                   r.at("build"), r.at("warnings").get<std::vector<std::string>>());
}

}  // namespace fedseq
