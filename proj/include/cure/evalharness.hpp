#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cure/domain.hpp"
#include "cure/engine.hpp"
#include "cure/errors.hpp"

namespace cure {

inline const std::vector<DatasetKind>& all_dataset_kinds() {
  static const std::vector<DatasetKind> kinds{DatasetKind::MedQA, DatasetKind::MedMCQA,
                                              DatasetKind::PubMedQA};
  return kinds;
}

struct Metrics {
  DatasetKind dataset = DatasetKind::MedQA;
  AblationMode mode = AblationMode::FullFramework;
  std::size_t n_total = 0;
  std::size_t n_direct = 0;
  std::size_t n_collab = 0;
  double acc_overall = 0.0;
  std::optional<double> acc_direct;  // absent when the pathway is empty, never 0/0
  std::optional<double> acc_collab;
  // Helper agreement-with-gold rates over the collaborative subset; this
  // artifact's well-defined per-component accounting.
  std::optional<double> helper1_gold_rate;
  std::optional<double> helper2_gold_rate;
};

/// Residual of the pathway-weighted identity
/// acc_overall*n = acc_direct*n_direct + acc_collab*n_collab.
inline double metrics_identity_gap(const Metrics& m) {
  const double lhs = m.acc_overall * static_cast<double>(m.n_total);
  const double rhs = m.acc_direct.value_or(0.0) * static_cast<double>(m.n_direct) +
                     m.acc_collab.value_or(0.0) * static_cast<double>(m.n_collab);
  return std::fabs(lhs - rhs);
}

inline json to_json(const Metrics& m) {
  json j{{"dataset", to_string(m.dataset)}, {"mode", to_string(m.mode)},
         {"n_total", m.n_total},           {"n_direct", m.n_direct},
         {"n_collab", m.n_collab},         {"acc_overall", m.acc_overall}};
  if (m.acc_direct) j["acc_direct"] = *m.acc_direct;
  if (m.acc_collab) j["acc_collab"] = *m.acc_collab;
  if (m.helper1_gold_rate) j["helper1_gold_rate"] = *m.helper1_gold_rate;
  if (m.helper2_gold_rate) j["helper2_gold_rate"] = *m.helper2_gold_rate;
  return j;
}

inline bool grade(const PipelineRecord& record, const Question& q) {
  if (record.question_id != q.id)
    throw IdMismatchError("record for " + record.question_id + " graded against " + q.id);
  return record.final_answer == q.gold;
}

/// Single pass over a record stream that must cover every question exactly
/// once. Correctness is recomputed from (final_answer, gold).
inline Metrics compute_metrics(const std::vector<PipelineRecord>& records,
                               const std::vector<Question>& questions, AblationMode mode) {
  if (records.size() != questions.size())
    throw CoverageGapError("have " + std::to_string(records.size()) + " records for " +
                           std::to_string(questions.size()) + " questions");
  std::unordered_map<std::string, const Question*> by_id;
  for (const auto& q : questions) by_id[q.id] = &q;
  if (by_id.size() != questions.size()) throw CoverageGapError("duplicate question ids");

  Metrics m;
  m.mode = mode;
  if (!questions.empty()) m.dataset = questions.front().dataset;

  std::size_t correct_direct = 0, correct_collab = 0;
  std::size_t helper1_hits = 0, helper2_hits = 0;
  std::unordered_map<std::string, bool> seen;
  for (const auto& record : records) {
    auto it = by_id.find(record.question_id);
    if (it == by_id.end())
      throw CoverageGapError("record for unknown question " + record.question_id);
    if (!seen.emplace(record.question_id, true).second)
      throw CoverageGapError("duplicate record for question " + record.question_id);
    const Question& q = *it->second;
    const bool is_correct = grade(record, q);
    if (record.pathway == Pathway::Direct) {
      ++m.n_direct;
      correct_direct += is_correct ? 1 : 0;
    } else {
      ++m.n_collab;
      correct_collab += is_correct ? 1 : 0;
      if (record.candidates) {
        helper1_hits += record.candidates->first.chosen_label == q.gold ? 1 : 0;
        helper2_hits += record.candidates->second.chosen_label == q.gold ? 1 : 0;
      }
    }
  }

  m.n_total = records.size();
  m.acc_overall = m.n_total == 0 ? 0.0
                                 : static_cast<double>(correct_direct + correct_collab) /
                                       static_cast<double>(m.n_total);
  if (m.n_direct > 0)
    m.acc_direct = static_cast<double>(correct_direct) / static_cast<double>(m.n_direct);
  if (m.n_collab > 0) {
    m.acc_collab = static_cast<double>(correct_collab) / static_cast<double>(m.n_collab);
    m.helper1_gold_rate = static_cast<double>(helper1_hits) / static_cast<double>(m.n_collab);
    m.helper2_gold_rate = static_cast<double>(helper2_hits) / static_cast<double>(m.n_collab);
  }
  return m;
}

struct AblationRun {
  std::vector<PipelineRecord> records;
  Metrics metrics;
};

/// Executes one pipeline variant over the question set and grades it.
inline AblationRun run_ablation(AblationMode mode, const std::vector<Question>& questions,
                                Pipeline& pipeline, int concurrency = 4) {
  AblationRun out;
  out.records = run_dataset(pipeline, questions, mode, concurrency);
  out.metrics = compute_metrics(out.records, questions, mode);
  return out;
}

// --- reporting -----------------------------------------------------------------

/// One rendered table row. Rows built from runs carry full Metrics; reference
/// rows (recorded numbers from other systems) carry accuracies only.
struct ReportRow {
  std::string label;
  std::optional<AblationMode> mode;
  std::map<DatasetKind, Metrics> metrics;
  std::map<DatasetKind, double> accs;
  // Ordered per-component accuracy rows for the figure-data files; the first
  // component is the zero-shot baseline and is emitted only in the heatmap.
  std::vector<std::pair<std::string, std::map<DatasetKind, double>>> components;

  static ReportRow from_metrics(std::string label, AblationMode mode,
                                std::map<DatasetKind, Metrics> by_dataset) {
    ReportRow row;
    row.label = std::move(label);
    row.mode = mode;
    for (const auto& [kind, m] : by_dataset) row.accs[kind] = m.acc_overall;
    row.components = derive_components(by_dataset);
    row.metrics = std::move(by_dataset);
    return row;
  }

  static ReportRow reference(std::string label, std::map<DatasetKind, double> accs) {
    ReportRow row;
    row.label = std::move(label);
    row.accs = std::move(accs);
    return row;
  }

  /// Unweighted mean of acc_overall across the datasets present.
  double avg_score() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (DatasetKind kind : all_dataset_kinds()) {
      auto it = accs.find(kind);
      if (it == accs.end()) continue;
      sum += it->second;
      ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  }

 private:
  static std::vector<std::pair<std::string, std::map<DatasetKind, double>>> derive_components(
      const std::map<DatasetKind, Metrics>& by_dataset) {
    std::vector<std::pair<std::string, std::map<DatasetKind, double>>> out{
        {"zero_shot", {}}, {"helper1", {}}, {"helper2", {}}, {"final", {}}};
    for (const auto& [kind, m] : by_dataset) {
      if (m.acc_direct) out[0].second[kind] = *m.acc_direct;
      if (m.helper1_gold_rate) out[1].second[kind] = *m.helper1_gold_rate;
      if (m.helper2_gold_rate) out[2].second[kind] = *m.helper2_gold_rate;
      out[3].second[kind] = m.acc_overall;
    }
    std::erase_if(out, [](const auto& c) { return c.second.empty(); });
    return out;
  }
};

struct ReportBundle {
  std::vector<ReportRow> rows;
};

namespace detail_report {

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail_report

/// Markdown comparison table: one column per dataset plus the unweighted
/// average, in the fixed MedQA, MedMCQA, PubMedQA order.
inline std::string render_markdown_table(const ReportBundle& bundle) {
  if (bundle.rows.empty()) throw ValidationError(ValidationError::Code::BadValue, "empty bundle");
  std::string out = "| Variant | MedQA | MedMCQA | PubMedQA | Avg Score |\n";
  out += "| --- | --- | --- | --- | --- |\n";
  for (const auto& row : bundle.rows) {
    out += "| " + row.label + " |";
    for (DatasetKind kind : all_dataset_kinds()) {
      auto it = row.accs.find(kind);
      out += it == row.accs.end() ? " - |" : " " + detail_report::fmt3(it->second) + " |";
    }
    out += " " + detail_report::fmt3(row.avg_score()) + " |\n";
  }
  return out;
}

inline std::string render_csv(const ReportBundle& bundle) {
  if (bundle.rows.empty()) throw ValidationError(ValidationError::Code::BadValue, "empty bundle");
  std::string out = "dataset,mode,n_total,n_direct,n_collab,acc_overall,acc_direct,acc_collab\n";
  for (const auto& row : bundle.rows) {
    if (!row.mode) continue;  // reference rows have no run behind them
    for (DatasetKind kind : all_dataset_kinds()) {
      auto it = row.metrics.find(kind);
      if (it == row.metrics.end()) continue;
      const Metrics& m = it->second;
      out += to_string(kind) + "," + to_string(m.mode) + "," + std::to_string(m.n_total) + "," +
             std::to_string(m.n_direct) + "," + std::to_string(m.n_collab) + "," +
             detail_report::fmt6(m.acc_overall) + ",";
      out += m.acc_direct ? detail_report::fmt6(*m.acc_direct) : "";
      out += ",";
      out += m.acc_collab ? detail_report::fmt6(*m.acc_collab) : "";
      out += "\n";
    }
  }
  return out;
}

inline json to_json(const ReportBundle& bundle) {
  json rows = json::array();
  for (const auto& row : bundle.rows) {
    json r{{"label", row.label}, {"avg_score", row.avg_score()}};
    if (row.mode) r["mode"] = to_string(*row.mode);
    json accs = json::object();
    for (const auto& [kind, acc] : row.accs) accs[to_string(kind)] = acc;
    r["accs"] = std::move(accs);
    json metrics = json::object();
    for (const auto& [kind, m] : row.metrics) metrics[to_string(kind)] = to_json(m);
    if (!metrics.empty()) r["metrics"] = std::move(metrics);
    if (!row.components.empty()) {
      json comps = json::array();
      for (const auto& [name, values] : row.components) {
        json vals = json::object();
        for (const auto& [kind, v] : values) vals[to_string(kind)] = v;
        comps.push_back({{"component", name}, {"values", std::move(vals)}});
      }
      r["components"] = std::move(comps);
    }
    rows.push_back(std::move(r));
  }
  return json{{"rows", std::move(rows)}};
}

namespace detail_report {

inline std::string render_component_csv(const ReportRow& row, bool include_baseline) {
  std::string out = "component,MedQA,MedMCQA,PubMedQA\n";
  for (std::size_t i = include_baseline ? 0 : 1; i < row.components.size(); ++i) {
    const auto& [name, values] = row.components[i];
    out += name;
    for (DatasetKind kind : all_dataset_kinds()) {
      out += ",";
      auto it = values.find(kind);
      if (it != values.end()) out += fmt3(it->second);
    }
    out += "\n";
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out.good()) throw IoError("failed writing " + path.string());
}

}  // namespace detail_report

/// Writes report.md, report.csv, report.json and, when component data is
/// available, the grouped-bar and heatmap figure-data files (values only;
/// plotting is out of scope).
inline void emit_report(const ReportBundle& bundle, const std::filesystem::path& outdir) {
  const std::string md = render_markdown_table(bundle);  // validates non-empty
  const std::string csv = render_csv(bundle);
  std::filesystem::create_directories(outdir);
  detail_report::write_file(outdir / "report.md", md);
  detail_report::write_file(outdir / "report.csv", csv);
  detail_report::write_file(outdir / "report.json", to_json(bundle).dump(2) + "\n");
  for (const auto& row : bundle.rows) {
    if (row.components.empty()) continue;
    detail_report::write_file(outdir / "fig_heatmap.csv",
                              detail_report::render_component_csv(row, true));
    detail_report::write_file(outdir / "fig_grouped_bar.csv",
                              detail_report::render_component_csv(row, false));
    break;  // one figure set per report, from the first row carrying components
  }
}

// --- recorded-result fixtures -----------------------------------------------

/// Expands a {n, correct} fixture cell into a synthetic record stream so the
/// recorded numbers flow through the same compute_metrics + emit_report path
/// as a real run. Pathways are all Direct: the published results carry no
/// routing split.
inline std::pair<std::vector<Question>, std::vector<PipelineRecord>> expand_fixture_cell(
    DatasetKind kind, std::size_t n, std::size_t correct) {
  if (correct > n)
    throw ConfigError("fixture cell has correct > n (" + std::to_string(correct) + " > " +
                      std::to_string(n) + ")");
  std::vector<Question> questions;
  std::vector<PipelineRecord> records;
  questions.reserve(n);
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = to_string(kind) + "-fixture-" + std::to_string(i);
    questions.push_back(make_question(id, "recorded result " + std::to_string(i), "",
                                      {Option{'A', "yes"}, Option{'B', "no"}}, 'A', kind));
    PipelineRecord r;
    r.question_id = id;
    r.pathway = Pathway::Direct;
    r.verdict = Verdict{VerdictValue::Sure, "", ParseRule::ExactMatch};
    r.final_answer = i < correct ? 'A' : 'B';
    r.correct = i < correct;
    records.push_back(std::move(r));
  }
  return {std::move(questions), std::move(records)};
}

/// Builds a ReportBundle from a fixture table. Rows with per-dataset counts
/// go through expand_fixture_cell + compute_metrics; rows with bare "accs"
/// become render-only reference rows.
inline ReportBundle bundle_from_fixture(const json& table) {
  if (!table.is_object() || !table.contains("rows") || !table["rows"].is_array())
    throw ConfigError("fixture table needs a 'rows' array");
  ReportBundle bundle;
  for (const auto& rj : table["rows"]) {
    const std::string label = rj.at("label").get<std::string>();
    if (rj.contains("datasets")) {
      const AblationMode mode = ablation_mode_from_string(rj.at("mode").get<std::string>());
      std::map<DatasetKind, Metrics> by_dataset;
      std::map<DatasetKind, json> component_cells;
      for (const auto& [name, cell] : rj["datasets"].items()) {
        const DatasetKind kind = dataset_kind_from_string(name);
        auto [questions, records] = expand_fixture_cell(
            kind, cell.at("n").get<std::size_t>(), cell.at("correct").get<std::size_t>());
        by_dataset[kind] = compute_metrics(records, questions, mode);
        if (cell.contains("components")) component_cells[kind] = cell["components"];
      }
      ReportRow row = ReportRow::from_metrics(label, mode, std::move(by_dataset));
      if (!component_cells.empty()) {
        // Fixture-supplied component rates (ordered [name, value] pairs)
        // override the derived ones.
        std::vector<std::string> order;
        for (const auto& [kind, comps] : component_cells) {
          if (!comps.is_array())
            throw ConfigError("fixture components must be an array of [name, value] pairs");
          for (const auto& pair : comps) {
            const std::string name = pair.at(0).get<std::string>();
            if (std::find(order.begin(), order.end(), name) == order.end())
              order.push_back(name);
          }
        }
        row.components.clear();
        for (const auto& name : order) {
          std::map<DatasetKind, double> values;
          for (const auto& [kind, comps] : component_cells)
            for (const auto& pair : comps)
              if (pair.at(0).get<std::string>() == name) values[kind] = pair.at(1).get<double>();
          row.components.emplace_back(name, std::move(values));
        }
      }
      bundle.rows.push_back(std::move(row));
    } else if (rj.contains("accs")) {
      std::map<DatasetKind, double> accs;
      for (const auto& [name, value] : rj["accs"].items())
        accs[dataset_kind_from_string(name)] = value.get<double>();
      bundle.rows.push_back(ReportRow::reference(label, std::move(accs)));
    } else {
      throw ConfigError("fixture row '" + label + "' needs 'datasets' or 'accs'");
    }
  }
  return bundle;
}

inline ReportBundle load_fixture_bundle(const std::filesystem::path& file,
                                        const std::string& table_name) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open fixture file: " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ConfigError("bad fixture json: " + std::string(ex.what()));
  }
  if (!j.contains(table_name)) throw ConfigError("fixture has no table '" + table_name + "'");
  return bundle_from_fixture(j[table_name]);
}

}  // namespace cure
