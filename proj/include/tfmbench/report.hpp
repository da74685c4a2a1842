#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfmbench/common.hpp"
#include "tfmbench/csv.hpp"
#include "tfmbench/results_store.hpp"
#include "tfmbench/svg_plot.hpp"

namespace tfmbench {
namespace detail {

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// "0.715 ± 0.073" for mean_std entries, "0.730" for pooled, "-" if absent.
inline std::string metric_cell(const nlohmann::json& report,
                               const std::string& key) {
  if (!report.contains(key)) return "-";
  const auto& v = report[key];
  if (v.is_number()) return fmt3(v.get<double>());
  return fmt3(v.value("mean", 0.0)) + " +/- " + fmt3(v.value("std", 0.0));
}

inline std::string run_label(const nlohmann::json& record) {
  std::string label = record.contains("backend")
                          ? record["backend"].value("name", "?")
                          : "?";
  if (record.contains("sweep"))
    label += " @" + fmt3(record["sweep"].value("proportion", 0.0));
  if (record.contains("ablation"))
    label += " [" + record["ablation"].value("axis", "?") + "=" +
             record["ablation"]["value"].dump() + "]";
  return label;
}

}  // namespace detail

/// Rebuilds all report artifacts from stored records alone (no model is
/// refit). Writes summary.csv, an aligned-text comparison table, per-run
/// fold CSVs and one SVG per metric for every sweep group. Returns the
/// written paths in deterministic order.
inline std::vector<std::filesystem::path> emit_report(
    const ResultsStore& store, std::vector<std::string> run_ids,
    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  std::vector<nlohmann::json> selected;
  if (run_ids.empty()) {
    selected = store.records();
  } else {
    for (const auto& id : run_ids) selected.push_back(store.find(id));
  }
  std::sort(selected.begin(), selected.end(),
            [](const nlohmann::json& a, const nlohmann::json& b) {
              return a.value("run_id", "") < b.value("run_id", "");
            });

  std::vector<std::filesystem::path> written;
  const std::vector<std::string> metric_keys = {"accuracy", "auc", "precision",
                                                "recall", "f1"};

  // summary.csv
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : selected) {
      if (!r.contains("report")) continue;
      const auto& rep = r["report"];
      std::vector<std::string> row = {
          r.value("run_id", ""), r.value("kind", ""),
          r.contains("backend") ? r["backend"].value("name", "") : "",
          r.contains("backend") ? r["backend"].value("version", "") : "",
          r.contains("split") ? r["split"].value("protocol", "") : "",
          rep.value("aggregation", "")};
      for (const auto& key : metric_keys) {
        if (!rep.contains(key)) {
          row.push_back("");
          row.push_back("");
        } else if (rep[key].is_number()) {
          row.push_back(format_double(rep[key].get<double>()));
          row.push_back("");
        } else {
          row.push_back(format_double(rep[key].value("mean", 0.0)));
          row.push_back(format_double(rep[key].value("std", 0.0)));
        }
      }
      row.push_back(std::to_string(
          r.contains("audit")
              ? r["audit"].value("subject_overlap_folds", 0)
              : 0));
      row.push_back(format_double(r.value("total_seconds", 0.0)));
      rows.push_back(std::move(row));
    }
    std::vector<std::string> header = {"run_id", "kind",        "backend",
                                       "version", "protocol",   "aggregation"};
    for (const auto& key : metric_keys) {
      header.push_back(key + "_mean");
      header.push_back(key + "_std");
    }
    header.push_back("subject_overlap_folds");
    header.push_back("total_seconds");
    auto path = out_dir / "summary.csv";
    write_csv(path, header, rows);
    written.push_back(path);
  }

  // comparison table, one row per run
  {
    auto path = out_dir / "summary.txt";
    std::ofstream out(path);
    require(out.good(), path.string(), ": cannot open for writing");
    out << std::left << std::setw(44) << "Model" << std::setw(12) << "Protocol";
    for (const auto& key : metric_keys)
      out << std::setw(18) << (char(std::toupper(key[0])) + key.substr(1));
    out << "\n" << std::string(44 + 12 + 18 * metric_keys.size(), '-') << "\n";
    for (const auto& r : selected) {
      if (!r.contains("report")) continue;
      out << std::left << std::setw(44)
          << (detail::run_label(r) + " (" + r.value("run_id", "") + ")")
          << std::setw(12)
          << (r.contains("split") ? r["split"].value("protocol", "") : "");
      for (const auto& key : metric_keys)
        out << std::setw(18) << detail::metric_cell(r["report"], key);
      out << "\n";
    }
    written.push_back(path);
  }

  // per-run fold tables
  for (const auto& r : selected) {
    if (!r.contains("folds")) continue;
    std::vector<std::vector<std::string>> rows;
    for (const auto& f : r["folds"]) {
      const auto& probs = f["probs"];
      const auto& truth = f["true_labels"];
      const auto& pred = f["pred_labels"];
      for (std::size_t i = 0; i < probs.size(); ++i)
        rows.push_back({std::to_string(f.value("fold", 0)),
                        format_double(probs[i].get<double>()),
                        std::to_string(pred[i].get<int>()),
                        std::to_string(truth[i].get<int>()),
                        format_double(f.value("seconds", 0.0))});
    }
    auto path = out_dir / (r.value("run_id", "run") + ".folds.csv");
    write_csv(path, {"fold", "prob", "pred", "label", "fold_seconds"}, rows);
    written.push_back(path);
  }

  // sweep plots: metric vs proportion, one file per metric per sweep group
  std::map<std::string, std::vector<const nlohmann::json*>> sweeps;
  for (const auto& r : selected)
    if (r.contains("sweep") && r.contains("report"))
      sweeps[r["sweep"].value("id", "sweep")].push_back(&r);
  for (const auto& [sweep_id, members] : sweeps) {
    for (const auto& key : metric_keys) {
      SvgLinePlot plot(sweep_id + ": " + key + " vs context proportion",
                       "context proportion", key);
      bool any = false;
      for (const auto* r : members) {
        const auto& rep = (*r)["report"];
        if (!rep.contains(key)) continue;
        double value = rep[key].is_number() ? rep[key].get<double>()
                                            : rep[key].value("mean", 0.0);
        plot.add_point((*r)["sweep"].value("proportion", 0.0), value);
        any = true;
      }
      if (!any) continue;
      auto path = out_dir / (sweep_id + "." + key + ".svg");
      plot.save(path);
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace tfmbench
