// tfmbench command-line front end: validate-config, run, search, sweep,
// ablate, report.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tfmbench/report.hpp"
#include "tfmbench/runner.hpp"

using namespace tfmbench;

namespace {

struct Overrides {
  std::string output_dir;
  std::string cache_dir;
  long seed = -1;
  int workers = 0;
};

ExperimentConfig load_config(const std::string& path, const Overrides& o) {
  ExperimentConfig config = ExperimentConfig::load_file(path);
  if (!o.output_dir.empty()) config.j["output_dir"] = o.output_dir;
  if (o.seed >= 0) config.j["protocol"]["seed"] = o.seed;
  if (o.workers > 0) config.j["workers"] = o.workers;
  if (!o.cache_dir.empty()) {
    config.j["backend"]["hyperparameters"]["cache_dir"] = o.cache_dir;
    ::setenv(kCheckpointCacheEnv, o.cache_dir.c_str(), 1);
  }
  return config;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--output-dir", o.output_dir,
                  "Override the config's output directory");
  cmd->add_option("--seed", o.seed, "Override the protocol seed");
  cmd->add_option("--workers", o.workers, "Fold/trial worker count");
  cmd->add_option("--cache-dir", o.cache_dir,
                  "Foundation-model checkpoint cache directory");
}

void print_report(const std::string& run_id, const nlohmann::json& report) {
  auto cell = [&](const char* key) {
    if (!report.contains(key)) return std::string("-");
    const auto& v = report[key];
    char buf[64];
    if (v.is_number()) {
      std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
    } else {
      std::snprintf(buf, sizeof buf, "%.3f +/- %.3f", v.value("mean", 0.0),
                    v.value("std", 0.0));
    }
    return std::string(buf);
  };
  std::printf("%s  [%s]\n", run_id.c_str(),
              report.value("aggregation", "?").c_str());
  std::printf("  accuracy  %s\n", cell("accuracy").c_str());
  std::printf("  auc       %s\n", cell("auc").c_str());
  std::printf("  precision %s\n", cell("precision").c_str());
  std::printf("  recall    %s\n", cell("recall").c_str());
  std::printf("  f1        %s\n", cell("f1").c_str());
}

std::vector<double> parse_proportions(const std::string& csv) {
  std::vector<double> out;
  for (const auto& tok : split(csv, ',')) {
    double v = 0;
    require(parse_double(tok, v), "bad proportion '", tok, "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subject-aware tabular benchmark pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("tfmbench ") + kVersion);

  std::string config_path, store_dir, out_dir, runs_csv;
  std::string proportions_csv = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  int trials = 50;
  Overrides overrides;

  auto* validate = app.add_subcommand("validate-config",
                                      "Check a config file and exit");
  validate->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  add_overrides(run, overrides);

  auto* search = app.add_subcommand(
      "search", "Hyperparameter search (TPE + median pruning)");
  search->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  search->add_option("--trials", trials, "Trial count (default 50)");
  add_overrides(search, overrides);

  auto* sweep = app.add_subcommand("sweep",
                                   "Context-proportion sweep for ICL backends");
  sweep->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  sweep->add_option("--proportions", proportions_csv,
                    "Comma-separated proportions in (0,1]");
  add_overrides(sweep, overrides);

  auto* ablate = app.add_subcommand("ablate",
                                    "Fine-tuning ablation matrix");
  ablate->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  add_overrides(ablate, overrides);

  auto* report = app.add_subcommand("report",
                                    "Regenerate tables and plots from a store");
  report->add_option("--store", store_dir, "Results store directory")
      ->required();
  report->add_option("--runs", runs_csv,
                     "Comma-separated run ids (default: all)");
  report->add_option("--out", out_dir, "Report output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    ensure_builtin_backends();

    if (validate->parsed()) {
      ExperimentConfig config = ExperimentConfig::load_file(config_path);
      config.validate();
      std::printf("ok: %s (backend %s, protocol %s, config hash %s)\n",
                  config_path.c_str(), config.backend_name().c_str(),
                  config.protocol_name().c_str(), config.hash().c_str());
      return 0;
    }

    if (run->parsed()) {
      ExperimentConfig config = load_config(config_path, overrides);
      ResultsStore store(config.output_dir());
      RunOutcome outcome = run_experiment(config, store);
      print_report(outcome.run_id, outcome.record["report"]);
      std::printf("store: %s\n", store.ndjson_path().c_str());
      return 0;
    }

    if (search->parsed()) {
      ExperimentConfig config = load_config(config_path, overrides);
      ResultsStore store(config.output_dir());
      SearchOutcome outcome = search_hyperparameters(
          default_search_space(config.backend_name()), trials, config, store);
      std::printf("best trial %d, objective %.4f\n", outcome.best_trial,
                  outcome.best_objective);
      std::printf("best params: %s\n", outcome.best_params.dump().c_str());
      int pruned = 0;
      for (const auto& t : outcome.trials) pruned += t.pruned;
      std::printf("%zu trials (%d pruned), record %s\n",
                  outcome.trials.size(), pruned, outcome.run_id.c_str());
      return 0;
    }

    if (sweep->parsed()) {
      ExperimentConfig config = load_config(config_path, overrides);
      ResultsStore store(config.output_dir());
      auto cells = context_sweep(parse_proportions(proportions_csv), config,
                                 store);
      for (const auto& cell : cells) {
        if (cell.ok)
          std::printf("proportion %.2f -> accuracy %.3f (%s)\n",
                      cell.proportion, cell.report.mean.accuracy,
                      cell.run_id.c_str());
        else
          std::printf("proportion %.2f -> FAILED: %s\n", cell.proportion,
                      cell.error.c_str());
      }
      emit_report(store, {}, config.output_dir() / "report");
      std::printf("report: %s\n",
                  (config.output_dir() / "report").c_str());
      return 0;
    }

    if (ablate->parsed()) {
      ExperimentConfig config = load_config(config_path, overrides);
      ResultsStore store(config.output_dir());
      auto cells = ablation_matrix(config, store);
      for (const auto& cell : cells)
        std::printf("%-12s %-45s %s\n", cell.axis.c_str(),
                    cell.value.dump().c_str(),
                    cell.ok ? cell.run_id.c_str()
                            : ("FAILED: " + cell.error).c_str());
      emit_report(store, {}, config.output_dir() / "report");
      return 0;
    }

    if (report->parsed()) {
      ResultsStore store(store_dir);
      std::vector<std::string> ids;
      if (!runs_csv.empty())
        for (const auto& tok : split(runs_csv, ','))
          ids.push_back(trim(tok));
      std::filesystem::path out =
          out_dir.empty() ? std::filesystem::path(store_dir) / "report"
                          : std::filesystem::path(out_dir);
      auto files = emit_report(store, ids, out);
      for (const auto& f : files) std::printf("%s\n", f.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
