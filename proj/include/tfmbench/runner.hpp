#pragma once

#include <chrono>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfmbench/experiment_config.hpp"
#include "tfmbench/parallel.hpp"
#include "tfmbench/protocol.hpp"
#include "tfmbench/results_store.hpp"
#include "tfmbench/tpe.hpp"

namespace tfmbench {

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json report_to_json(const MetricReport& report) {
  const bool pooled = report.aggregation == Aggregation::kPooled;
  nlohmann::json out;
  out["aggregation"] = pooled ? "pooled" : "mean_std";
  auto put = [&](const char* key, double mean, double std_dev) {
    if (pooled) out[key] = mean;
    else out[key] = nlohmann::json{{"mean", mean}, {"std", std_dev}};
  };
  put("accuracy", report.mean.accuracy, report.std_dev.accuracy);
  put("precision", report.mean.precision, report.std_dev.precision);
  put("recall", report.mean.recall, report.std_dev.recall);
  put("f1", report.mean.f1, report.std_dev.f1);
  if (report.mean.auc)
    put("auc", *report.mean.auc, report.std_dev.auc.value_or(0.0));
  out["auc_defined_folds"] = report.auc_defined_folds;
  if (report.mean.zero_predicted_positives)
    out["zero_predicted_positives"] = true;
  return out;
}

// ---------------------------------------------------------------------------
// Single-fold evaluation: selector fitted on the training side only, then
// the classifier, then probabilities on the untouched test rows.

struct FoldEvaluation {
  FoldResult result;
  nlohmann::json details;  // backend version, selector digest, timings
};

inline FoldEvaluation evaluate_fold(const TabularDataset& dataset,
                                    const Fold& fold, std::size_t fold_index,
                                    const ExperimentConfig& config) {
  FoldEvaluation eval;
  auto t0 = std::chrono::steady_clock::now();

  TabularDataset train = dataset.select_rows(fold.train_indices);
  TabularDataset test = dataset.select_rows(fold.test_indices);

  std::size_t k = std::min(config.k_features(), train.n_features());
  SelectionModel selector = fit_anova_selector(train, k);
  TabularDataset train_sel = apply_selector(selector, train);
  TabularDataset test_sel = apply_selector(selector, test);

  Hyperparameters hyper = config.backend_hyper();
  std::uint64_t base_seed = hyper.value("seed", config.protocol_seed());
  hyper["seed"] = base_seed + fold_index;
  if (config.j.contains("finetune")) {
    nlohmann::json ft = config.j["finetune"];
    ft["seed"] = ft.value("seed", base_seed) + fold_index;
    hyper["finetune"] = ft;
  }

  auto clf = make_classifier(config.backend_name(), hyper);
  if (auto* ft = dynamic_cast<MockTfmFinetuneClassifier*>(clf.get());
      ft && config.j.value("save_checkpoints", true))
    ft->set_checkpoint_dir(
        config.output_dir() / "checkpoints" / config.hash() /
            ("fold_" + std::to_string(fold_index)),
        {{"config_hash", config.hash()}, {"fold", fold_index}});

  TabularDataset fit_data = train_sel;
  double proportion = config.context_proportion();
  if (clf->kind() == ClassifierKind::kTfmIcl && proportion < 1.0) {
    IclContext ctx = subsample_context(train_sel, proportion,
                                       config.icl_seed() + fold_index);
    fit_data.features = ctx.features;
    fit_data.labels = ctx.labels;
    fit_data.subject_ids.assign(ctx.labels.size(), "context");
  }

  clf->fit(fit_data);
  Eigen::VectorXd probs = clf->predict_proba(test_sel.features);

  auto t1 = std::chrono::steady_clock::now();

  eval.result.fold_index = fold_index;
  eval.result.probs = probs;
  eval.result.true_labels = test_sel.labels;
  eval.result.pred_labels.resize(test_sel.labels.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    eval.result.pred_labels[static_cast<std::size_t>(i)] =
        hard_label(probs(i), config.threshold());
  eval.result.seconds = std::chrono::duration<double>(t1 - t0).count();

  eval.details = {{"backend_version", clf->backend_version()},
                  {"selector_fingerprint", selector.fitted_on},
                  {"selected_features", selector.d_prime()}};
  if (auto* ft = dynamic_cast<MockTfmFinetuneClassifier*>(clf.get())) {
    eval.details["finetune"] = {
        {"best_step", ft->result().best.step},
        {"best_validation_accuracy", ft->result().best.validation_accuracy},
        {"steps_run", ft->result().steps_run},
        {"mean_step_seconds", ft->result().mean_step_seconds},
        {"checkpoint_digest", ft->model().parameter_checksum()}};
  } else if (auto* bridge = dynamic_cast<BridgeTfmClassifier*>(clf.get())) {
    if (!bridge->fit_info().is_null())
      eval.details["finetune"] = bridge->fit_info();
  }
  return eval;
}

// ---------------------------------------------------------------------------
// run_experiment

struct RunOutcome {
  std::string run_id;
  MetricReport report;
  nlohmann::json record;
};

namespace detail {

// Bridge-backed models own a single external device; keep their folds serial.
inline bool serial_backend(const std::string& name) {
  return name.rfind("tabpfn", 0) == 0 || name.rfind("tabicl", 0) == 0;
}

}  // namespace detail

inline RunOutcome run_experiment(const ExperimentConfig& config,
                                 ResultsStore& store,
                                 const std::string& kind = "experiment",
                                 const nlohmann::json& extra = {}) {
  config.validate();
  TabularDataset dataset = load_experiment_dataset(config);

  SplitPlan plan;
  if (config.protocol_name() == "loso") {
    plan = leave_one_subject_out(dataset.subject_ids);
  } else {
    plan = stratified_kfold_repeated(dataset.labels, config.kfold_k(),
                                     config.kfold_repeats(),
                                     config.protocol_seed());
  }
  std::size_t overlap_folds =
      count_subject_overlap_folds(plan, dataset.subject_ids);

  std::vector<FoldEvaluation> evals(plan.folds.size());
  std::size_t workers = detail::serial_backend(config.backend_name())
                            ? 1
                            : config.workers();
  parallel_for(plan.folds.size(), workers, [&](std::size_t f) {
    // Any fold failure aborts the run; parallel_for rethrows the first
    // error after joining, with the fold id attached here.
    try {
      evals[f] = evaluate_fold(dataset, plan.folds[f], f, config);
    } catch (const std::exception& e) {
      fail("fold ", f,
           plan.fold_names.size() > f ? " (" + plan.fold_names[f] + ")" : "",
           ": ", e.what());
    }
  });

  MetricReport report;
  std::vector<FoldResult> fold_results;
  fold_results.reserve(evals.size());
  for (auto& e : evals) fold_results.push_back(e.result);
  if (plan.protocol == Protocol::kLoso) {
    report = aggregate_pooled(fold_results);
  } else {
    std::vector<MetricValues> per_fold;
    per_fold.reserve(fold_results.size());
    for (const auto& fr : fold_results)
      per_fold.push_back(
          compute_metrics(fr.probs, fr.true_labels, config.threshold()));
    report = aggregate_mean_std(per_fold);
  }

  nlohmann::json record;
  record["kind"] = kind;
  record["created_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  record["config"] = config.j;
  record["config_hash"] = config.hash();
  record["dataset"] = {{"n_rows", dataset.n_rows()},
                       {"n_features", dataset.n_features()},
                       {"n_subjects", dataset.n_subjects()},
                       {"fingerprint", dataset.fingerprint()}};
  record["split"] = {{"protocol", protocol_name(plan.protocol)},
                     {"k", plan.k},
                     {"repeats", plan.repeats},
                     {"seed", plan.seed},
                     {"folds", plan.folds.size()},
                     {"fingerprint", plan.fingerprint()}};
  record["audit"] = {{"subject_overlap_folds", overlap_folds}};
  record["backend"] = {{"name", config.backend_name()},
                       {"hyperparameters", config.backend_hyper()},
                       {"version", evals.empty()
                                       ? "?"
                                       : evals.front().details.value(
                                             "backend_version", "?")}};

  double total_seconds = 0;
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& e : evals) {
    nlohmann::json f;
    f["fold"] = e.result.fold_index;
    if (plan.fold_names.size() > e.result.fold_index)
      f["held_out_subject"] = plan.fold_names[e.result.fold_index];
    f["n_test"] = e.result.true_labels.size();
    f["seconds"] = e.result.seconds;
    std::vector<double> probs(e.result.probs.data(),
                              e.result.probs.data() + e.result.probs.size());
    f["probs"] = probs;
    f["true_labels"] = e.result.true_labels;
    f["pred_labels"] = e.result.pred_labels;
    f["details"] = e.details;
    folds.push_back(std::move(f));
    total_seconds += e.result.seconds;
  }
  record["folds"] = std::move(folds);
  record["total_seconds"] = total_seconds;
  record["report"] = report_to_json(report);
  if (!extra.is_null() && extra.is_object())
    for (auto& [key, value] : extra.items()) record[key] = value;

  RunOutcome outcome;
  outcome.run_id = store.append(record);
  record["run_id"] = outcome.run_id;
  outcome.report = report;
  outcome.record = std::move(record);

  // Proof-of-folds sidecar for cross-run comparisons.
  std::ofstream splits(store.dir() / (outcome.run_id + ".splits.txt"));
  if (splits.good()) splits << plan.serialize();
  return outcome;
}

// ---------------------------------------------------------------------------
// Hyperparameter search (sequential model-based, median pruning)

struct TrialRecord {
  int trial_id = 0;
  nlohmann::json params;
  double objective = 0;
  bool pruned = false;
};

struct SearchOutcome {
  nlohmann::json best_params;
  double best_objective = -1;
  int best_trial = -1;
  std::vector<TrialRecord> trials;
  std::string run_id;
};

/// Table-shaped spaces for the tunable backends: two hyperparameters each.
inline SearchSpace default_search_space(const std::string& backend) {
  if (backend == "gradient_boosted_trees")
    return {{"max_depth", ParamDomain::int_uniform(3, 50)},
            {"learning_rate", ParamDomain::uniform(0.01, 0.5)}};
  if (backend == "random_forest")
    return {{"n_estimators", ParamDomain::int_uniform(50, 500, 50)},
            {"max_depth", ParamDomain::int_uniform(3, 50)}};
  if (backend == "svm")
    return {{"C", ParamDomain::log_uniform(0.1, 100)},
            {"gamma", ParamDomain::mixed_categorical_log({"scale"}, 0.001, 10)}};
  if (backend == "tabpfn_finetune" || backend == "mock_tfm_finetune")
    return {{"finetune.learning_rate", ParamDomain::log_uniform(1e-6, 1e-2)},
            {"finetune.batch_size", ParamDomain::int_uniform(8, 64, 8)}};
  fail("no default search space for backend '", backend, "'");
}

namespace detail {

inline void assign_param(nlohmann::json& config, const std::string& path,
                         const nlohmann::json& value) {
  // "finetune.learning_rate" targets the finetune block; bare names target
  // backend.hyperparameters.
  auto dot = path.find('.');
  if (dot == std::string::npos) {
    config["backend"]["hyperparameters"][path] = value;
    return;
  }
  std::string head = path.substr(0, dot), tail = path.substr(dot + 1);
  require(head == "finetune", "search: unsupported parameter path '", path,
          "'");
  config["finetune"][tail] = value;
}

}  // namespace detail

/// TPE-driven search of `trials` configurations, maximizing the mean
/// cross-validated accuracy of the config's k-fold protocol. Intermediate
/// objectives are reported once per repeat and pruned by the median rule.
/// Ties on the final objective keep the earlier trial.
inline SearchOutcome search_hyperparameters(const SearchSpace& space,
                                            int trials,
                                            const ExperimentConfig& config,
                                            ResultsStore& store) {
  require(!space.empty(), "search: empty space");
  require(trials >= 1, "search: trials must be >= 1");
  config.validate();
  require(config.protocol_name() == "stratified_kfold_repeated",
          "search: the objective is defined over the stratified k-fold "
          "protocol; run LOSO separately with the selected hyperparameters");

  TabularDataset dataset = load_experiment_dataset(config);
  SplitPlan plan = stratified_kfold_repeated(dataset.labels, config.kfold_k(),
                                             config.kfold_repeats(),
                                             config.protocol_seed());

  TpeSampler sampler(space, config.protocol_seed());
  MedianPruner pruner;
  std::vector<Observation> completed;
  SearchOutcome outcome;

  for (int trial = 0; trial < trials; ++trial) {
    nlohmann::json params = sampler.suggest(completed);
    ExperimentConfig candidate = config;
    candidate.j["save_checkpoints"] = false;  // trial folds are throwaway
    for (auto& [path, value] : params.items())
      detail::assign_param(candidate.j, path, value);

    TrialRecord record;
    record.trial_id = trial;
    record.params = params;

    double acc_sum = 0;
    std::size_t folds_done = 0;
    bool pruned = false;
    const std::size_t k = plan.k;
    for (std::size_t r = 0; r < plan.repeats && !pruned; ++r) {
      for (std::size_t f = r * k; f < (r + 1) * k; ++f) {
        FoldEvaluation eval =
            evaluate_fold(dataset, plan.folds[f], f, candidate);
        acc_sum += compute_metrics(eval.result.probs, eval.result.true_labels,
                                   candidate.threshold())
                       .accuracy;
        ++folds_done;
      }
      double intermediate = acc_sum / static_cast<double>(folds_done);
      pruner.report(trial, static_cast<int>(r), intermediate);
      if (pruner.should_prune(static_cast<int>(r), intermediate))
        pruned = true;
    }

    record.pruned = pruned;
    if (!pruned) {
      record.objective = acc_sum / static_cast<double>(folds_done);
      pruner.complete(trial);
      completed.push_back({params, record.objective});
      if (record.objective > outcome.best_objective) {  // ties keep earlier
        outcome.best_objective = record.objective;
        outcome.best_trial = trial;
        outcome.best_params = params;
      }
    }
    outcome.trials.push_back(std::move(record));
  }

  nlohmann::json record;
  record["kind"] = "search";
  record["config"] = config.j;
  record["config_hash"] = config.hash();
  record["trials"] = nlohmann::json::array();
  for (const auto& t : outcome.trials) {
    nlohmann::json tr = {{"trial", t.trial_id},
                         {"params", t.params},
                         {"pruned", t.pruned}};
    if (!t.pruned) tr["objective"] = t.objective;  // completed trials only
    record["trials"].push_back(std::move(tr));
  }
  record["best"] = {{"trial", outcome.best_trial},
                    {"params", outcome.best_params},
                    {"objective", outcome.best_objective}};
  outcome.run_id = store.append(record);
  return outcome;
}

// ---------------------------------------------------------------------------
// Context-proportion sweep

struct SweepCell {
  double proportion = 0;
  bool ok = false;
  std::string error;
  MetricReport report;
  std::string run_id;
};

/// One k-fold ICL run per proportion. A cell that fails (for example a
/// subsample losing a class inside some fold) is recorded and the sweep
/// moves on.
inline std::vector<SweepCell> context_sweep(
    const std::vector<double>& proportions, const ExperimentConfig& config,
    ResultsStore& store) {
  require(!proportions.empty(), "sweep: no proportions given");
  for (double p : proportions)
    require(p > 0 && p <= 1, "sweep: proportion ", p, " outside (0,1]");

  std::string sweep_id = "sweep-" + config.hash().substr(0, 8);
  std::vector<SweepCell> cells;
  for (double p : proportions) {
    ExperimentConfig cell_config = config;
    cell_config.j["icl"]["context_proportion"] = p;
    SweepCell cell;
    cell.proportion = p;
    try {
      RunOutcome outcome = run_experiment(
          cell_config, store, "sweep_cell",
          {{"sweep", {{"id", sweep_id}, {"proportion", p}}}});
      cell.ok = true;
      cell.report = outcome.report;
      cell.run_id = outcome.run_id;
    } catch (const std::exception& e) {
      cell.error = e.what();
      nlohmann::json failed = {
          {"kind", "sweep_cell"},
          {"config", cell_config.j},
          {"config_hash", cell_config.hash()},
          {"sweep", {{"id", sweep_id}, {"proportion", p}}},
          {"status", "failed"},
          {"error", cell.error}};
      cell.run_id = store.append(failed);
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Ablation matrix: one axis varied at a time from the configured base.

struct AblationCell {
  std::string axis;
  nlohmann::json value;
  bool ok = false;
  std::string error;
  std::string run_id;
};

inline std::vector<AblationCell> ablation_matrix(const ExperimentConfig& config,
                                                 ResultsStore& store) {
  config.validate();
  {
    auto probe = make_classifier(config.backend_name(), config.backend_hyper());
    require(probe->kind() == ClassifierKind::kTfmFinetuned,
            "ablate: backend '", config.backend_name(),
            "' is not a fine-tuning backend");
  }

  struct Axis {
    std::string name;
    std::vector<nlohmann::json> values;
    int batch_size;  // <0 keeps the base batch size
  };
  const std::vector<Axis> axes = {
      {"optimizer",
       {"schedulefree_adamw", "adamw", "adamw_onecycle"},
       -1},
      {"batch_size", {8, 32}, -1},
      {"frozen",
       {nlohmann::json::array(),
        {"x_encoder", "y_encoder", "transformer_blocks"},
        {"x_encoder"},
        {"y_encoder"},
        {"transformer_blocks"},
        {"x_encoder", "y_encoder"}},
       8},
      {"temperature", {1.0, 0.9, 1.1, 1.5}, 8},
      {"k_features", {25, 100, 200, 500}, 8}};

  std::string ablation_id = "ablation-" + config.hash().substr(0, 8);
  std::vector<AblationCell> cells;
  for (const auto& axis : axes) {
    for (const auto& value : axis.values) {
      ExperimentConfig cell_config = config;
      if (!cell_config.j.contains("finetune"))
        cell_config.j["finetune"] = nlohmann::json::object();
      if (axis.batch_size > 0)
        cell_config.j["finetune"]["batch_size"] = axis.batch_size;
      if (axis.name == "k_features") {
        cell_config.j["k_features"] = value;
      } else {
        cell_config.j["finetune"][axis.name] = value;
      }

      AblationCell cell;
      cell.axis = axis.name;
      cell.value = value;
      try {
        RunOutcome outcome = run_experiment(
            cell_config, store, "ablation_cell",
            {{"ablation",
              {{"id", ablation_id}, {"axis", axis.name}, {"value", value}}}});
        cell.ok = true;
        cell.run_id = outcome.run_id;
      } catch (const std::exception& e) {
        cell.error = e.what();
        nlohmann::json failed = {
            {"kind", "ablation_cell"},
            {"config", cell_config.j},
            {"config_hash", cell_config.hash()},
            {"ablation",
             {{"id", ablation_id}, {"axis", axis.name}, {"value", value}}},
            {"status", "failed"},
            {"error", cell.error}};
        cell.run_id = store.append(failed);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace tfmbench
