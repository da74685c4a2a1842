// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// runnable criterion fails. Criterion 10 needs the released feature set and
// official checkpoints; it reports SKIP when those artifacts are absent.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tfmbench/backends.hpp"
#include "tfmbench/featurize.hpp"
#include "tfmbench/finetune.hpp"
#include "tfmbench/report.hpp"
#include "tfmbench/runner.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace tfmbench;

namespace {

struct Skip {
  std::string reason;
};

int failures = 0;
int criterion_index = 0;

void check(bool cond, const std::string& what) {
  if (!cond) throw std::runtime_error(what);
}

void criterion(const std::string& name, const std::function<void()>& body) {
  ++criterion_index;
  try {
    body();
    std::printf("PASS  criterion %2d: %s\n", criterion_index, name.c_str());
  } catch (const Skip& s) {
    std::printf("SKIP  criterion %2d: %s (%s)\n", criterion_index,
                name.c_str(), s.reason.c_str());
  } catch (const std::exception& e) {
    ++failures;
    std::printf("FAIL  criterion %2d: %s\n      %s\n", criterion_index,
                name.c_str(), e.what());
  }
  std::fflush(stdout);
}

Eigen::VectorXd vec(const std::vector<double>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

// -- criterion bodies --------------------------------------------------------

void gradient_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(4001);
  std::uniform_real_distribution<double> zdist(-6, 6), taudist(0.2, 4.0);
  std::uniform_int_distribution<int> coin(0, 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 1000; ++trial) {
    double z = zdist(rng), tau = taudist(rng);
    int y = coin(rng);
    double analytic = temperature_bce_grad(vec({z}), {y}, tau)(0);
    double numeric = (temperature_bce_loss(vec({z + h}), {y}, tau) -
                      temperature_bce_loss(vec({z - h}), {y}, tau)) /
                     (2 * h);
    double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    double rel = std::abs(analytic - numeric) / denom;
    std::ostringstream os;
    os << "triple " << trial << " (z=" << z << ", y=" << y << ", tau=" << tau
       << "): relative error " << rel;
    check(rel < 1e-5, os.str());
  }
  double seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  check(seconds < 5.0,
        "runtime " + std::to_string(seconds) + " s exceeds 5 s");
}

void tau_one_identity() {
  Rng rng = make_rng(4002);
  std::uniform_real_distribution<double> zdist(-8, 8);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    int n = 1 + trial % 9;
    std::vector<double> z;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      z.push_back(zdist(rng));
      y.push_back(coin(rng));
    }
    // independent plain-BCE evaluation
    double plain = 0;
    for (int i = 0; i < n; ++i) {
      double s = 1.0 / (1.0 + std::exp(-z[static_cast<std::size_t>(i)]));
      plain -= y[static_cast<std::size_t>(i)] == 1 ? std::log(s)
                                                   : std::log(1 - s);
    }
    plain /= n;
    double got = temperature_bce_loss(vec(z), y, 1.0);
    check(std::abs(got - plain) < 1e-12,
          "tau=1 mismatch: " + format_double(got) + " vs " +
              format_double(plain));
  }
}

void metric_oracles() {
  Rng rng = make_rng(4003);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> len(2, 120);
  int auc_checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    int n = len(rng);
    std::vector<double> probs;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      probs.push_back(std::round(u(rng) * 16) / 16.0);  // ties occur
      labels.push_back(coin(rng));
    }
    MetricValues got = compute_metrics(vec(probs), labels);
    oracles::BruteMetrics want = oracles::brute_metrics(probs, labels);
    check(got.accuracy == want.accuracy, "accuracy not exact");
    check(got.precision == want.precision, "precision not exact");
    check(got.recall == want.recall, "recall not exact");
    check(got.f1 == want.f1, "f1 not exact");
    check(got.auc.has_value() == want.auc.has_value(), "auc definedness");
    if (want.auc) {
      check(std::abs(*got.auc - *want.auc) < 1e-12, "auc beyond 1e-12");
      ++auc_checked;
    }
  }
  check(auc_checked > 150, "too few two-class instances generated");
}

void split_properties() {
  Rng rng = make_rng(4004);
  std::uniform_int_distribution<int> n_dist(12, 80), k_dist(2, 5);
  std::uniform_int_distribution<int> subj_dist(2, 12);
  for (int trial = 0; trial < 500; ++trial) {
    int n = n_dist(rng);
    std::size_t k = static_cast<std::size_t>(k_dist(rng));

    // stratified k-fold: per-fold class counts within +-1 of exact share
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng() % 2));
    std::size_t n1 = 0;
    for (int y : labels) n1 += static_cast<std::size_t>(y);
    std::size_t n0 = labels.size() - n1;
    if (n0 >= k && n1 >= k) {
      std::uint64_t seed = rng();
      SplitPlan plan = stratified_kfold_repeated(labels, k, 2, seed);
      check(plan.folds.size() == 2 * k, "fold count");
      for (const auto& fold : plan.folds) {
        double zero_share = static_cast<double>(n0) / static_cast<double>(k);
        double one_share = static_cast<double>(n1) / static_cast<double>(k);
        int zeros = 0, ones = 0;
        for (auto i : fold.test_indices) (labels[i] == 0 ? zeros : ones)++;
        check(std::abs(zeros - zero_share) <= 1.0 + 1e-9,
              "class-0 proportion off by more than one sample");
        check(std::abs(ones - one_share) <= 1.0 + 1e-9,
              "class-1 proportion off by more than one sample");
      }
      // per-repeat exact partition
      for (std::size_t r = 0; r < 2; ++r) {
        std::set<std::size_t> seen;
        for (std::size_t f = r * k; f < (r + 1) * k; ++f)
          for (auto i : plan.folds[f].test_indices)
            check(seen.insert(i).second, "index in two test folds");
        check(seen.size() == labels.size(), "repeat does not cover all");
      }
      check(plan.fingerprint() ==
                stratified_kfold_repeated(labels, k, 2, seed).fingerprint(),
            "k-fold not deterministic under fixed seed");
    }

    // LOSO: subject disjointness and exact partition
    int n_subjects = subj_dist(rng);
    std::vector<std::string> subjects;
    for (int i = 0; i < n; ++i)
      subjects.push_back("s" + std::to_string(rng() % n_subjects));
    std::set<std::string> distinct(subjects.begin(), subjects.end());
    if (distinct.size() < 2) continue;
    SplitPlan loso = leave_one_subject_out(subjects);
    check(loso.folds.size() == distinct.size(), "LOSO fold count != M");
    std::set<std::size_t> covered;
    for (const auto& fold : loso.folds) {
      std::set<std::string> train_subj, test_subj;
      for (auto i : fold.train_indices) train_subj.insert(subjects[i]);
      for (auto i : fold.test_indices) {
        test_subj.insert(subjects[i]);
        check(covered.insert(i).second, "LOSO index on two test sides");
      }
      for (const auto& s : test_subj)
        check(!train_subj.count(s), "subject on both sides of a LOSO fold");
    }
    check(covered.size() == subjects.size(), "LOSO folds do not partition");
    check(loso.fingerprint() == leave_one_subject_out(subjects).fingerprint(),
          "LOSO not deterministic");
  }
}

void leakage_freedom() {
  // Hand ANOVA example first.
  TabularDataset hand;
  hand.features.resize(6, 1);
  hand.features << 1, 2, 3, 10, 11, 12;
  hand.labels = {0, 0, 0, 1, 1, 1};
  hand.subject_ids = {"a", "b", "c", "d", "e", "f"};
  hand.feature_names = {"x"};
  SelectionModel hand_model = fit_anova_selector(hand, 1);
  check(std::abs(hand_model.f_values[0] - 121.5) < 1e-9,
        "hand ANOVA F != 121.5 (got " + format_double(hand_model.f_values[0]) +
            ")");

  Rng rng = make_rng(4005);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 24, p = 10;
    TabularDataset ds;
    ds.features.resize(n, p);
    for (std::size_t i = 0; i < n; ++i) {
      ds.labels.push_back(static_cast<int>(i % 2));
      ds.subject_ids.push_back("s" + std::to_string(i % 5));
      for (std::size_t j = 0; j < p; ++j)
        ds.features(static_cast<Eigen::Index>(i),
                    static_cast<Eigen::Index>(j)) = u(rng);
    }
    for (std::size_t j = 0; j < p; ++j)
      ds.feature_names.push_back("f" + std::to_string(j));

    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i)
      (i % 3 == 0 ? test_rows : train_rows).push_back(i);

    SelectionModel before = fit_anova_selector(ds.select_rows(train_rows), 4);

    // Arbitrary perturbation of every test row.
    TabularDataset mutated = ds;
    for (auto i : test_rows)
      for (std::size_t j = 0; j < p; ++j)
        mutated.features(static_cast<Eigen::Index>(i),
                         static_cast<Eigen::Index>(j)) = u(rng) * 100.0;

    SelectionModel after =
        fit_anova_selector(mutated.select_rows(train_rows), 4);
    check(before.selected_indices == after.selected_indices,
          "selected indices changed under test-row perturbation");
    for (std::size_t j = 0; j < p; ++j)
      check(before.f_values[j] == after.f_values[j],
            "F values not bit-identical");
    check(before.fitted_on == after.fitted_on, "fingerprint changed");
  }
}

void aggregation_identities() {
  Rng rng = make_rng(4006);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 20 + trial;
    std::vector<double> probs;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      probs.push_back(u(rng));
      labels.push_back(coin(rng));
    }
    labels[0] = 0;
    labels[1] = 1;

    std::uniform_int_distribution<std::size_t> width(1, 9);
    std::vector<FoldResult> folds;
    std::size_t start = 0;
    while (start < probs.size()) {
      std::size_t w = std::min(width(rng), probs.size() - start);
      FoldResult f;
      f.fold_index = folds.size();
      f.probs = vec({probs.begin() + static_cast<long>(start),
                     probs.begin() + static_cast<long>(start + w)});
      f.true_labels.assign(labels.begin() + static_cast<long>(start),
                           labels.begin() + static_cast<long>(start + w));
      folds.push_back(std::move(f));
      start += w;
    }
    MetricReport pooled = aggregate_pooled(folds);
    MetricValues direct = compute_metrics(vec(probs), labels);
    check(pooled.mean.accuracy == direct.accuracy, "pooled accuracy differs");
    check(pooled.mean.precision == direct.precision, "pooled precision differs");
    check(pooled.mean.recall == direct.recall, "pooled recall differs");
    check(pooled.mean.f1 == direct.f1, "pooled f1 differs");
    check(*pooled.mean.auc == *direct.auc, "pooled auc differs");
  }

  MetricValues single;
  single.accuracy = 0.625;
  single.auc = 0.43;
  single.precision = 0.7;
  MetricReport one = aggregate_mean_std({single});
  check(one.std_dev.accuracy == 0.0 && one.std_dev.precision == 0.0 &&
            one.std_dev.f1 == 0.0 && *one.std_dev.auc == 0.0,
        "single-fold std is not zero");
}

void freezing_contract() {
  MockTfmConfig config;
  config.x_width = 384;  // 768 parameters
  config.y_width = 288;  // 576 parameters
  config.block_width = 8;
  config.seed = 77;
  MockTfm model(config);

  ParameterGroupMap groups =
      freeze(parameter_group_map(model), {"x_encoder", "y_encoder"});
  check(groups.total() - groups.trainable() == 1344,
        "frozen parameter count != 1344");

  auto samples = synth_dataset(6, 4, 4, 1.0, 51);
  TabularDataset ds = aggregate_dataset(samples, AttributeSet::all());

  std::uint64_t x_before = model.group_checksum("x_encoder");
  std::uint64_t y_before = model.group_checksum("y_encoder");

  FinetuneConfig ft;
  ft.learning_rate = 0.01;
  ft.batch_size = 6;
  ft.max_steps = 50;
  ft.min_patience = 50;  // run all 50 update steps
  ft.frozen = {"x_encoder", "y_encoder"};
  ft.seed = 9;
  FinetuneResult result = finetune(model, ds, ft);
  check(result.steps_run == 50, "expected 50 update steps, ran " +
                                    std::to_string(result.steps_run));
  check(model.group_checksum("x_encoder") == x_before,
        "x_encoder changed while frozen");
  check(model.group_checksum("y_encoder") == y_before,
        "y_encoder changed while frozen");
}

void early_stop_oracle() {
  Rng rng = make_rng(4008);
  std::uniform_int_distribution<int> len_dist(1, 40), pat_dist(1, 20);
  std::uniform_real_distribution<double> rho_dist(0.0, 1.0);
  std::uniform_int_distribution<int> acc_level(0, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    FinetuneConfig config;
    config.min_patience = pat_dist(rng);
    config.patience_scale = rho_dist(rng);
    int len = len_dist(rng);
    std::vector<HistoryPoint> history;
    for (int s = 0; s < len; ++s)
      history.push_back({s, acc_level(rng) / 6.0});  // ties are common

    // independent rule evaluation
    int best_step = 0;
    double best = -1;
    for (const auto& h : history)
      if (h.validation_accuracy > best) {
        best = h.validation_accuracy;
        best_step = h.step;
      }
    int patience = std::max(
        config.min_patience,
        static_cast<int>(std::ceil(config.patience_scale * best_step)));
    bool want_stop = (history.back().step - best_step) >= patience;

    StopDecision got = adaptive_early_stop(history, config);
    check((got == StopDecision::kStop) == want_stop,
          "early-stop decision mismatch at trial " + std::to_string(trial));
  }
}

void end_to_end_smoke() {
  auto t0 = std::chrono::steady_clock::now();
  TempDir dir;

  nlohmann::json dataset = {
      {"synthetic",
       {{"n_subjects", 8}, {"samples_per_subject", 4}, {"d", 6},
        {"separability", 1.0}, {"seed", 7}}}};
  nlohmann::json kfold_protocol = {{"name", "stratified_kfold_repeated"},
                                   {"k", 5},
                                   {"repeats", 2},
                                   {"seed", 3}};
  nlohmann::json loso_protocol = {{"name", "loso"}};
  nlohmann::json finetune_block = {{"learning_rate", 0.02},
                                   {"batch_size", 8},
                                   {"max_steps", 30},
                                   {"min_patience", 30},
                                   {"seed", 1}};

  ResultsStore store(dir.file("runs"));
  double rf_loso_accuracy = -1;
  for (const std::string backend : {"random_forest", "mock_tfm_finetune"}) {
    for (const std::string proto : {"kfold", "loso"}) {
      nlohmann::json j = {
          {"dataset", dataset},
          {"k_features", 12},
          {"protocol", proto == "loso" ? loso_protocol : kfold_protocol},
          {"backend",
           {{"name", backend},
            {"hyperparameters",
             backend == "mock_tfm_finetune"
                 ? nlohmann::json{{"x_width", 6}, {"y_width", 4},
                                  {"block_width", 8}, {"seed", 2}}
                 : nlohmann::json{{"n_estimators", 60}, {"seed", 2}}}}},
          {"output_dir", dir.file("runs").string()},
          {"workers", 2}};
      if (backend == "mock_tfm_finetune") j["finetune"] = finetune_block;
      RunOutcome outcome =
          run_experiment(ExperimentConfig::from_json(j), store);
      if (backend == "random_forest" && proto == "loso")
        rf_loso_accuracy = outcome.report.mean.accuracy;
    }
  }
  double seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  check(rf_loso_accuracy >= 0.9,
        "pooled LOSO accuracy for the classical baseline is " +
            format_double(rf_loso_accuracy) + ", below 0.9");
  check(seconds < 60.0,
        "smoke took " + std::to_string(seconds) + " s (limit 60)");
}

void published_results() {
  const char* manifest = std::getenv("TFMBENCH_HRI_MANIFEST");
  const char* cache = std::getenv(kCheckpointCacheEnv);
  if (!manifest || !cache)
    throw Skip{"requires the public feature release (TFMBENCH_HRI_MANIFEST) "
               "and official checkpoints (TFMBENCH_CHECKPOINT_CACHE); "
               "not runnable at desk scale"};

  TempDir dir;
  ResultsStore store(dir.file("runs"));

  nlohmann::json icl = {
      {"dataset", {{"manifest", std::string(manifest)}}},
      {"k_features", 500},
      {"protocol",
       {{"name", "stratified_kfold_repeated"}, {"k", 5}, {"repeats", 10},
        {"seed", 42}}},
      {"backend", {{"name", "tabpfn_icl"}, {"hyperparameters",
                                            {{"cache_dir", cache}}}}},
      {"output_dir", dir.file("runs").string()}};
  RunOutcome icl_outcome =
      run_experiment(ExperimentConfig::from_json(icl), store);
  check(std::abs(icl_outcome.report.mean.accuracy - 0.622) <= 0.03,
        "TabPFN ICL k-fold accuracy " +
            format_double(icl_outcome.report.mean.accuracy) +
            " outside 0.622 +/- 0.03");

  nlohmann::json ft = {
      {"dataset", {{"manifest", std::string(manifest)}}},
      {"k_features", 500},
      {"protocol", {{"name", "loso"}}},
      {"backend", {{"name", "tabpfn_finetune"}, {"hyperparameters",
                                                 {{"cache_dir", cache}}}}},
      {"finetune",
       {{"learning_rate", 1e-4}, {"batch_size", 32},
        {"frozen", {"x_encoder", "y_encoder"}}, {"temperature", 1.0}}},
      {"output_dir", dir.file("runs").string()}};
  RunOutcome ft_outcome =
      run_experiment(ExperimentConfig::from_json(ft), store);
  check(std::abs(ft_outcome.report.mean.accuracy - 0.730) <= 0.05,
        "TabPFN fine-tuned LOSO accuracy " +
            format_double(ft_outcome.report.mean.accuracy) +
            " outside 0.730 +/- 0.05");
}

}  // namespace

int main() {
  ensure_builtin_backends();
  criterion("loss gradient matches central finite differences "
            "(1000 triples, rel < 1e-5, < 5 s)",
            gradient_oracle);
  criterion("tau = 1 reduces to plain binary cross-entropy (1e-12)",
            tau_one_identity);
  criterion("metrics match brute-force definitions on 200 random instances",
            metric_oracles);
  criterion("split properties over 500 random vectors "
            "(stratification, LOSO partition, determinism)",
            split_properties);
  criterion("ANOVA selection is leakage-free; hand example F = 121.5",
            leakage_freedom);
  criterion("pooled aggregation equals metrics on concatenation; "
            "single-fold std is zero",
            aggregation_identities);
  criterion("freezing contract: 50 steps leave frozen encoders bit-identical "
            "(768 + 576 = 1344 parameters)",
            freezing_contract);
  criterion("adaptive early stop matches the rule oracle on 1000 histories",
            early_stop_oracle);
  criterion("end-to-end smoke: both protocols, RF + mock-TFM fine-tuning, "
            "< 60 s, LOSO accuracy >= 0.9",
            end_to_end_smoke);
  criterion("published-result reproduction with real artifacts",
            published_results);

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all runnable criteria passed\n");
  return 0;
}
