#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmbench/common.hpp"

namespace tfmbench {

// ---------------------------------------------------------------------------
// Split plans

enum class Protocol { kStratifiedKfoldRepeated, kLoso };

inline const char* protocol_name(Protocol p) {
  return p == Protocol::kLoso ? "loso" : "stratified_kfold_repeated";
}

struct Fold {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct SplitPlan {
  Protocol protocol = Protocol::kStratifiedKfoldRepeated;
  std::vector<Fold> folds;
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> fold_names;  // LOSO: held-out subject per fold

  /// Text record proving two runs used identical folds.
  std::string serialize() const {
    std::string out = std::string("protocol=") + protocol_name(protocol) +
                      ";k=" + std::to_string(k) +
                      ";repeats=" + std::to_string(repeats) +
                      ";seed=" + std::to_string(seed) + "\n";
    for (std::size_t f = 0; f < folds.size(); ++f) {
      out += "fold " + std::to_string(f);
      if (f < fold_names.size() && !fold_names[f].empty())
        out += " (" + fold_names[f] + ")";
      out += " train:";
      for (std::size_t i = 0; i < folds[f].train_indices.size(); ++i)
        out += (i ? "," : "") + std::to_string(folds[f].train_indices[i]);
      out += " test:";
      for (std::size_t i = 0; i < folds[f].test_indices.size(); ++i)
        out += (i ? "," : "") + std::to_string(folds[f].test_indices[i]);
      out += "\n";
    }
    return out;
  }

  std::string fingerprint() const {
    Fnv1a h;
    h.update(serialize());
    return h.hex();
  }
};

/// Stratified k-fold with `repeats` independent repetitions. Within each
/// repeat, every class is shuffled with the derived seed (seed + repeat)
/// and dealt round-robin into test folds, so per-fold class counts stay
/// within +-1 of exact proportionality.
inline SplitPlan stratified_kfold_repeated(const std::vector<int>& labels,
                                           std::size_t k, std::size_t repeats,
                                           std::uint64_t seed) {
  require(k >= 2, "stratified_kfold_repeated: k must be >= 2, got ", k);
  require(repeats >= 1, "stratified_kfold_repeated: repeats must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1,
            "stratified_kfold_repeated: label ", labels[i], " outside {0,1}");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    require(by_class[static_cast<std::size_t>(c)].size() >= k, "class ", c,
            " has ", by_class[static_cast<std::size_t>(c)].size(),
            " members, fewer than k=", k);

  SplitPlan plan;
  plan.protocol = Protocol::kStratifiedKfoldRepeated;
  plan.k = k;
  plan.repeats = repeats;
  plan.seed = seed;

  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng = make_rng(seed + r);
    std::vector<std::vector<std::size_t>> test_sets(k);
    for (int c = 0; c < 2; ++c) {
      auto cls = by_class[static_cast<std::size_t>(c)];
      std::shuffle(cls.begin(), cls.end(), rng);
      for (std::size_t i = 0; i < cls.size(); ++i)
        test_sets[i % k].push_back(cls[i]);
    }
    for (std::size_t f = 0; f < k; ++f) {
      Fold fold;
      std::sort(test_sets[f].begin(), test_sets[f].end());
      fold.test_indices = test_sets[f];
      std::set<std::size_t> in_test(test_sets[f].begin(), test_sets[f].end());
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (!in_test.count(i)) fold.train_indices.push_back(i);
      plan.folds.push_back(std::move(fold));
    }
  }
  return plan;
}

/// One fold per distinct subject (order of first appearance); the test set
/// is exactly that subject's samples, so no subject ever straddles a fold.
inline SplitPlan leave_one_subject_out(
    const std::vector<std::string>& subject_ids) {
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    auto [it, fresh] = members.try_emplace(subject_ids[i]);
    if (fresh) subjects.push_back(subject_ids[i]);
    it->second.push_back(i);
  }
  require(subjects.size() >= 2, "leave_one_subject_out: need >= 2 subjects, have ",
          subjects.size());

  SplitPlan plan;
  plan.protocol = Protocol::kLoso;
  plan.k = subjects.size();
  plan.repeats = 1;
  for (const auto& s : subjects) {
    Fold fold;
    fold.test_indices = members[s];
    for (std::size_t i = 0; i < subject_ids.size(); ++i)
      if (subject_ids[i] != s) fold.train_indices.push_back(i);
    plan.folds.push_back(std::move(fold));
    plan.fold_names.push_back(s);
  }
  return plan;
}

/// Counts folds where a subject appears on both sides of the split. Always
/// zero for LOSO; usually positive for plain k-fold with multi-sample
/// subjects, which is the motivation for reporting it.
inline std::size_t count_subject_overlap_folds(
    const SplitPlan& plan, const std::vector<std::string>& subject_ids) {
  std::size_t overlaps = 0;
  for (const auto& fold : plan.folds) {
    std::set<std::string> test_subjects;
    for (auto i : fold.test_indices) test_subjects.insert(subject_ids.at(i));
    bool overlap = false;
    for (auto i : fold.train_indices)
      if (test_subjects.count(subject_ids.at(i))) {
        overlap = true;
        break;
      }
    if (overlap) ++overlaps;
  }
  return overlaps;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricValues {
  double accuracy = 0;
  std::optional<double> auc;  // missing when labels are single-class
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool zero_predicted_positives = false;
};

/// Hard label from a positive-class probability. Positive iff p >= threshold;
/// at the default 0.5 this matches the two-class argmax for p != 0.5.
inline int hard_label(double p, double threshold = 0.5) {
  return p >= threshold ? 1 : 0;
}

/// Accuracy/precision/recall/F1 at `threshold`, AUC by the pairwise
/// definition with ties counted 0.5. Single-class labels leave AUC unset.
inline MetricValues compute_metrics(const Eigen::VectorXd& probs,
                                    const std::vector<int>& labels,
                                    double threshold = 0.5) {
  require(static_cast<std::size_t>(probs.size()) == labels.size(),
          "compute_metrics: probs length ", probs.size(), " != labels ",
          labels.size());
  require(labels.size() > 0, "compute_metrics: empty input");
  for (Eigen::Index i = 0; i < probs.size(); ++i)
    require(probs(i) >= 0.0 && probs(i) <= 1.0,
            "compute_metrics: probability out of [0,1]: ", probs(i));

  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int pred = hard_label(probs(static_cast<Eigen::Index>(i)), threshold);
    if (pred == 1 && labels[i] == 1) ++tp;
    else if (pred == 0 && labels[i] == 0) ++tn;
    else if (pred == 1 && labels[i] == 0) ++fp;
    else ++fn;
  }

  MetricValues m;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(labels.size());
  if (tp + fp == 0) {
    m.precision = 0.0;  // no predicted positives, by convention
    m.zero_predicted_positives = true;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  m.recall = (tp + fn == 0) ? 0.0
                            : static_cast<double>(tp) /
                                  static_cast<double>(tp + fn);
  m.f1 = (m.precision + m.recall == 0)
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);

  std::size_t n_pos = tp + fn, n_neg = tn + fp;
  if (n_pos > 0 && n_neg > 0) {
    double score = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != 1) continue;
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] != 0) continue;
        double pi = probs(static_cast<Eigen::Index>(i));
        double pj = probs(static_cast<Eigen::Index>(j));
        if (pi > pj) score += 1.0;
        else if (pi == pj) score += 0.5;
      }
    }
    m.auc = score / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Fold results and aggregation

struct FoldResult {
  std::size_t fold_index = 0;
  Eigen::VectorXd probs;          // positive-class probabilities
  std::vector<int> pred_labels;
  std::vector<int> true_labels;
  double seconds = 0;
};

enum class Aggregation { kMeanStd, kPooled };

struct MetricReport {
  Aggregation aggregation = Aggregation::kMeanStd;
  MetricValues mean;                   // pooled: the single set of values
  MetricValues std_dev;                // mean_std only
  std::vector<MetricValues> per_fold;  // mean_std only
  std::size_t auc_defined_folds = 0;
};

/// Elementwise mean and population standard deviation across folds.
/// Folds with undefined AUC are excluded from the AUC mean/std.
inline MetricReport aggregate_mean_std(
    const std::vector<MetricValues>& per_fold) {
  require(!per_fold.empty(), "aggregate_mean_std: no folds");
  MetricReport report;
  report.aggregation = Aggregation::kMeanStd;
  report.per_fold = per_fold;

  auto mean_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s2 = 0;
    for (double x : v) s2 += (x - m) * (x - m);
    return std::pair<double, double>(
        m, std::sqrt(s2 / static_cast<double>(v.size())));
  };

  std::vector<double> acc, prec, rec, f1, auc;
  for (const auto& m : per_fold) {
    acc.push_back(m.accuracy);
    prec.push_back(m.precision);
    rec.push_back(m.recall);
    f1.push_back(m.f1);
    if (m.auc) auc.push_back(*m.auc);
  }
  std::tie(report.mean.accuracy, report.std_dev.accuracy) = mean_std(acc);
  std::tie(report.mean.precision, report.std_dev.precision) = mean_std(prec);
  std::tie(report.mean.recall, report.std_dev.recall) = mean_std(rec);
  std::tie(report.mean.f1, report.std_dev.f1) = mean_std(f1);
  report.auc_defined_folds = auc.size();
  if (!auc.empty()) {
    auto [m, s] = mean_std(auc);
    report.mean.auc = m;
    report.std_dev.auc = s;
  }
  return report;
}

/// Concatenates predictions from all folds, then computes metrics once.
/// Robust to single-class folds; errors only if the pooled labels are
/// still single-class.
inline MetricReport aggregate_pooled(const std::vector<FoldResult>& folds) {
  require(!folds.empty(), "aggregate_pooled: no folds");
  std::size_t total = 0;
  for (const auto& f : folds) total += f.true_labels.size();

  Eigen::VectorXd probs(static_cast<Eigen::Index>(total));
  std::vector<int> labels;
  labels.reserve(total);
  Eigen::Index pos = 0;
  for (const auto& f : folds) {
    require(static_cast<std::size_t>(f.probs.size()) == f.true_labels.size(),
            "aggregate_pooled: fold ", f.fold_index, " length mismatch");
    for (Eigen::Index i = 0; i < f.probs.size(); ++i) probs(pos++) = f.probs(i);
    labels.insert(labels.end(), f.true_labels.begin(), f.true_labels.end());
  }
  bool c0 = false, c1 = false;
  for (int y : labels) (y == 1 ? c1 : c0) = true;
  require(c0 && c1, "aggregate_pooled: pooled labels contain a single class");

  MetricReport report;
  report.aggregation = Aggregation::kPooled;
  report.mean = compute_metrics(probs, labels);
  report.auc_defined_folds = folds.size();
  return report;
}

}  // namespace tfmbench
