#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "tfmbench/classifier.hpp"
#include "tfmbench/common.hpp"

namespace tfmbench {
namespace detail {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;
};

/// Depth-limited regression tree with squared-error splits. For 0/1 targets
/// the variance criterion picks the same splits as Gini, so the one builder
/// serves both the forest (class fractions at leaves) and boosting
/// (custom leaf values via `leaf_fn`).
class RegressionTree {
 public:
  struct Params {
    int max_depth = 6;
    std::size_t min_leaf = 1;
    Eigen::Index max_features = -1;  // -1: consider every feature
  };

  template <typename LeafFn>
  void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
           std::vector<std::size_t> rows, const Params& params, Rng& rng,
           const LeafFn& leaf_fn) {
    nodes_.clear();
    build(x, y, std::move(rows), params, rng, leaf_fn, 0);
  }

  double predict_row(const Eigen::RowVectorXd& row) const {
    int node = 0;
    while (nodes_[static_cast<std::size_t>(node)].feature >= 0) {
      const TreeNode& n = nodes_[static_cast<std::size_t>(node)];
      node = row(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(node)].value;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  template <typename LeafFn>
  int build(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
            std::vector<std::size_t> rows, const Params& params, Rng& rng,
            const LeafFn& leaf_fn, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    double sum = 0, sum_sq = 0;
    for (auto r : rows) {
      double v = y(static_cast<Eigen::Index>(r));
      sum += v;
      sum_sq += v * v;
    }
    const double n = static_cast<double>(rows.size());
    const double parent_sse = sum_sq - sum * sum / n;

    bool can_split = depth < params.max_depth &&
                     rows.size() >= 2 * params.min_leaf && parent_sse > 1e-12;

    int best_feature = -1;
    double best_threshold = 0, best_gain = 1e-12;
    if (can_split) {
      std::vector<Eigen::Index> candidates(static_cast<std::size_t>(x.cols()));
      std::iota(candidates.begin(), candidates.end(), 0);
      if (params.max_features > 0 &&
          params.max_features < static_cast<Eigen::Index>(candidates.size())) {
        std::shuffle(candidates.begin(), candidates.end(), rng);
        candidates.resize(static_cast<std::size_t>(params.max_features));
        std::sort(candidates.begin(), candidates.end());
      }

      std::vector<std::size_t> order = rows;
      for (Eigen::Index f : candidates) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          double va = x(static_cast<Eigen::Index>(a), f);
          double vb = x(static_cast<Eigen::Index>(b), f);
          return va != vb ? va < vb : a < b;
        });
        double left_sum = 0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          left_sum += y(static_cast<Eigen::Index>(order[i]));
          double vi = x(static_cast<Eigen::Index>(order[i]), f);
          double vnext = x(static_cast<Eigen::Index>(order[i + 1]), f);
          if (vi == vnext) continue;
          std::size_t nl = i + 1, nr = order.size() - nl;
          if (nl < params.min_leaf || nr < params.min_leaf) continue;
          double right_sum = sum - left_sum;
          // SSE reduction = parent - (left + right); constant terms cancel.
          double gain = left_sum * left_sum / static_cast<double>(nl) +
                        right_sum * right_sum / static_cast<double>(nr) -
                        sum * sum / n;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_threshold = 0.5 * (vi + vnext);
          }
        }
      }
    }

    if (best_feature < 0) {
      nodes_[static_cast<std::size_t>(id)].value = leaf_fn(rows);
      return id;
    }

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) {
      (x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold
           ? left_rows
           : right_rows)
          .push_back(r);
    }
    nodes_[static_cast<std::size_t>(id)].feature = best_feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best_threshold;
    int l = build(x, y, std::move(left_rows), params, rng, leaf_fn, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    int r = build(x, y, std::move(right_rows), params, rng, leaf_fn, depth + 1);
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  std::vector<TreeNode> nodes_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Random forest

class RandomForestClassifier : public Classifier {
 public:
  explicit RandomForestClassifier(const Hyperparameters& hyper) {
    n_estimators_ = hyper.value("n_estimators", 150);
    max_depth_ = hyper.value("max_depth", 34);
    min_samples_leaf_ = hyper.value("min_samples_leaf", 1);
    seed_ = hyper.value("seed", 0);
    require(n_estimators_ >= 1, name(), ": n_estimators must be >= 1");
    require(max_depth_ >= 1, name(), ": max_depth must be >= 1");
  }

  const std::string& name() const override {
    static const std::string n = "random_forest";
    return n;
  }
  ClassifierKind kind() const override { return ClassifierKind::kClassical; }

  Hyperparameters hyperparameters() const override {
    return {{"n_estimators", n_estimators_},
            {"max_depth", max_depth_},
            {"min_samples_leaf", min_samples_leaf_},
            {"seed", seed_}};
  }

  void fit(const TabularDataset& train) override {
    check_fit_preconditions(train);
    n_features_ = train.features.cols();
    trees_.assign(static_cast<std::size_t>(n_estimators_), {});

    Eigen::VectorXd y(train.features.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i)
      y(i) = train.labels[static_cast<std::size_t>(i)];

    detail::RegressionTree::Params params;
    params.max_depth = max_depth_;
    params.min_leaf = static_cast<std::size_t>(min_samples_leaf_);
    params.max_features = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(
               std::floor(std::sqrt(static_cast<double>(n_features_)))));

    Rng rng = make_rng(seed_);
    const std::size_t n = train.n_rows();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    auto leaf_mean = [&](const std::vector<std::size_t>& rows) {
      double s = 0;
      for (auto r : rows) s += y(static_cast<Eigen::Index>(r));
      return s / static_cast<double>(rows.size());
    };
    for (auto& tree : trees_) {
      std::vector<std::size_t> bootstrap(n);
      for (auto& b : bootstrap) b = pick(rng);
      tree.fit(train.features, y, std::move(bootstrap), params, rng, leaf_mean);
    }
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const override {
    require(fitted_, name(), ": predict before fit");
    check_query_width(query.cols(), n_features_);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(query.rows());
    for (const auto& tree : trees_)
      for (Eigen::Index i = 0; i < query.rows(); ++i)
        p(i) += tree.predict_row(query.row(i));
    return p / static_cast<double>(trees_.size());
  }

 private:
  int n_estimators_, max_depth_, min_samples_leaf_;
  std::uint64_t seed_;
  Eigen::Index n_features_ = 0;
  bool fitted_ = false;
  std::vector<detail::RegressionTree> trees_;
};

// ---------------------------------------------------------------------------
// Gradient-boosted trees (logistic loss, Newton leaf values)

class GradientBoostedTreesClassifier : public Classifier {
 public:
  explicit GradientBoostedTreesClassifier(const Hyperparameters& hyper) {
    max_depth_ = hyper.value("max_depth", 42);
    learning_rate_ = hyper.value("learning_rate", 0.046);
    n_rounds_ = hyper.value("n_rounds", 100);
    min_samples_leaf_ = hyper.value("min_samples_leaf", 1);
    require(max_depth_ >= 1, name(), ": max_depth must be >= 1");
    require(learning_rate_ > 0, name(), ": learning_rate must be > 0");
    require(n_rounds_ >= 1, name(), ": n_rounds must be >= 1");
  }

  const std::string& name() const override {
    static const std::string n = "gradient_boosted_trees";
    return n;
  }
  ClassifierKind kind() const override { return ClassifierKind::kClassical; }

  Hyperparameters hyperparameters() const override {
    return {{"max_depth", max_depth_},
            {"learning_rate", learning_rate_},
            {"n_rounds", n_rounds_},
            {"min_samples_leaf", min_samples_leaf_}};
  }

  void fit(const TabularDataset& train) override {
    check_fit_preconditions(train);
    n_features_ = train.features.cols();
    trees_.clear();

    const Eigen::Index n = train.features.rows();
    double pos = 0;
    for (int l : train.labels) pos += l;
    double prior = pos / static_cast<double>(n);
    base_score_ = std::log(prior / (1.0 - prior));

    Eigen::VectorXd score = Eigen::VectorXd::Constant(n, base_score_);
    Eigen::VectorXd residual(n), prob(n);

    detail::RegressionTree::Params params;
    params.max_depth = max_depth_;
    params.min_leaf = static_cast<std::size_t>(min_samples_leaf_);
    params.max_features = -1;

    std::vector<std::size_t> all_rows(static_cast<std::size_t>(n));
    std::iota(all_rows.begin(), all_rows.end(), 0);
    Rng rng = make_rng(0);  // unused: no feature subsampling in boosting

    for (int round = 0; round < n_rounds_; ++round) {
      for (Eigen::Index i = 0; i < n; ++i) {
        prob(i) = 1.0 / (1.0 + std::exp(-score(i)));
        residual(i) = train.labels[static_cast<std::size_t>(i)] - prob(i);
      }
      auto newton_leaf = [&](const std::vector<std::size_t>& rows) {
        double num = 0, den = 0;
        for (auto r : rows) {
          num += residual(static_cast<Eigen::Index>(r));
          double p = prob(static_cast<Eigen::Index>(r));
          den += p * (1.0 - p);
        }
        return num / std::max(den, 1e-12);
      };
      detail::RegressionTree tree;
      tree.fit(train.features, residual, all_rows, params, rng, newton_leaf);
      for (Eigen::Index i = 0; i < n; ++i)
        score(i) += learning_rate_ * tree.predict_row(train.features.row(i));
      trees_.push_back(std::move(tree));
    }
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const override {
    require(fitted_, name(), ": predict before fit");
    check_query_width(query.cols(), n_features_);
    Eigen::VectorXd p(query.rows());
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
      double score = base_score_;
      for (const auto& tree : trees_)
        score += learning_rate_ * tree.predict_row(query.row(i));
      p(i) = 1.0 / (1.0 + std::exp(-score));
    }
    return p;
  }

 private:
  int max_depth_, n_rounds_, min_samples_leaf_;
  double learning_rate_;
  double base_score_ = 0;
  Eigen::Index n_features_ = 0;
  bool fitted_ = false;
  std::vector<detail::RegressionTree> trees_;
};

}  // namespace tfmbench
