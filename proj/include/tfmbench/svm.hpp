#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmbench/classifier.hpp"
#include "tfmbench/common.hpp"

namespace tfmbench {
namespace detail {

/// Soft-margin RBF SVM trained with the simplified SMO pair-update rule.
/// Small-N workloads only; the kernel matrix is held densely.
class SmoSvm {
 public:
  void train(const Eigen::MatrixXd& x, const std::vector<int>& labels01,
             double c, double gamma, std::uint64_t seed) {
    x_ = x;
    gamma_ = gamma;
    const Eigen::Index n = x.rows();
    y_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      y_(i) = labels01[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        double v = kernel(x.row(i), x.row(j));
        k(i, j) = v;
        k(j, i) = v;
      }

    alpha_ = Eigen::VectorXd::Zero(n);
    b_ = 0;
    const double tol = 1e-3;
    Rng rng = make_rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);

    auto decision_on_train = [&](Eigen::Index i) {
      return (alpha_.array() * y_.array() * k.col(i).array()).sum() + b_;
    };

    int passes = 0;
    const int max_passes = 5;
    int guard = 0;
    while (passes < max_passes && guard++ < 2000) {
      int changed = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double ei = decision_on_train(i) - y_(i);
        bool violates = (y_(i) * ei < -tol && alpha_(i) < c) ||
                        (y_(i) * ei > tol && alpha_(i) > 0);
        if (!violates) continue;
        Eigen::Index j = pick(rng);
        while (j == i) j = pick(rng);
        double ej = decision_on_train(j) - y_(j);

        double ai_old = alpha_(i), aj_old = alpha_(j);
        double lo, hi;
        if (y_(i) != y_(j)) {
          lo = std::max(0.0, aj_old - ai_old);
          hi = std::min(c, c + aj_old - ai_old);
        } else {
          lo = std::max(0.0, ai_old + aj_old - c);
          hi = std::min(c, ai_old + aj_old);
        }
        if (lo == hi) continue;
        double eta = 2 * k(i, j) - k(i, i) - k(j, j);
        if (eta >= 0) continue;
        double aj = aj_old - y_(j) * (ei - ej) / eta;
        aj = std::clamp(aj, lo, hi);
        if (std::abs(aj - aj_old) < 1e-5) continue;
        double ai = ai_old + y_(i) * y_(j) * (aj_old - aj);
        alpha_(i) = ai;
        alpha_(j) = aj;

        double b1 = b_ - ei - y_(i) * (ai - ai_old) * k(i, i) -
                    y_(j) * (aj - aj_old) * k(i, j);
        double b2 = b_ - ej - y_(i) * (ai - ai_old) * k(i, j) -
                    y_(j) * (aj - aj_old) * k(j, j);
        if (ai > 0 && ai < c) b_ = b1;
        else if (aj > 0 && aj < c) b_ = b2;
        else b_ = 0.5 * (b1 + b2);
        ++changed;
      }
      passes = changed == 0 ? passes + 1 : 0;
    }
  }

  double decision(const Eigen::RowVectorXd& q) const {
    double s = b_;
    for (Eigen::Index i = 0; i < x_.rows(); ++i)
      if (alpha_(i) > 0) s += alpha_(i) * y_(i) * kernel(x_.row(i), q);
    return s;
  }

 private:
  double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
    return std::exp(-gamma_ * (a - b).squaredNorm());
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_, alpha_;
  double b_ = 0, gamma_ = 1.0;
};

/// Platt sigmoid fit (the Lin/Weng/Keerthi Newton variant with backtracking).
/// Maps decision values to calibrated probabilities P(y=1|f) = 1/(1+e^{Af+B}).
struct PlattScaler {
  double a = 0, b = 0;

  void fit(const std::vector<double>& deci, const std::vector<int>& labels01) {
    double prior1 = 0, prior0 = 0;
    for (int y : labels01) (y == 1 ? prior1 : prior0) += 1;
    double hi_target = (prior1 + 1) / (prior1 + 2);
    double lo_target = 1.0 / (prior0 + 2);
    std::vector<double> t(labels01.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      t[i] = labels01[i] == 1 ? hi_target : lo_target;

    a = 0;
    b = std::log((prior0 + 1) / (prior1 + 1));
    double fval = objective(deci, t, a, b);
    const double sigma = 1e-12, eps = 1e-5, min_step = 1e-10;

    for (int it = 0; it < 100; ++it) {
      double h11 = sigma, h22 = sigma, h21 = 0, g1 = 0, g2 = 0;
      for (std::size_t i = 0; i < deci.size(); ++i) {
        double f = deci[i] * a + b;
        double p, q;
        if (f >= 0) {
          p = std::exp(-f) / (1 + std::exp(-f));
          q = 1 / (1 + std::exp(-f));
        } else {
          p = 1 / (1 + std::exp(f));
          q = std::exp(f) / (1 + std::exp(f));
        }
        double d2 = p * q;
        h11 += deci[i] * deci[i] * d2;
        h22 += d2;
        h21 += deci[i] * d2;
        double d1 = t[i] - p;
        g1 += deci[i] * d1;
        g2 += d1;
      }
      if (std::abs(g1) < eps && std::abs(g2) < eps) break;
      double det = h11 * h22 - h21 * h21;
      double da = -(h22 * g1 - h21 * g2) / det;
      double db = -(-h21 * g1 + h11 * g2) / det;
      double gd = g1 * da + g2 * db;
      double step = 1;
      while (step >= min_step) {
        double na = a + step * da, nb = b + step * db;
        double nf = objective(deci, t, na, nb);
        if (nf < fval + 1e-4 * step * gd) {
          a = na;
          b = nb;
          fval = nf;
          break;
        }
        step /= 2;
      }
      if (step < min_step) break;
    }
  }

  double probability(double decision) const {
    double f = decision * a + b;
    return f >= 0 ? std::exp(-f) / (1 + std::exp(-f)) : 1 / (1 + std::exp(f));
  }

 private:
  static double objective(const std::vector<double>& deci,
                          const std::vector<double>& t, double a, double b) {
    double v = 0;
    for (std::size_t i = 0; i < deci.size(); ++i) {
      double f = deci[i] * a + b;
      if (f >= 0) v += t[i] * f + std::log(1 + std::exp(-f));
      else v += (t[i] - 1) * f + std::log(1 + std::exp(f));
    }
    return v;
  }
};

}  // namespace detail

/// RBF-kernel SVM with calibrated probability output. gamma follows the
/// usual "scale" convention (1 / (p * Var(X))) unless given numerically.
/// Calibration decision values come from an internal stratified 3-fold CV
/// so the sigmoid does not overfit the training scores.
class SvmClassifier : public Classifier {
 public:
  explicit SvmClassifier(const Hyperparameters& hyper) {
    c_ = hyper.value("C", 1.0);
    seed_ = hyper.value("seed", 0);
    if (hyper.contains("gamma") && hyper["gamma"].is_number())
      gamma_value_ = hyper["gamma"].get<double>();
    else {
      std::string g = hyper.value("gamma", "scale");
      require(g == "scale", name(), ": gamma must be numeric or 'scale', got '",
              g, "'");
    }
    require(c_ > 0, name(), ": C must be > 0");
  }

  const std::string& name() const override {
    static const std::string n = "svm";
    return n;
  }
  ClassifierKind kind() const override { return ClassifierKind::kClassical; }

  Hyperparameters hyperparameters() const override {
    Hyperparameters h = {{"C", c_}, {"seed", seed_}};
    if (gamma_value_ > 0) h["gamma"] = gamma_value_;
    else h["gamma"] = "scale";
    return h;
  }

  void fit(const TabularDataset& train) override {
    check_fit_preconditions(train);
    n_features_ = train.features.cols();

    double gamma = gamma_value_;
    if (gamma <= 0) {
      double mean = train.features.mean();
      double var = (train.features.array() - mean).square().mean();
      gamma = 1.0 / (static_cast<double>(n_features_) * std::max(var, 1e-12));
    }
    effective_gamma_ = gamma;

    // Out-of-fold decision values for Platt scaling.
    std::vector<double> deci;
    std::vector<int> deci_labels;
    std::size_t min_class = std::min(
        static_cast<std::size_t>(std::count(train.labels.begin(),
                                            train.labels.end(), 1)),
        train.labels.size() - static_cast<std::size_t>(std::count(
                                  train.labels.begin(), train.labels.end(), 1)));
    if (min_class >= 3) {
      SplitPlan plan = stratified_kfold_repeated(train.labels, 3, 1, seed_);
      for (const auto& fold : plan.folds) {
        TabularDataset sub = train.select_rows(fold.train_indices);
        detail::SmoSvm fold_svm;
        fold_svm.train(sub.features, sub.labels, c_, gamma, seed_);
        for (auto i : fold.test_indices) {
          deci.push_back(
              fold_svm.decision(train.features.row(static_cast<Eigen::Index>(i))));
          deci_labels.push_back(train.labels[i]);
        }
      }
    }

    svm_.train(train.features, train.labels, c_, gamma, seed_);
    if (deci.empty()) {
      // Too few samples per class for CV calibration: fall back to
      // training-set decision values.
      for (Eigen::Index i = 0; i < train.features.rows(); ++i) {
        deci.push_back(svm_.decision(train.features.row(i)));
        deci_labels.push_back(train.labels[static_cast<std::size_t>(i)]);
      }
    }
    platt_.fit(deci, deci_labels);
    fitted_ = true;
  }

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const override {
    require(fitted_, name(), ": predict before fit");
    check_query_width(query.cols(), n_features_);
    Eigen::VectorXd p(query.rows());
    for (Eigen::Index i = 0; i < query.rows(); ++i)
      p(i) = platt_.probability(svm_.decision(query.row(i)));
    return p;
  }

  double effective_gamma() const { return effective_gamma_; }

 private:
  double c_ = 1.0;
  double gamma_value_ = -1;  // <= 0 means "scale"
  double effective_gamma_ = 0;
  std::uint64_t seed_ = 0;
  Eigen::Index n_features_ = 0;
  bool fitted_ = false;
  detail::SmoSvm svm_;
  detail::PlattScaler platt_;
};

}  // namespace tfmbench
