#pragma once

// Independent oracles used by the test suites. These deliberately avoid the
// library's own code paths: the linear separator is a from-scratch logistic
// regression, the metric oracles are literal counting definitions.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

// Plain full-batch logistic regression on standardized features. Good
// enough to certify linear separability of a synthetic dataset.
class LinearSeparator {
 public:
  void fit(const Eigen::MatrixXd& x, const std::vector<int>& y,
           int iters = 400, double lr = 0.5) {
    mean_ = x.colwise().mean();
    Eigen::RowVectorXd var =
        ((x.rowwise() - mean_).array().square().colwise().sum() /
         static_cast<double>(x.rows()))
            .matrix();
    scale_ = (var.array() + 1e-12).sqrt().matrix();
    Eigen::MatrixXd z = standardized(x);

    w_ = Eigen::VectorXd::Zero(x.cols());
    b_ = 0;
    const double n = static_cast<double>(x.rows());
    for (int it = 0; it < iters; ++it) {
      Eigen::VectorXd p = ((z * w_).array() + b_).unaryExpr([](double v) {
        return 1.0 / (1.0 + std::exp(-v));
      });
      Eigen::VectorXd err = p;
      for (int i = 0; i < err.size(); ++i) err(i) -= y[static_cast<size_t>(i)];
      w_ -= lr * (z.transpose() * err) / n;
      b_ -= lr * err.sum() / n;
    }
  }

  double accuracy(const Eigen::MatrixXd& x, const std::vector<int>& y) const {
    Eigen::MatrixXd z = standardized(x);
    int hits = 0;
    for (int i = 0; i < z.rows(); ++i) {
      double v = z.row(i).dot(w_) + b_;
      int pred = v > 0 ? 1 : 0;
      if (pred == y[static_cast<size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(x.rows());
  }

 private:
  Eigen::MatrixXd standardized(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd z = x.rowwise() - mean_;
    for (int j = 0; j < z.cols(); ++j) z.col(j) /= scale_(j);
    return z;
  }

  Eigen::RowVectorXd mean_, scale_;
  Eigen::VectorXd w_;
  double b_ = 0;
};

// Counting-definition metrics; positive prediction iff p >= threshold.
struct BruteMetrics {
  double accuracy, precision, recall, f1;
  std::optional<double> auc;
};

inline BruteMetrics brute_metrics(const std::vector<double>& probs,
                                  const std::vector<int>& labels,
                                  double threshold = 0.5) {
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    int pred = probs[i] >= threshold ? 1 : 0;
    tp += (pred == 1 && labels[i] == 1);
    tn += (pred == 0 && labels[i] == 0);
    fp += (pred == 1 && labels[i] == 0);
    fn += (pred == 0 && labels[i] == 1);
  }
  BruteMetrics m{};
  m.accuracy = (tp + tn) / static_cast<double>(labels.size());
  m.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0
             ? 2 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  double pairs = 0, wins = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    for (size_t j = 0; j < labels.size(); ++j)
      if (labels[i] == 1 && labels[j] == 0) {
        pairs += 1;
        if (probs[i] > probs[j]) wins += 1;
        else if (probs[i] == probs[j]) wins += 0.5;
      }
  if (pairs > 0) m.auc = wins / pairs;
  return m;
}

// Lag-1 sample autocorrelation, written directly from the definition.
inline double brute_autocorr_lag1(const std::vector<double>& x) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double num = 0, den = 0;
  for (size_t t = 0; t + 1 < x.size(); ++t)
    num += (x[t] - mean) * (x[t + 1] - mean);
  for (double v : x) den += (v - mean) * (v - mean);
  return den == 0 ? 0.0 : num / den;
}

// One-way two-group ANOVA F from sums of squares.
inline double brute_anova_f(const std::vector<double>& x,
                            const std::vector<int>& y) {
  double s0 = 0, s1 = 0, n0 = 0, n1 = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 1) { s1 += x[i]; n1 += 1; }
    else { s0 += x[i]; n0 += 1; }
  }
  double m0 = s0 / n0, m1 = s1 / n1, grand = (s0 + s1) / (n0 + n1);
  double ssb = n0 * (m0 - grand) * (m0 - grand) + n1 * (m1 - grand) * (m1 - grand);
  double ssw = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double m = y[i] == 1 ? m1 : m0;
    ssw += (x[i] - m) * (x[i] - m);
  }
  return (ssb / 1.0) / (ssw / (n0 + n1 - 2));
}

}  // namespace oracles
