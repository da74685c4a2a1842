#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfmbench/common.hpp"

namespace tfmbench {

// ---------------------------------------------------------------------------
// Search space

struct ParamDomain {
  enum class Kind {
    kUniform,
    kLogUniform,
    kIntUniform,
    kCategorical,
    kMixedCategoricalLog  // named categories plus a log-uniform numeric branch
  };
  Kind kind = Kind::kUniform;
  double low = 0, high = 1;
  int step = 1;  // int domains only
  std::vector<std::string> categories;

  static ParamDomain uniform(double lo, double hi) {
    return {Kind::kUniform, lo, hi, 1, {}};
  }
  static ParamDomain log_uniform(double lo, double hi) {
    return {Kind::kLogUniform, lo, hi, 1, {}};
  }
  static ParamDomain int_uniform(int lo, int hi, int step = 1) {
    return {Kind::kIntUniform, static_cast<double>(lo),
            static_cast<double>(hi), step, {}};
  }
  static ParamDomain categorical(std::vector<std::string> options) {
    return {Kind::kCategorical, 0, 0, 1, std::move(options)};
  }
  static ParamDomain mixed_categorical_log(std::vector<std::string> options,
                                           double lo, double hi) {
    return {Kind::kMixedCategoricalLog, lo, hi, 1, std::move(options)};
  }
};

// Ordered map so the sampling sequence is reproducible.
using SearchSpace = std::map<std::string, ParamDomain>;

struct Observation {
  nlohmann::json params;
  double value = 0;  // objective, higher is better
};

// ---------------------------------------------------------------------------
// Parzen estimator over one numeric dimension (Bergstra-style bandwidths:
// each component's sigma is the larger gap to its neighbours, clipped, plus
// a wide prior component at the domain midpoint).

namespace detail {

class ParzenKde {
 public:
  ParzenKde(std::vector<double> points, double lo, double hi)
      : lo_(lo), hi_(hi) {
    double range = hi - lo;
    points.push_back(0.5 * (lo + hi));  // prior component
    std::sort(points.begin(), points.end());
    mus_ = points;
    sigmas_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      double left = i == 0 ? range : points[i] - points[i - 1];
      double right = i + 1 == points.size() ? range : points[i + 1] - points[i];
      double sigma = std::max(left, right);
      sigmas_[i] = std::clamp(sigma, range / 100.0, range);
    }
  }

  double sample(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, mus_.size() - 1);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int attempt = 0; attempt < 32; ++attempt) {
      std::size_t c = pick(rng);
      double v = mus_[c] + sigmas_[c] * unit(rng);
      if (v >= lo_ && v <= hi_) return v;
    }
    std::uniform_real_distribution<double> fallback(lo_, hi_);
    return fallback(rng);
  }

  double log_density(double x) const {
    double acc = 0;
    for (std::size_t i = 0; i < mus_.size(); ++i) {
      double z = (x - mus_[i]) / sigmas_[i];
      acc += std::exp(-0.5 * z * z) / (sigmas_[i] * std::sqrt(2.0 * M_PI));
    }
    return std::log(acc / static_cast<double>(mus_.size()) + 1e-300);
  }

 private:
  std::vector<double> mus_, sigmas_;
  double lo_, hi_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Tree-structured Parzen estimator (maximizing). The first n_startup trials
// sample the prior; afterwards candidates are drawn from the good-trial
// density l(x) and ranked by log l(x) - log g(x).

class TpeSampler {
 public:
  TpeSampler(SearchSpace space, std::uint64_t seed, int n_startup = 10,
             int n_candidates = 24)
      : space_(std::move(space)),
        rng_(make_rng(seed)),
        n_startup_(n_startup),
        n_candidates_(n_candidates) {
    require(!space_.empty(), "tpe: empty search space");
  }

  nlohmann::json suggest(const std::vector<Observation>& completed) {
    nlohmann::json params = nlohmann::json::object();
    if (static_cast<int>(completed.size()) < n_startup_) {
      for (const auto& [name, domain] : space_)
        params[name] = sample_prior(domain);
      return params;
    }

    // Split into good/bad by objective (descending; ties keep earlier trials
    // in the good set first).
    std::vector<std::size_t> order(completed.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return completed[a].value > completed[b].value;
                     });
    std::size_t n_good = static_cast<std::size_t>(std::min<double>(
        std::ceil(0.1 * static_cast<double>(completed.size())), 25.0));
    n_good = std::max<std::size_t>(n_good, 1);

    for (const auto& [name, domain] : space_) {
      std::vector<const nlohmann::json*> good, bad;
      for (std::size_t i = 0; i < order.size(); ++i) {
        const nlohmann::json& p = completed[order[i]].params;
        if (!p.contains(name)) continue;
        (i < n_good ? good : bad).push_back(&p.at(name));
      }
      params[name] = suggest_one(domain, good, bad);
    }
    return params;
  }

 private:
  static bool is_log(const ParamDomain& d) {
    return d.kind == ParamDomain::Kind::kLogUniform ||
           d.kind == ParamDomain::Kind::kMixedCategoricalLog;
  }

  double to_internal(const ParamDomain& d, double x) const {
    return is_log(d) ? std::log(x) : x;
  }
  double from_internal(const ParamDomain& d, double t) const {
    return is_log(d) ? std::exp(t) : t;
  }

  double snap_int(const ParamDomain& d, double v) const {
    double steps = std::round((v - d.low) / d.step);
    double snapped = d.low + steps * d.step;
    return std::clamp(snapped, d.low, d.high);
  }

  nlohmann::json sample_prior(const ParamDomain& d) {
    switch (d.kind) {
      case ParamDomain::Kind::kUniform: {
        std::uniform_real_distribution<double> u(d.low, d.high);
        return u(rng_);
      }
      case ParamDomain::Kind::kLogUniform: {
        std::uniform_real_distribution<double> u(std::log(d.low),
                                                 std::log(d.high));
        return std::exp(u(rng_));
      }
      case ParamDomain::Kind::kIntUniform: {
        std::uniform_real_distribution<double> u(d.low, d.high);
        return static_cast<int>(snap_int(d, u(rng_)));
      }
      case ParamDomain::Kind::kCategorical: {
        std::uniform_int_distribution<std::size_t> u(0, d.categories.size() - 1);
        return d.categories[u(rng_)];
      }
      case ParamDomain::Kind::kMixedCategoricalLog: {
        // numeric branch weighted like one extra category
        std::uniform_int_distribution<std::size_t> u(0, d.categories.size());
        std::size_t pick = u(rng_);
        if (pick < d.categories.size()) return d.categories[pick];
        std::uniform_real_distribution<double> v(std::log(d.low),
                                                 std::log(d.high));
        return std::exp(v(rng_));
      }
    }
    fail("tpe: unhandled domain kind");
  }

  nlohmann::json suggest_one(const ParamDomain& d,
                             const std::vector<const nlohmann::json*>& good,
                             const std::vector<const nlohmann::json*>& bad) {
    if (d.kind == ParamDomain::Kind::kCategorical)
      return pick_category(d.categories, good, bad);

    if (d.kind == ParamDomain::Kind::kMixedCategoricalLog) {
      std::vector<std::string> options = d.categories;
      options.push_back("__numeric__");
      std::string choice = pick_category(options, good, bad);
      if (choice != "__numeric__") return choice;
      auto numeric_only = [](const std::vector<const nlohmann::json*>& v) {
        std::vector<const nlohmann::json*> out;
        for (auto* p : v)
          if (p->is_number()) out.push_back(p);
        return out;
      };
      return numeric_suggest(d, numeric_only(good), numeric_only(bad));
    }
    return numeric_suggest(d, good, bad);
  }

  nlohmann::json numeric_suggest(const ParamDomain& d,
                                 const std::vector<const nlohmann::json*>& good,
                                 const std::vector<const nlohmann::json*>& bad) {
    double lo = to_internal(d, d.low), hi = to_internal(d, d.high);
    auto values = [&](const std::vector<const nlohmann::json*>& v) {
      std::vector<double> out;
      for (auto* p : v) out.push_back(to_internal(d, p->get<double>()));
      return out;
    };
    detail::ParzenKde l(values(good), lo, hi);
    detail::ParzenKde g(values(bad), lo, hi);

    double best = 0, best_score = -1e300;
    for (int c = 0; c < n_candidates_; ++c) {
      double t = l.sample(rng_);
      double score = l.log_density(t) - g.log_density(t);
      if (score > best_score) {
        best_score = score;
        best = t;
      }
    }
    double value = from_internal(d, best);
    if (d.kind == ParamDomain::Kind::kIntUniform)
      return static_cast<int>(snap_int(d, value));
    return std::clamp(value, d.low, d.high);
  }

  std::string pick_category(const std::vector<std::string>& options,
                            const std::vector<const nlohmann::json*>& good,
                            const std::vector<const nlohmann::json*>& bad) {
    auto weights = [&](const std::vector<const nlohmann::json*>& v) {
      std::vector<double> w(options.size(), 1.0);  // +1 smoothing
      for (auto* p : v) {
        std::string s = p->is_string() ? p->get<std::string>() : "__numeric__";
        for (std::size_t i = 0; i < options.size(); ++i)
          if (options[i] == s) w[i] += 1;
      }
      double total = 0;
      for (double x : w) total += x;
      for (double& x : w) x /= total;
      return w;
    };
    std::vector<double> wl = weights(good), wg = weights(bad);
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t i = 0; i < options.size(); ++i) {
      double score = std::log(wl[i]) - std::log(wg[i]);
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    return options[best];
  }

  SearchSpace space_;
  Rng rng_;
  int n_startup_, n_candidates_;
};

// ---------------------------------------------------------------------------
// Median stopping rule: prune a trial whose intermediate objective falls
// below the median of completed trials at the same step.

class MedianPruner {
 public:
  explicit MedianPruner(int n_startup_trials = 5)
      : n_startup_trials_(n_startup_trials) {}

  void report(int trial, int step, double value) {
    intermediates_[trial][step] = value;
  }
  void complete(int trial) { completed_.insert(trial); }

  bool should_prune(int step, double value) const {
    std::vector<double> peers;
    for (int t : completed_) {
      auto it = intermediates_.find(t);
      if (it == intermediates_.end()) continue;
      auto jt = it->second.find(step);
      if (jt != it->second.end()) peers.push_back(jt->second);
    }
    if (static_cast<int>(completed_.size()) < n_startup_trials_ ||
        peers.empty())
      return false;
    std::sort(peers.begin(), peers.end());
    std::size_t n = peers.size();
    double median = n % 2 == 1 ? peers[n / 2]
                               : 0.5 * (peers[n / 2 - 1] + peers[n / 2]);
    return value < median;
  }

 private:
  int n_startup_trials_;
  std::map<int, std::map<int, double>> intermediates_;
  std::set<int> completed_;
};

}  // namespace tfmbench
