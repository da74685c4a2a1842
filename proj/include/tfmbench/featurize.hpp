#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tfmbench/common.hpp"
#include "tfmbench/dataset.hpp"

namespace tfmbench {

// ---------------------------------------------------------------------------
// Statistical attributes

enum class Attribute { kMean, kMedian, kStd, kAutocorr };

inline const char* attribute_name(Attribute a) {
  switch (a) {
    case Attribute::kMean: return "mean";
    case Attribute::kMedian: return "median";
    case Attribute::kStd: return "std";
    case Attribute::kAutocorr: return "autocorr";
  }
  fail("unknown attribute");
}

inline Attribute attribute_from_name(const std::string& name) {
  if (name == "mean") return Attribute::kMean;
  if (name == "median") return Attribute::kMedian;
  if (name == "std") return Attribute::kStd;
  if (name == "autocorr") return Attribute::kAutocorr;
  fail("unknown attribute '", name,
       "' (expected mean, median, std or autocorr)");
}

struct AttributeSet {
  std::vector<Attribute> attributes;

  static AttributeSet all() {
    return {{Attribute::kMean, Attribute::kMedian, Attribute::kStd,
             Attribute::kAutocorr}};
  }

  static AttributeSet from_names(const std::vector<std::string>& names) {
    AttributeSet set;
    for (const auto& n : names) set.attributes.push_back(attribute_from_name(n));
    set.validate();
    return set;
  }

  std::size_t n() const { return attributes.size(); }

  bool has(Attribute a) const {
    return std::find(attributes.begin(), attributes.end(), a) !=
           attributes.end();
  }

  void validate() const {
    require(!attributes.empty(), "attribute set must be non-empty");
    std::set<Attribute> seen;
    for (auto a : attributes)
      require(seen.insert(a).second, "duplicate attribute '",
              attribute_name(a), "'");
  }
};

// ---------------------------------------------------------------------------
// Per-column statistics. std is the population form (divide by T);
// autocorrelation is lag-1 on the raw series with r1 = 0 for constant series.

inline double column_mean(const Eigen::VectorXd& x) { return x.mean(); }

inline double column_median(Eigen::VectorXd x) {
  std::sort(x.data(), x.data() + x.size());
  Eigen::Index n = x.size();
  if (n % 2 == 1) return x(n / 2);
  return 0.5 * (x(n / 2 - 1) + x(n / 2));
}

inline double column_std(const Eigen::VectorXd& x) {
  double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() /
                   static_cast<double>(x.size()));
}

inline double column_autocorr_lag1(const Eigen::VectorXd& x) {
  require(x.size() >= 2, "autocorrelation requires at least 2 frames");
  double m = x.mean();
  Eigen::ArrayXd c = x.array() - m;
  double denom = c.square().sum();
  if (denom == 0.0) return 0.0;
  double num = (c.head(x.size() - 1) * c.tail(x.size() - 1)).sum();
  return num / denom;
}

// ---------------------------------------------------------------------------
// Zero-frame filtering and aggregation

/// Removes frames whose features are all exactly zero, preserving order.
inline TemporalSample drop_zero_frames(const TemporalSample& sample) {
  require(sample.frames.rows() >= 1, "sample ", sample.sample_id,
          ": no frames");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < sample.frames.rows(); ++t)
    if (!(sample.frames.row(t).array() == 0.0).all()) keep.push_back(t);
  require(!keep.empty(), "sample ", sample.sample_id, ": all ",
          sample.frames.rows(), " frames are zero rows, sample unusable");
  if (keep.size() == static_cast<std::size_t>(sample.frames.rows()))
    return sample;
  TemporalSample out = sample;
  out.frames.resize(static_cast<Eigen::Index>(keep.size()),
                    sample.frames.cols());
  for (std::size_t i = 0; i < keep.size(); ++i)
    out.frames.row(static_cast<Eigen::Index>(i)) = sample.frames.row(keep[i]);
  return out;
}

/// Collapses a T x d sample into an n*d vector, attribute-major: the full
/// block of means first, then medians, and so on in AttributeSet order.
inline Eigen::VectorXd aggregate(const TemporalSample& sample,
                                 const AttributeSet& attrs) {
  attrs.validate();
  const Eigen::Index d = sample.frames.cols();
  const Eigen::Index t = sample.frames.rows();
  require(t >= 1, "sample ", sample.sample_id, ": no frames");
  if (attrs.has(Attribute::kAutocorr))
    require(t >= 2, "sample ", sample.sample_id,
            ": autocorrelation needs at least 2 frames, have ", t);

  Eigen::VectorXd out(static_cast<Eigen::Index>(attrs.n()) * d);
  Eigen::Index pos = 0;
  for (Attribute a : attrs.attributes) {
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::VectorXd col = sample.frames.col(j);
      double v = 0;
      switch (a) {
        case Attribute::kMean: v = column_mean(col); break;
        case Attribute::kMedian: v = column_median(col); break;
        case Attribute::kStd: v = column_std(col); break;
        case Attribute::kAutocorr: v = column_autocorr_lag1(col); break;
      }
      out(pos++) = v;
    }
  }
  return out;
}

inline std::vector<std::string> aggregate_feature_names(
    const std::vector<std::string>& names, const AttributeSet& attrs) {
  std::vector<std::string> out;
  out.reserve(names.size() * attrs.n());
  for (Attribute a : attrs.attributes)
    for (const auto& n : names)
      out.push_back(n + "_" + attribute_name(a));
  return out;
}

/// Full aggregation pipeline over a sample list: zero-frame filter each
/// sample, then stack aggregated vectors in manifest order.
inline TabularDataset aggregate_dataset(
    const std::vector<TemporalSample>& samples, const AttributeSet& attrs) {
  require(!samples.empty(), "aggregate_dataset: no samples");
  TabularDataset ds;
  const Eigen::Index d = samples.front().frames.cols();
  ds.features.resize(static_cast<Eigen::Index>(samples.size()),
                     static_cast<Eigen::Index>(attrs.n()) * d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require(samples[i].frames.cols() == d, "sample ", samples[i].sample_id,
            ": feature dimension ", samples[i].frames.cols(),
            " != ", d, " of first sample");
    TemporalSample filtered = drop_zero_frames(samples[i]);
    ds.features.row(static_cast<Eigen::Index>(i)) =
        aggregate(filtered, attrs).transpose();
    ds.labels.push_back(samples[i].label);
    ds.subject_ids.push_back(samples[i].subject_id);
  }
  std::vector<std::string> base = samples.front().feature_names;
  if (base.empty())
    for (Eigen::Index j = 0; j < d; ++j)
      base.push_back("f" + std::to_string(j));
  ds.feature_names = aggregate_feature_names(base, attrs);
  ds.validate();
  return ds;
}

/// Drops columns identical across all rows. Label-free, so safe to apply
/// dataset-wide before any split.
inline TabularDataset drop_constant_features(const TabularDataset& ds) {
  require(ds.n_rows() >= 1, "drop_constant_features: empty dataset");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    const auto col = ds.features.col(j);
    if (!(col.array() == col(0)).all()) keep.push_back(j);
  }
  require(!keep.empty(),
          "drop_constant_features: every column is constant across all ",
          ds.n_rows(), " rows");
  TabularDataset out;
  out.features.resize(ds.features.rows(),
                      static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.features.col(static_cast<Eigen::Index>(i)) = ds.features.col(keep[i]);
    out.feature_names.push_back(
        ds.feature_names[static_cast<std::size_t>(keep[i])]);
  }
  out.labels = ds.labels;
  out.subject_ids = ds.subject_ids;
  return out;
}

// ---------------------------------------------------------------------------
// ANOVA F-value selection

/// One-way ANOVA F statistic between the two label groups for a single
/// feature column. Conventions: zero between-group variance -> F = 0;
/// zero within-group variance with positive between-group variance -> +inf.
inline double anova_f_value(const Eigen::VectorXd& x,
                            const std::vector<int>& y) {
  require(static_cast<std::size_t>(x.size()) == y.size(),
          "anova_f_value: length mismatch");
  double sum0 = 0, sum1 = 0;
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      sum1 += x(static_cast<Eigen::Index>(i));
      ++n1;
    } else {
      sum0 += x(static_cast<Eigen::Index>(i));
      ++n0;
    }
  }
  require(n0 > 0 && n1 > 0, "anova_f_value: both classes required");
  const double n = static_cast<double>(n0 + n1);
  const double mean0 = sum0 / static_cast<double>(n0);
  const double mean1 = sum1 / static_cast<double>(n1);
  const double grand = (sum0 + sum1) / n;

  double ssb = static_cast<double>(n0) * (mean0 - grand) * (mean0 - grand) +
               static_cast<double>(n1) * (mean1 - grand) * (mean1 - grand);
  double ssw = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double m = (y[i] == 1) ? mean1 : mean0;
    double dlt = x(static_cast<Eigen::Index>(i)) - m;
    ssw += dlt * dlt;
  }
  if (ssb == 0.0) return 0.0;
  if (ssw == 0.0) return std::numeric_limits<double>::infinity();
  const double df_b = 1.0;               // two groups
  const double df_w = n - 2.0;
  require(df_w > 0, "anova_f_value: need at least 3 samples");
  return (ssb / df_b) / (ssw / df_w);
}

/// Feature subset fitted on a training split only. Reapplying it to other
/// data never recomputes statistics, which is the leakage guarantee.
struct SelectionModel {
  std::vector<std::size_t> selected_indices;  // descending F, ties by index
  std::vector<double> f_values;               // per input feature
  std::string fitted_on;                      // training-split fingerprint

  std::size_t d_prime() const { return selected_indices.size(); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    require(out.good(), path.string(), ": cannot open for writing");
    out << "fitted_on=" << fitted_on << "\n";
    out << "selected=";
    for (std::size_t i = 0; i < selected_indices.size(); ++i)
      out << (i ? "," : "") << selected_indices[i];
    out << "\nf_values=";
    for (std::size_t i = 0; i < f_values.size(); ++i)
      out << (i ? "," : "") << format_double(f_values[i]);
    out << "\n";
  }

  static SelectionModel load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), path.string(), ": cannot open");
    SelectionModel m;
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq);
      std::string val = line.substr(eq + 1);
      if (key == "fitted_on") {
        m.fitted_on = trim(val);
      } else if (key == "selected" && !trim(val).empty()) {
        for (const auto& tok : split(val, ',')) {
          long v = 0;
          require(parse_long(tok, v) && v >= 0, path.string(),
                  ": bad index '", tok, "'");
          m.selected_indices.push_back(static_cast<std::size_t>(v));
        }
      } else if (key == "f_values" && !trim(val).empty()) {
        for (const auto& tok : split(val, ',')) {
          double v = 0;
          require(parse_double(tok, v) || trim(tok) == "inf", path.string(),
                  ": bad F value '", tok, "'");
          m.f_values.push_back(trim(tok) == "inf"
                                   ? std::numeric_limits<double>::infinity()
                                   : v);
        }
      }
    }
    return m;
  }
};

/// Ranks features by ANOVA F against the training labels and keeps the top
/// min(k, p). Must be refit inside every fold; never reuse across folds.
inline SelectionModel fit_anova_selector(const TabularDataset& train,
                                         std::size_t k) {
  require(k >= 1, "fit_anova_selector: k must be >= 1");
  require(k <= 500, "fit_anova_selector: k must be <= 500 (model input cap), got ",
          k);
  require(train.has_both_classes(),
          "fit_anova_selector: training labels contain a single class");

  const std::size_t p = train.n_features();
  SelectionModel model;
  model.f_values.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    model.f_values[j] =
        anova_f_value(train.features.col(static_cast<Eigen::Index>(j)),
                      train.labels);

  std::vector<std::size_t> order(p);
  for (std::size_t j = 0; j < p; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (model.f_values[a] != model.f_values[b])
                       return model.f_values[a] > model.f_values[b];
                     return a < b;
                   });
  order.resize(std::min(k, p));
  model.selected_indices = std::move(order);
  model.fitted_on = train.fingerprint();
  return model;
}

/// Applies the stored column subset. No statistic is recomputed from `data`.
inline TabularDataset apply_selector(const SelectionModel& model,
                                     const TabularDataset& data) {
  require(!model.selected_indices.empty(), "apply_selector: empty selector");
  std::size_t max_idx = *std::max_element(model.selected_indices.begin(),
                                          model.selected_indices.end());
  require(max_idx < data.n_features(), "apply_selector: selector index ",
          max_idx, " out of range for ", data.n_features(), " columns");

  TabularDataset out;
  out.features.resize(data.features.rows(),
                      static_cast<Eigen::Index>(model.selected_indices.size()));
  for (std::size_t i = 0; i < model.selected_indices.size(); ++i) {
    Eigen::Index src = static_cast<Eigen::Index>(model.selected_indices[i]);
    out.features.col(static_cast<Eigen::Index>(i)) = data.features.col(src);
    out.feature_names.push_back(
        data.feature_names[model.selected_indices[i]]);
  }
  out.labels = data.labels;
  out.subject_ids = data.subject_ids;
  return out;
}

}  // namespace tfmbench
