#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tfmbench/common.hpp"
#include "tfmbench/dataset.hpp"
#include "tfmbench/protocol.hpp"

namespace tfmbench {

using Hyperparameters = nlohmann::json;

enum class ClassifierKind { kClassical, kTfmIcl, kTfmFinetuned };

inline const char* classifier_kind_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::kClassical: return "classical";
    case ClassifierKind::kTfmIcl: return "tfm_icl";
    case ClassifierKind::kTfmFinetuned: return "tfm_finetuned";
  }
  return "?";
}

/// Uniform model surface. predict_proba returns p(y=1) per query row; the
/// complementary class probability is 1 - p, so the pair always sums to 1.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual const std::string& name() const = 0;
  virtual ClassifierKind kind() const = 0;
  virtual std::string backend_version() const { return kVersion; }
  virtual Hyperparameters hyperparameters() const = 0;

  virtual void fit(const TabularDataset& train) = 0;
  virtual Eigen::VectorXd predict_proba(const Eigen::MatrixXd& query) const = 0;

  std::vector<int> predict(const Eigen::MatrixXd& query,
                           double threshold = 0.5) const {
    Eigen::VectorXd p = predict_proba(query);
    std::vector<int> labels(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i)
      labels[static_cast<std::size_t>(i)] = hard_label(p(i), threshold);
    return labels;
  }

 protected:
  void check_fit_preconditions(const TabularDataset& train) const {
    train.validate();
    require(train.has_both_classes(), name(),
            ": training labels contain a single class");
  }
  void check_query_width(Eigen::Index got, Eigen::Index want) const {
    require(got == want, name(), ": query has ", got,
            " columns, model was fitted on ", want);
  }
};

// ---------------------------------------------------------------------------
// In-context learning context

/// The training examples handed to a TFM at inference time. `proportion`
/// records how much of the available split was kept.
struct IclContext {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  double proportion = 1.0;
};

/// Class-stratified, seeded subsample of the training split. proportion = 1
/// returns the split unchanged; per-class counts are rounded, so the class
/// ratio is preserved within one sample.
inline IclContext subsample_context(const TabularDataset& train,
                                    double proportion, std::uint64_t seed) {
  require(proportion > 0.0 && proportion <= 1.0,
          "subsample_context: proportion must be in (0,1], got ", proportion);
  require(train.has_both_classes(),
          "subsample_context: training split has a single class");

  IclContext ctx;
  ctx.proportion = proportion;
  if (proportion == 1.0) {
    ctx.features = train.features;
    ctx.labels = train.labels;
    return ctx;
  }

  std::vector<std::size_t> keep;
  Rng rng = make_rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < train.labels.size(); ++i)
      if (train.labels[i] == cls) members.push_back(i);
    auto n_keep = static_cast<std::size_t>(
        std::llround(proportion * static_cast<double>(members.size())));
    require(n_keep >= 1, "subsample_context: proportion ", proportion,
            " would drop class ", cls, " from the context");
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(n_keep);
    keep.insert(keep.end(), members.begin(), members.end());
  }
  std::sort(keep.begin(), keep.end());

  ctx.features.resize(static_cast<Eigen::Index>(keep.size()),
                      train.features.cols());
  ctx.labels.reserve(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    ctx.features.row(static_cast<Eigen::Index>(i)) =
        train.features.row(static_cast<Eigen::Index>(keep[i]));
    ctx.labels.push_back(train.labels[keep[i]]);
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Backend registry

using BackendFactory =
    std::function<std::unique_ptr<Classifier>(const Hyperparameters&)>;

class BackendRegistry {
 public:
  static BackendRegistry& instance() {
    static BackendRegistry registry;
    return registry;
  }

  void register_backend(const std::string& name, BackendFactory factory) {
    require(!factories_.count(name), "backend '", name,
            "' is already registered");
    factories_[name] = std::move(factory);
  }

  bool has(const std::string& name) const { return factories_.count(name); }

  std::unique_ptr<Classifier> make(const std::string& name,
                                   const Hyperparameters& hyper) const {
    auto it = factories_.find(name);
    if (it == factories_.end()) {
      std::string known;
      for (const auto& [n, _] : factories_) known += (known.empty() ? "" : ", ") + n;
      fail("unknown backend '", name, "' (registered: ", known, ")");
    }
    return it->second(hyper.is_null() ? Hyperparameters::object() : hyper);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, _] : factories_) out.push_back(n);
    return out;
  }

 private:
  std::map<std::string, BackendFactory> factories_;
};

inline void register_backend(const std::string& name, BackendFactory factory) {
  BackendRegistry::instance().register_backend(name, std::move(factory));
}

inline std::unique_ptr<Classifier> make_classifier(
    const std::string& name,
    const Hyperparameters& hyper = Hyperparameters::object()) {
  return BackendRegistry::instance().make(name, hyper);
}

}  // namespace tfmbench
