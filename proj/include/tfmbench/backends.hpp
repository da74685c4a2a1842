#pragma once

#include <memory>

#include "tfmbench/classifier.hpp"
#include "tfmbench/finetune.hpp"
#include "tfmbench/mock_tfm.hpp"
#include "tfmbench/svm.hpp"
#include "tfmbench/tfm_bridge.hpp"
#include "tfmbench/trees.hpp"

namespace tfmbench {

/// Registers the production backend set (idempotent). The classical trio
/// and the mock TFM run in-process; the tabpfn_*/tabicl_* entries talk to
/// the external inference helper and need a populated checkpoint cache.
inline void ensure_builtin_backends() {
  static const bool once = [] {
    register_backend("gradient_boosted_trees", [](const Hyperparameters& h) {
      return std::make_unique<GradientBoostedTreesClassifier>(h);
    });
    register_backend("random_forest", [](const Hyperparameters& h) {
      return std::make_unique<RandomForestClassifier>(h);
    });
    register_backend("svm", [](const Hyperparameters& h) {
      return std::make_unique<SvmClassifier>(h);
    });
    register_backend("mock_tfm_icl", [](const Hyperparameters& h) {
      return std::make_unique<MockTfmIclClassifier>(h);
    });
    register_backend("mock_tfm_finetune", [](const Hyperparameters& h) {
      return std::make_unique<MockTfmFinetuneClassifier>(h);
    });
    register_backend("tabpfn_icl", [](const Hyperparameters& h) {
      return std::make_unique<BridgeTfmClassifier>(
          "tabpfn_icl", ClassifierKind::kTfmIcl, "tabpfn", "icl", h);
    });
    register_backend("tabicl_icl", [](const Hyperparameters& h) {
      return std::make_unique<BridgeTfmClassifier>(
          "tabicl_icl", ClassifierKind::kTfmIcl, "tabicl", "icl", h);
    });
    register_backend("tabpfn_finetune", [](const Hyperparameters& h) {
      return std::make_unique<BridgeTfmClassifier>(
          "tabpfn_finetune", ClassifierKind::kTfmFinetuned, "tabpfn",
          "finetune", h);
    });
    return true;
  }();
  (void)once;
}

}  // namespace tfmbench
