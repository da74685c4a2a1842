#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tfmbench/backends.hpp"
#include "tfmbench/common.hpp"
#include "tfmbench/featurize.hpp"

namespace tfmbench {

/// One experiment = one JSON config file. The runner stores the fully
/// resolved object with every run record, so any result can be replayed.
///
/// Shape:
///   {
///     "dataset":  {"manifest": p} | {"cache": p} | {"synthetic": {...}},
///     "attributes": ["mean","median","std","autocorr"],
///     "k_features": 500,
///     "protocol": {"name":"stratified_kfold_repeated","k":5,"repeats":10,
///                  "seed":42}  or  {"name":"loso"},
///     "backend":  {"name":"random_forest","hyperparameters":{...}},
///     "icl":      {"context_proportion":1.0,"seed":0},        // optional
///     "finetune": {...FinetuneConfig fields...},              // optional
///     "output_dir": "runs/exp", "workers": 1, "threshold": 0.5
///   }
struct ExperimentConfig {
  nlohmann::json j;

  static ExperimentConfig from_json(nlohmann::json in) {
    ExperimentConfig c;
    c.j = std::move(in);
    return c;
  }

  static ExperimentConfig load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), path.string(), ": cannot open config file");
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      fail(path.string(), ": invalid JSON: ", e.what());
    }
    return from_json(std::move(parsed));
  }

  // -- accessors --------------------------------------------------------

  std::string backend_name() const {
    return j.at("backend").at("name").get<std::string>();
  }
  Hyperparameters backend_hyper() const {
    if (!j.contains("backend")) return Hyperparameters::object();
    return j["backend"].value("hyperparameters", Hyperparameters::object());
  }
  std::string protocol_name() const {
    return j.at("protocol").at("name").get<std::string>();
  }
  std::size_t kfold_k() const {
    return j.at("protocol").value("k", 5);
  }
  std::size_t kfold_repeats() const {
    return j.at("protocol").value("repeats", 10);
  }
  std::uint64_t protocol_seed() const {
    return j.at("protocol").value("seed", 42);
  }
  std::size_t k_features() const {
    return j.value("k_features", 500);
  }
  AttributeSet attributes() const {
    if (!j.contains("attributes")) return AttributeSet::all();
    return AttributeSet::from_names(
        j["attributes"].get<std::vector<std::string>>());
  }
  double context_proportion() const {
    if (!j.contains("icl")) return 1.0;
    return j["icl"].value("context_proportion", 1.0);
  }
  std::uint64_t icl_seed() const {
    if (!j.contains("icl")) return 0;
    return j["icl"].value("seed", 0);
  }
  std::filesystem::path output_dir() const {
    return j.value("output_dir", "runs");
  }
  std::size_t workers() const { return j.value("workers", 1); }
  double threshold() const { return j.value("threshold", 0.5); }

  // -- validation -------------------------------------------------------

  void validate() const {
    ensure_builtin_backends();
    require(j.is_object(), "config: top level must be a JSON object");
    require(j.contains("dataset"), "config: missing \"dataset\"");
    const auto& d = j["dataset"];
    int sources = static_cast<int>(d.contains("manifest")) +
                  static_cast<int>(d.contains("cache")) +
                  static_cast<int>(d.contains("synthetic"));
    require(sources == 1,
            "config: dataset needs exactly one of manifest/cache/synthetic");
    if (d.contains("manifest"))
      require(std::filesystem::exists(d["manifest"].get<std::string>()),
              "config: manifest not found: ", d["manifest"].get<std::string>());
    if (d.contains("cache")) {
      std::string base = d["cache"].get<std::string>();
      require(std::filesystem::exists(base + ".features.csv"),
              "config: dataset cache not found: ", base, ".features.csv");
    }

    require(k_features() >= 1 && k_features() <= 500,
            "config: k_features must be in [1,500], got ", k_features());
    attributes().validate();

    require(j.contains("protocol"), "config: missing \"protocol\"");
    std::string proto = protocol_name();
    require(proto == "stratified_kfold_repeated" || proto == "loso",
            "config: unknown protocol '", proto, "'");
    if (proto == "stratified_kfold_repeated") {
      require(kfold_k() >= 2, "config: protocol.k must be >= 2");
      require(kfold_repeats() >= 1, "config: protocol.repeats must be >= 1");
    }

    require(j.contains("backend") && j["backend"].contains("name"),
            "config: missing backend.name");
    require(BackendRegistry::instance().has(backend_name()),
            "config: unknown backend '", backend_name(), "'");

    double prop = context_proportion();
    require(prop > 0 && prop <= 1,
            "config: icl.context_proportion must be in (0,1], got ", prop);
    require(workers() >= 1, "config: workers must be >= 1");
    require(threshold() > 0 && threshold() < 1,
            "config: threshold must be in (0,1)");
    if (j.contains("finetune"))
      FinetuneConfig::from_json(j["finetune"]).validate();
  }

  std::string hash() const {
    Fnv1a h;
    h.update(j.dump());
    return h.hex();
  }
};

/// Ingestion pipeline behind a config: manifest/synthetic sources run the
/// full temporal path (zero-frame filter, aggregation), a cache source is
/// assumed pre-aggregated. Constant columns are dropped in all cases.
inline TabularDataset load_experiment_dataset(const ExperimentConfig& config) {
  const auto& d = config.j.at("dataset");
  TabularDataset ds;
  if (d.contains("manifest")) {
    Manifest manifest = load_manifest(d["manifest"].get<std::string>());
    ds = aggregate_dataset(load_temporal_samples(manifest),
                           config.attributes());
  } else if (d.contains("synthetic")) {
    const auto& s = d["synthetic"];
    auto samples = synth_dataset(
        s.value("n_subjects", 8), s.value("samples_per_subject", 4),
        s.value("d", 6), s.value("separability", 1.0), s.value("seed", 7));
    ds = aggregate_dataset(samples, config.attributes());
  } else {
    ds = load_dataset_cache(d.at("cache").get<std::string>());
  }
  return drop_constant_features(ds);
}

}  // namespace tfmbench
