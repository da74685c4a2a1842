#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tfmbench/common.hpp"
#include "tfmbench/csv.hpp"

namespace tfmbench {

/// One interaction: per-frame feature rows (T x d) plus subject and label.
struct TemporalSample {
  std::string sample_id;
  std::string subject_id;
  int label = 0;  // binary, {0,1}
  Eigen::MatrixXd frames;
  std::vector<std::string> feature_names;
};

struct ManifestRow {
  std::string sample_id;
  std::filesystem::path frames_path;
  std::string subject_id;
  int label = 0;
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // frames_path entries resolve against this
};

/// Fixed-width table after aggregation. Immutable by convention once built;
/// safe to share across threads.
struct TabularDataset {
  Eigen::MatrixXd features;  // N x p
  std::vector<int> labels;
  std::vector<std::string> subject_ids;
  std::vector<std::string> feature_names;

  std::size_t n_rows() const { return labels.size(); }
  std::size_t n_features() const {
    return static_cast<std::size_t>(features.cols());
  }

  std::size_t n_subjects() const {
    std::set<std::string> distinct(subject_ids.begin(), subject_ids.end());
    return distinct.size();
  }

  bool has_both_classes() const {
    bool c0 = false, c1 = false;
    for (int y : labels) (y == 1 ? c1 : c0) = true;
    return c0 && c1;
  }

  void validate() const {
    require(static_cast<std::size_t>(features.rows()) == labels.size(),
            "dataset: feature rows (", features.rows(), ") != labels (",
            labels.size(), ")");
    require(subject_ids.size() == labels.size(),
            "dataset: subject_ids length mismatch");
    require(feature_names.size() == n_features(),
            "dataset: feature_names length (", feature_names.size(),
            ") != feature count (", n_features(), ")");
    for (std::size_t i = 0; i < labels.size(); ++i)
      require(labels[i] == 0 || labels[i] == 1, "dataset: row ", i,
              " label ", labels[i], " outside {0,1}");
    std::set<std::string> seen;
    for (const auto& n : feature_names)
      require(seen.insert(n).second, "dataset: duplicate feature name '", n,
              "'");
  }

  TabularDataset select_rows(const std::vector<std::size_t>& idx) const {
    TabularDataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()),
                        features.cols());
    out.labels.reserve(idx.size());
    out.subject_ids.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] < n_rows(), "select_rows: index ", idx[i],
              " out of range for N=", n_rows());
      out.features.row(static_cast<Eigen::Index>(i)) =
          features.row(static_cast<Eigen::Index>(idx[i]));
      out.labels.push_back(labels[idx[i]]);
      out.subject_ids.push_back(subject_ids[idx[i]]);
    }
    out.feature_names = feature_names;
    return out;
  }

  std::string fingerprint() const {
    Fnv1a h;
    h.update(fingerprint_matrix(features));
    for (int y : labels) h.update(static_cast<std::uint64_t>(y));
    for (const auto& s : subject_ids) h.update(s);
    return h.hex();
  }
};

// ---------------------------------------------------------------------------
// Manifest ingestion

inline Manifest load_manifest(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  const std::string p = path.string();
  std::size_t c_id = table.column("sample_id", p);
  std::size_t c_path = table.column("frames_path", p);
  std::size_t c_subj = table.column("subject_id", p);
  std::size_t c_label = table.column("label", p);

  Manifest manifest;
  manifest.base_dir = path.parent_path();
  std::set<std::string> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ManifestRow m;
    m.sample_id = row[c_id];
    m.frames_path = row[c_path];
    m.subject_id = row[c_subj];
    require(!m.sample_id.empty(), p, ": row ", r + 1, ": empty sample_id");
    require(!m.subject_id.empty(), p, ": row ", r + 1, " (", m.sample_id,
            "): empty subject_id");
    require(ids.insert(m.sample_id).second, p, ": row ", r + 1,
            ": duplicate sample_id '", m.sample_id, "'");
    long label = 0;
    require(parse_long(row[c_label], label) && (label == 0 || label == 1), p,
            ": row ", r + 1, " (", m.sample_id, "): label '", row[c_label],
            "' outside {0,1}");
    m.label = static_cast<int>(label);

    std::filesystem::path resolved = m.frames_path.is_absolute()
                                         ? m.frames_path
                                         : manifest.base_dir / m.frames_path;
    require(std::filesystem::exists(resolved), p, ": row ", r + 1, " (",
            m.sample_id, "): frames file not found: ", resolved.string());
    manifest.rows.push_back(std::move(m));
  }
  return manifest;
}

/// Loads every frames file in manifest order. All samples must share the
/// same feature dimension d; the first file fixes the expectation.
inline std::vector<TemporalSample> load_temporal_samples(
    const Manifest& manifest) {
  std::vector<TemporalSample> samples;
  samples.reserve(manifest.rows.size());
  Eigen::Index d = -1;
  std::string d_source;

  for (const auto& row : manifest.rows) {
    std::filesystem::path resolved = row.frames_path.is_absolute()
                                         ? row.frames_path
                                         : manifest.base_dir / row.frames_path;
    CsvTable table = read_csv(resolved);
    require(!table.rows.empty(), resolved.string(),
            ": no frame rows (sample ", row.sample_id, ")");

    TemporalSample s;
    s.sample_id = row.sample_id;
    s.subject_id = row.subject_id;
    s.label = row.label;
    s.feature_names = table.header;
    s.frames.resize(static_cast<Eigen::Index>(table.rows.size()),
                    static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        double v = 0;
        require(parse_double(table.rows[r][c], v), resolved.string(),
                ": frame row ", r + 1, ", column '", table.header[c],
                "': non-numeric cell '", table.rows[r][c], "'");
        s.frames(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            v;
      }
    }

    if (d < 0) {
      d = s.frames.cols();
      d_source = resolved.string();
    } else {
      require(s.frames.cols() == d, resolved.string(), " has ",
              s.frames.cols(), " feature columns but ", d_source, " has ", d);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Synthetic fixture

/// Deterministic desk-scale dataset generator. Labels alternate per subject
/// (class-balanced within rounding). `separability` scales a fixed
/// class-conditional mean shift; at 1.0 the aggregated features are linearly
/// separable by a wide margin.
inline std::vector<TemporalSample> synth_dataset(std::size_t n_subjects,
                                                 std::size_t samples_per_subject,
                                                 std::size_t d,
                                                 double separability,
                                                 std::uint64_t seed,
                                                 std::size_t frames_per_sample =
                                                     16) {
  require(n_subjects >= 1 && samples_per_subject >= 1 && d >= 1,
          "synth_dataset: all counts must be >= 1");
  require(separability >= 0.0 && separability <= 1.0,
          "synth_dataset: separability must be in [0,1], got ", separability);
  require(frames_per_sample >= 2,
          "synth_dataset: need at least 2 frames per sample");

  Rng rng = make_rng(seed);
  std::normal_distribution<double> noise(0.0, 0.25);
  std::normal_distribution<double> subject_effect(0.0, 0.2);

  // Fixed shift direction: alternating signs so no single feature carries
  // the whole signal.
  Eigen::VectorXd direction(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j)
    direction(static_cast<Eigen::Index>(j)) = (j % 2 == 0) ? 1.0 : -1.0;

  std::vector<TemporalSample> samples;
  samples.reserve(n_subjects * samples_per_subject);
  int label_cursor = 0;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    char subj[32];
    std::snprintf(subj, sizeof(subj), "S%03u", static_cast<unsigned>(s));
    Eigen::VectorXd offset(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j)
      offset(static_cast<Eigen::Index>(j)) = subject_effect(rng);

    for (std::size_t k = 0; k < samples_per_subject; ++k) {
      TemporalSample sample;
      sample.subject_id = subj;
      sample.sample_id = std::string(subj) + "_" + std::to_string(k);
      sample.label = label_cursor++ % 2;
      double shift = (sample.label == 1 ? 1.0 : -1.0) * separability;
      sample.frames.resize(static_cast<Eigen::Index>(frames_per_sample),
                           static_cast<Eigen::Index>(d));
      for (std::size_t t = 0; t < frames_per_sample; ++t)
        for (std::size_t j = 0; j < d; ++j)
          sample.frames(static_cast<Eigen::Index>(t),
                        static_cast<Eigen::Index>(j)) =
              shift * direction(static_cast<Eigen::Index>(j)) +
              offset(static_cast<Eigen::Index>(j)) + noise(rng);
      sample.feature_names.reserve(d);
      for (std::size_t j = 0; j < d; ++j)
        sample.feature_names.push_back("f" + std::to_string(j));
      samples.push_back(std::move(sample));
    }
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Dataset cache: <base>.features.csv + <base>.meta.json
//
// The CSV holds the feature matrix (header = feature names, one row per
// sample, %.17g so doubles round-trip exactly). The sidecar carries labels,
// subject ids and the feature-name list.

inline void save_dataset_cache(const TabularDataset& ds,
                               const std::filesystem::path& base) {
  ds.validate();
  std::vector<std::vector<std::string>> rows(ds.n_rows());
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    rows[i].reserve(ds.n_features());
    for (std::size_t j = 0; j < ds.n_features(); ++j)
      rows[i].push_back(format_double(
          ds.features(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(j))));
  }
  std::filesystem::path csv_path = base;
  csv_path += ".features.csv";
  write_csv(csv_path, ds.feature_names, rows);

  nlohmann::json meta;
  meta["labels"] = ds.labels;
  meta["subject_ids"] = ds.subject_ids;
  meta["feature_names"] = ds.feature_names;
  std::filesystem::path meta_path = base;
  meta_path += ".meta.json";
  std::ofstream out(meta_path);
  require(out.good(), meta_path.string(), ": cannot open for writing");
  out << meta.dump(2) << "\n";
}

inline TabularDataset load_dataset_cache(const std::filesystem::path& base) {
  std::filesystem::path csv_path = base;
  csv_path += ".features.csv";
  std::filesystem::path meta_path = base;
  meta_path += ".meta.json";

  std::ifstream in(meta_path);
  require(in.good(), meta_path.string(), ": cannot open");
  nlohmann::json meta = nlohmann::json::parse(in);

  TabularDataset ds;
  ds.labels = meta.at("labels").get<std::vector<int>>();
  ds.subject_ids = meta.at("subject_ids").get<std::vector<std::string>>();
  ds.feature_names = meta.at("feature_names").get<std::vector<std::string>>();

  CsvTable table = read_csv(csv_path);
  require(table.header == ds.feature_names, csv_path.string(),
          ": feature header does not match sidecar metadata");
  ds.features.resize(static_cast<Eigen::Index>(table.rows.size()),
                     static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      double v = 0;
      require(parse_double(table.rows[r][c], v), csv_path.string(), ": row ",
              r + 1, ", column ", c, ": non-numeric cell");
      ds.features(static_cast<Eigen::Index>(r),
                  static_cast<Eigen::Index>(c)) = v;
    }
  ds.validate();
  return ds;
}

}  // namespace tfmbench
