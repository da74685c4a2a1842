#include "tfmbench/dataset.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "tfmbench/featurize.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace tfmbench;

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST(Manifest, LoadsValidRowsInOrder) {
  TempDir dir;
  write_file(dir.file("a.csv"), "f0,f1\n1,2\n3,4\n");
  write_file(dir.file("manifest.csv"),
             "sample_id,frames_path,subject_id,label\n"
             "v1,a.csv,subj1,0\n"
             "v2,a.csv,subj1,1\n"
             "v3,a.csv,subj2,0\n");
  Manifest m = load_manifest(dir.file("manifest.csv"));
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.rows[0].sample_id, "v1");
  EXPECT_EQ(m.rows[1].sample_id, "v2");
  EXPECT_EQ(m.rows[2].sample_id, "v3");
  EXPECT_EQ(m.rows[2].subject_id, "subj2");
}

TEST(Manifest, RejectsLabelOutsideBinary) {
  TempDir dir;
  write_file(dir.file("a.csv"), "f0\n1\n");
  write_file(dir.file("manifest.csv"),
             "sample_id,frames_path,subject_id,label\n"
             "v1,a.csv,subj1,0\n"
             "v2,a.csv,subj1,2\n");
  try {
    load_manifest(dir.file("manifest.csv"));
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("v2"), std::string::npos);
  }
}

TEST(Manifest, RejectsDuplicateSampleIdAndMissingColumn) {
  TempDir dir;
  write_file(dir.file("a.csv"), "f0\n1\n");
  write_file(dir.file("dup.csv"),
             "sample_id,frames_path,subject_id,label\n"
             "v1,a.csv,subj1,0\n"
             "v1,a.csv,subj1,1\n");
  EXPECT_THROW(load_manifest(dir.file("dup.csv")), Error);

  write_file(dir.file("missing.csv"), "sample_id,frames_path,label\nv1,a.csv,0\n");
  EXPECT_THROW(load_manifest(dir.file("missing.csv")), Error);

  write_file(dir.file("nofile.csv"),
             "sample_id,frames_path,subject_id,label\nv1,gone.csv,subj1,0\n");
  EXPECT_THROW(load_manifest(dir.file("nofile.csv")), Error);
}

TEST(Manifest, SubjectCountComesFromData) {
  // 122 samples spread over 42 subjects; the loader must not assume either.
  TempDir dir;
  write_file(dir.file("a.csv"), "f0,f1\n0.5,1\n");
  std::ostringstream manifest;
  manifest << "sample_id,frames_path,subject_id,label\n";
  for (int i = 0; i < 122; ++i)
    manifest << "v" << i << ",a.csv,subj" << (i % 42) << "," << (i % 2) << "\n";
  write_file(dir.file("manifest.csv"), manifest.str());

  Manifest m = load_manifest(dir.file("manifest.csv"));
  ASSERT_EQ(m.rows.size(), 122u);
  std::set<std::string> subjects;
  for (const auto& r : m.rows) subjects.insert(r.subject_id);
  EXPECT_EQ(subjects.size(), 42u);
}

TEST(TemporalSamples, LoadsFramesWithSharedDimension) {
  TempDir dir;
  std::ostringstream frames;
  for (int c = 0; c < 709; ++c) frames << (c ? "," : "") << "c" << c;
  frames << "\n";
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 709; ++c) frames << (c ? "," : "") << (r + c * 0.5);
    frames << "\n";
  }
  write_file(dir.file("wide.csv"), frames.str());
  write_file(dir.file("manifest.csv"),
             "sample_id,frames_path,subject_id,label\nv1,wide.csv,subj1,1\n");

  auto samples = load_temporal_samples(load_manifest(dir.file("manifest.csv")));
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].frames.rows(), 10);
  EXPECT_EQ(samples[0].frames.cols(), 709);
  EXPECT_EQ(samples[0].label, 1);
}

TEST(TemporalSamples, RejectsEmptyFramesFile) {
  TempDir dir;
  write_file(dir.file("empty.csv"), "f0,f1\n");
  write_file(dir.file("manifest.csv"),
             "sample_id,frames_path,subject_id,label\nv1,empty.csv,subj1,0\n");
  EXPECT_THROW(load_temporal_samples(load_manifest(dir.file("manifest.csv"))),
               Error);
}

TEST(TemporalSamples, InconsistentDimensionNamesBothFiles) {
  TempDir dir;
  write_file(dir.file("five.csv"), "a,b,c,d,e\n1,2,3,4,5\n");
  write_file(dir.file("six.csv"), "a,b,c,d,e,f\n1,2,3,4,5,6\n");
  write_file(dir.file("manifest.csv"),
             "sample_id,frames_path,subject_id,label\n"
             "v1,five.csv,subj1,0\n"
             "v2,six.csv,subj2,1\n");
  try {
    load_temporal_samples(load_manifest(dir.file("manifest.csv")));
    FAIL() << "expected error";
  } catch (const Error& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("five.csv"), std::string::npos) << msg;
    EXPECT_NE(msg.find("six.csv"), std::string::npos) << msg;
  }
}

TEST(TemporalSamples, RejectsNonNumericCell) {
  TempDir dir;
  write_file(dir.file("bad.csv"), "f0,f1\n1,oops\n");
  write_file(dir.file("manifest.csv"),
             "sample_id,frames_path,subject_id,label\nv1,bad.csv,subj1,0\n");
  try {
    load_temporal_samples(load_manifest(dir.file("manifest.csv")));
    FAIL() << "expected error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("oops"), std::string::npos);
  }
}

TEST(SynthDataset, CountsAndBalance) {
  auto samples = synth_dataset(4, 3, 5, 1.0, 7);
  ASSERT_EQ(samples.size(), 12u);
  std::set<std::string> subjects;
  int positives = 0;
  for (const auto& s : samples) {
    subjects.insert(s.subject_id);
    positives += s.label;
    EXPECT_EQ(s.frames.cols(), 5);
  }
  EXPECT_EQ(subjects.size(), 4u);
  EXPECT_EQ(positives, 6);  // balanced within rounding
}

TEST(SynthDataset, DeterministicForFixedSeed) {
  auto a = synth_dataset(3, 4, 6, 0.7, 123);
  auto b = synth_dataset(3, 4, 6, 0.7, 123);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sample_id, b[i].sample_id);
    EXPECT_EQ(a[i].label, b[i].label);
    // byte-identical frame matrices
    ASSERT_EQ(a[i].frames.rows(), b[i].frames.rows());
    EXPECT_EQ(std::memcmp(a[i].frames.data(), b[i].frames.data(),
                          sizeof(double) *
                              static_cast<std::size_t>(a[i].frames.size())),
              0);
  }
  auto c = synth_dataset(3, 4, 6, 0.7, 124);
  EXPECT_NE(fingerprint_matrix(a[0].frames), fingerprint_matrix(c[0].frames));
}

TEST(SynthDataset, SeparableAtFullSeparability) {
  auto samples = synth_dataset(8, 4, 6, 1.0, 11);
  TabularDataset ds = aggregate_dataset(samples, AttributeSet::all());

  // Hold out the last two subjects entirely.
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < ds.n_rows(); ++i)
    (ds.subject_ids[i] == "S006" || ds.subject_ids[i] == "S007" ? test_idx
                                                                : train_idx)
        .push_back(i);
  TabularDataset train = ds.select_rows(train_idx);
  TabularDataset test = ds.select_rows(test_idx);

  oracles::LinearSeparator oracle;
  oracle.fit(train.features, train.labels);
  EXPECT_GE(oracle.accuracy(test.features, test.labels), 0.95);
}

TEST(DatasetCache, RoundTripsExactly) {
  auto samples = synth_dataset(3, 2, 4, 0.5, 42);
  TabularDataset ds = aggregate_dataset(samples, AttributeSet::all());
  TempDir dir;
  save_dataset_cache(ds, dir.file("cache"));
  TabularDataset back = load_dataset_cache(dir.file("cache"));

  ASSERT_EQ(back.n_rows(), ds.n_rows());
  ASSERT_EQ(back.n_features(), ds.n_features());
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.subject_ids, ds.subject_ids);
  EXPECT_EQ(back.feature_names, ds.feature_names);
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j)
      EXPECT_EQ(back.features(i, j), ds.features(i, j));
}

TEST(DatasetCache, DistinctSubjectCountMatchesBruteForce) {
  Rng rng = make_rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> n_subj(2, 9), per(1, 4);
    auto samples = synth_dataset(n_subj(rng), per(rng), 3, 0.5,
                                 1000 + static_cast<std::uint64_t>(trial));
    TabularDataset ds = aggregate_dataset(samples, AttributeSet::all());
    std::set<std::string> brute;
    for (const auto& s : ds.subject_ids) brute.insert(s);
    EXPECT_EQ(ds.n_subjects(), brute.size());
  }
}

TEST(DatasetCache, IngestionPreservesManifestOrder) {
  TempDir dir;
  write_file(dir.file("a.csv"), "f0\n1\n2\n");
  std::ostringstream manifest;
  manifest << "sample_id,frames_path,subject_id,label\n";
  for (int i = 9; i >= 0; --i)
    manifest << "sample" << i << ",a.csv,subj" << i << "," << (i % 2) << "\n";
  write_file(dir.file("manifest.csv"), manifest.str());
  auto samples = load_temporal_samples(load_manifest(dir.file("manifest.csv")));
  ASSERT_EQ(samples.size(), 10u);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(samples[static_cast<std::size_t>(i)].sample_id,
              "sample" + std::to_string(9 - i));
}
