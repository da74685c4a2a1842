#include "tfmbench/backends.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "tfmbench/featurize.hpp"
#include "support/oracles.hpp"

using namespace tfmbench;

namespace {

TabularDataset separable_dataset(std::uint64_t seed = 11) {
  auto samples = synth_dataset(8, 4, 6, 1.0, seed);
  return aggregate_dataset(samples, AttributeSet::all());
}

TabularDataset noise_dataset(std::uint64_t seed) {
  auto samples = synth_dataset(6, 4, 4, 0.0, seed);
  return aggregate_dataset(samples, AttributeSet::all());
}

}  // namespace

TEST(Registry, ProductionBackendSetIsRegistered) {
  ensure_builtin_backends();
  const auto names = BackendRegistry::instance().names();
  std::set<std::string> set(names.begin(), names.end());
  for (const char* expected :
       {"gradient_boosted_trees", "random_forest", "svm", "tabicl_icl",
        "tabpfn_icl", "tabpfn_finetune"})
    EXPECT_TRUE(set.count(expected)) << "missing backend " << expected;
}

TEST(Registry, DuplicateRegistrationFails) {
  ensure_builtin_backends();
  EXPECT_THROW(register_backend("random_forest",
                                [](const Hyperparameters&) {
                                  return std::unique_ptr<Classifier>();
                                }),
               Error);
}

TEST(Registry, UnknownBackendListsRegisteredNames) {
  ensure_builtin_backends();
  try {
    make_classifier("no_such_backend");
    FAIL() << "expected error";
  } catch (const Error& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("no_such_backend"), std::string::npos);
    EXPECT_NE(msg.find("random_forest"), std::string::npos);
  }
}

TEST(Registry, ConstructedBackendIsUsable) {
  ensure_builtin_backends();
  auto clf = make_classifier("random_forest", {{"n_estimators", 20}});
  TabularDataset ds = separable_dataset();
  clf->fit(ds);
  Eigen::VectorXd p = clf->predict_proba(ds.features);
  EXPECT_EQ(p.size(), ds.features.rows());
}

TEST(SubsampleContext, FullProportionIsIdentity) {
  TabularDataset ds = separable_dataset();
  IclContext ctx = subsample_context(ds, 1.0, 3);
  EXPECT_EQ(ctx.features.rows(), ds.features.rows());
  EXPECT_EQ(ctx.labels, ds.labels);
}

TEST(SubsampleContext, HalvesWithPreservedClassRatio) {
  auto samples = synth_dataset(25, 4, 3, 0.5, 9);  // 100 rows, 50/50
  TabularDataset ds = aggregate_dataset(samples, AttributeSet::all());
  IclContext ctx = subsample_context(ds, 0.5, 4);
  EXPECT_EQ(ctx.labels.size(), 50u);
  int ones = 0;
  for (int y : ctx.labels) ones += y;
  EXPECT_NEAR(ones, 25, 1);
}

TEST(SubsampleContext, LosingAClassIsError) {
  TabularDataset ds;
  ds.features = Eigen::MatrixXd::Random(11, 2);
  ds.labels = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (int i = 0; i < 11; ++i) ds.subject_ids.push_back("s");
  ds.feature_names = {"a", "b"};
  EXPECT_THROW(subsample_context(ds, 0.1, 0), Error);
}

TEST(SubsampleContext, DeterministicForFixedSeed) {
  TabularDataset ds = separable_dataset();
  IclContext a = subsample_context(ds, 0.8, 21);
  IclContext b = subsample_context(ds, 0.8, 21);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(fingerprint_matrix(a.features), fingerprint_matrix(b.features));
}

TEST(ClassicalBackends, ReachHighTrainAccuracyOnSeparableData) {
  ensure_builtin_backends();
  TabularDataset ds = separable_dataset();

  // The linear-separator oracle certifies the data really is separable.
  oracles::LinearSeparator oracle;
  oracle.fit(ds.features, ds.labels);
  ASSERT_GE(oracle.accuracy(ds.features, ds.labels), 0.95);

  for (const char* backend :
       {"gradient_boosted_trees", "random_forest", "svm"}) {
    auto clf = make_classifier(backend);
    clf->fit(ds);
    Eigen::VectorXd p = clf->predict_proba(ds.features);
    int hits = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (hard_label(p(i)) == ds.labels[static_cast<std::size_t>(i)]) ++hits;
    EXPECT_GE(static_cast<double>(hits) / static_cast<double>(p.size()), 0.95)
        << backend;
  }
}

TEST(ClassicalBackends, LearnNonlinearXorStructure) {
  // XOR over the first two features: unreachable for a linear model, easy
  // for trees and an RBF kernel.
  Rng rng = make_rng(41);
  std::uniform_real_distribution<double> u(-1, 1);
  TabularDataset ds;
  const int n = 80;
  ds.features.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    double a = u(rng), b = u(rng);
    ds.features(i, 0) = a;
    ds.features(i, 1) = b;
    ds.features(i, 2) = u(rng);  // distractor
    ds.labels.push_back((a > 0) != (b > 0) ? 1 : 0);
    ds.subject_ids.push_back("s" + std::to_string(i % 8));
  }
  ds.feature_names = {"a", "b", "noise"};

  oracles::LinearSeparator linear;
  linear.fit(ds.features, ds.labels);
  EXPECT_LT(linear.accuracy(ds.features, ds.labels), 0.8);  // genuinely XOR

  ensure_builtin_backends();
  for (const char* backend :
       {"gradient_boosted_trees", "random_forest", "svm"}) {
    auto clf = make_classifier(backend, {{"seed", 4}});
    clf->fit(ds);
    auto pred = clf->predict(ds.features);
    int hits = 0;
    for (int i = 0; i < n; ++i)
      if (pred[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(i)])
        ++hits;
    EXPECT_GE(hits / static_cast<double>(n), 0.9) << backend;
  }
}

TEST(ClassicalBackends, SvmProbabilitiesAreCalibratedScores) {
  // Platt-calibrated outputs must rank held-out positives above negatives.
  auto train_samples = synth_dataset(10, 4, 5, 1.0, 61);
  auto test_samples = synth_dataset(5, 4, 5, 1.0, 62);
  TabularDataset train = aggregate_dataset(train_samples, AttributeSet::all());
  TabularDataset test = aggregate_dataset(test_samples, AttributeSet::all());

  SvmClassifier svm(Hyperparameters{{"C", 1.0}, {"seed", 3}});
  svm.fit(train);
  Eigen::VectorXd p = svm.predict_proba(test.features);
  MetricValues m = compute_metrics(p, test.labels);
  ASSERT_TRUE(m.auc.has_value());
  EXPECT_GE(*m.auc, 0.9);
  EXPECT_GT(svm.effective_gamma(), 0.0);  // "scale" resolved from data
}

TEST(ClassicalBackends, RefitIsDeterministic) {
  ensure_builtin_backends();
  TabularDataset ds = noise_dataset(17);
  for (const char* backend :
       {"gradient_boosted_trees", "random_forest", "svm"}) {
    auto a = make_classifier(backend, {{"seed", 5}});
    auto b = make_classifier(backend, {{"seed", 5}});
    a->fit(ds);
    b->fit(ds);
    Eigen::VectorXd pa = a->predict_proba(ds.features);
    Eigen::VectorXd pb = b->predict_proba(ds.features);
    for (Eigen::Index i = 0; i < pa.size(); ++i)
      EXPECT_EQ(pa(i), pb(i)) << backend;
  }
}

TEST(ClassicalBackends, SingleClassTrainingIsError) {
  ensure_builtin_backends();
  TabularDataset ds = separable_dataset();
  for (auto& y : ds.labels) y = 1;
  for (const char* backend :
       {"gradient_boosted_trees", "random_forest", "svm", "mock_tfm_icl"}) {
    auto clf = make_classifier(backend);
    EXPECT_THROW(clf->fit(ds), Error) << backend;
  }
}

TEST(ClassicalBackends, QueryWidthMismatchIsError) {
  ensure_builtin_backends();
  TabularDataset ds = separable_dataset();
  auto clf = make_classifier("random_forest", {{"n_estimators", 5}});
  clf->fit(ds);
  Eigen::MatrixXd narrow = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_THROW(clf->predict_proba(narrow), Error);
}

TEST(ClassicalBackends, ProbabilitiesStayValidOnArbitraryInputs) {
  ensure_builtin_backends();
  TabularDataset ds = noise_dataset(23);
  Rng rng = make_rng(55);
  std::uniform_real_distribution<double> wild(-100, 100);
  for (const char* backend :
       {"gradient_boosted_trees", "random_forest", "svm", "mock_tfm_icl"}) {
    auto clf = make_classifier(backend);
    clf->fit(ds);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::MatrixXd query(7, ds.features.cols());
      for (Eigen::Index i = 0; i < query.rows(); ++i)
        for (Eigen::Index j = 0; j < query.cols(); ++j) query(i, j) = wild(rng);
      Eigen::VectorXd p = clf->predict_proba(query);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        EXPECT_GE(p(i), 0.0) << backend;
        EXPECT_LE(p(i), 1.0) << backend;
        // the implied two-class distribution sums to one by construction
        EXPECT_NEAR(p(i) + (1.0 - p(i)), 1.0, 1e-9);
      }
    }
  }
}

TEST(MockTfmIcl, FitStoresContextWithoutParameterUpdates) {
  MockTfmIclClassifier clf(Hyperparameters{{"seed", 7}});
  TabularDataset ds = separable_dataset();
  std::uint64_t before = clf.parameter_checksum();
  clf.fit(ds);
  EXPECT_EQ(clf.parameter_checksum(), before);
  Eigen::VectorXd p = clf.predict_proba(ds.features);
  EXPECT_EQ(p.size(), ds.features.rows());
  clf.fit(ds);  // refitting still never touches parameters
  EXPECT_EQ(clf.parameter_checksum(), before);
}

TEST(MockTfmIcl, ArgmaxMatchesHalfThreshold) {
  MockTfmIclClassifier clf(Hyperparameters{{"seed", 3}});
  TabularDataset ds = separable_dataset();
  clf.fit(ds);
  Eigen::VectorXd p = clf.predict_proba(ds.features);
  auto labels = clf.predict(ds.features);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p(i) != 0.5) {
      EXPECT_EQ(labels[static_cast<std::size_t>(i)], p(i) > 0.5 ? 1 : 0);
    }
}

TEST(MockTfm, GroupSizesMirrorPublishedEncoderCounts) {
  MockTfmConfig config;
  config.x_width = 384;  // 2*384 = 768 x-encoder parameters
  config.y_width = 288;  // 2*288 = 576 y-encoder parameters
  config.block_width = 8;
  MockTfm model(config);
  EXPECT_EQ(model.group_size("x_encoder"), 768u);
  EXPECT_EQ(model.group_size("y_encoder"), 576u);
}

TEST(MockTfm, GroupRoundTrip) {
  MockTfm model({4, 3, 5, 99});
  for (const auto& g : model.group_names()) {
    Eigen::VectorXd values = model.get_group(g);
    EXPECT_EQ(values.size(), static_cast<Eigen::Index>(model.group_size(g)));
    Eigen::VectorXd shifted = values.array() + 0.5;
    model.set_group(g, shifted);
    EXPECT_EQ(model.get_group(g), shifted);
  }
  EXPECT_THROW(model.get_group("bogus"), Error);
}

TEST(MockTfm, AnalyticGradientsMatchFiniteDifferences) {
  MockTfmConfig config{3, 2, 4, 13};
  MockTfm model(config);

  Rng rng = make_rng(101);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  Eigen::MatrixXd ctx(6, 2), qry(3, 2);
  for (Eigen::Index i = 0; i < ctx.rows(); ++i)
    for (Eigen::Index j = 0; j < ctx.cols(); ++j) ctx(i, j) = u(rng);
  for (Eigen::Index i = 0; i < qry.rows(); ++i)
    for (Eigen::Index j = 0; j < qry.cols(); ++j) qry(i, j) = u(rng);
  std::vector<int> ctx_y = {0, 1, 0, 1, 1, 0};

  Eigen::VectorXd dz(3);
  dz << 0.7, -0.3, 1.1;  // arbitrary downstream gradient

  auto grads = model.logits_backward(ctx, ctx_y, qry, dz, nullptr);

  // Directional objective L(theta) = dz . z(theta); dL/dtheta must match.
  const double h = 1e-6;
  for (const auto& g : model.group_names()) {
    Eigen::VectorXd theta = model.get_group(g);
    const Eigen::VectorXd& analytic = grads.at(g);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd bumped = theta;
      bumped(i) = theta(i) + h;
      model.set_group(g, bumped);
      double up = dz.dot(model.positive_logits(ctx, ctx_y, qry));
      bumped(i) = theta(i) - h;
      model.set_group(g, bumped);
      double down = dz.dot(model.positive_logits(ctx, ctx_y, qry));
      model.set_group(g, theta);
      double numeric = (up - down) / (2 * h);
      double denom = std::max({std::abs(numeric), std::abs(analytic(i)), 1e-6});
      EXPECT_LT(std::abs(numeric - analytic(i)) / denom, 1e-5)
          << "group " << g << " coordinate " << i;
    }
  }
}

TEST(MockTfmIcl, BatchPredictionMatchesPerRowPredictions) {
  // All query rows are served by one forward pass; row-by-row calls must
  // produce the same probabilities.
  MockTfmIclClassifier clf(Hyperparameters{{"seed", 13}});
  TabularDataset ds = separable_dataset();
  clf.fit(ds);
  Eigen::VectorXd batch = clf.predict_proba(ds.features);
  for (Eigen::Index i = 0; i < 6; ++i) {
    Eigen::MatrixXd one = ds.features.row(i);
    EXPECT_DOUBLE_EQ(clf.predict_proba(one)(0), batch(i));
  }
}

TEST(MockTfm, ForwardIsDeterministicAndWidthChecked) {
  MockTfm model({4, 3, 5, 21});
  Eigen::MatrixXd ctx = Eigen::MatrixXd::Random(5, 3);
  Eigen::MatrixXd qry = Eigen::MatrixXd::Random(2, 3);
  std::vector<int> y = {0, 1, 1, 0, 1};
  Eigen::VectorXd a = model.positive_logits(ctx, y, qry);
  Eigen::VectorXd b = model.positive_logits(ctx, y, qry);
  EXPECT_EQ(a, b);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Random(2, 4);
  EXPECT_THROW(model.positive_logits(ctx, y, bad), Error);
}
