#include <doctest.h>

#include <algorithm>

#include "sfe/analyst.hpp"
#include "sfe/forest.hpp"
#include "test_support.hpp"

using namespace sfe;

namespace {

/// Normals uniform on [0, 1], anomalies uniform on [3, 4], plus `noise`
/// standard-normal nuisance features.
Dataset separable(int normals, int anomalies, int noise, std::uint64_t seed)
{
  Rng rng = make_rng(seed);
  Dataset d;
  d.points.resize(normals + anomalies, 1 + noise);
  for (int i = 0; i < normals + anomalies; ++i) {
    const bool anomalous = i >= normals;
    d.points(i, 0) = (anomalous ? 3.0 : 0.0) + uniform_unit(rng);
    for (int j = 1; j <= noise; ++j)
      d.points(i, j) = test::standard_normal(rng);
    d.labels.push_back(anomalous ? Label::Anomaly : Label::Normal);
  }
  for (int j = 0; j <= noise; ++j)
    d.feature_names.push_back("f" + std::to_string(j));
  return d;
}

ForestConfig small_forest(std::uint64_t seed = 1)
{
  ForestConfig c;
  c.tree_count = 20;
  c.seed = seed;
  return c;
}

CertaintyCurve curve(std::initializer_list<double> v) { return {std::vector<double>(v)}; }

} // namespace

TEST_CASE("separable 1D data gives high out-of-bag accuracy")
{
  const Dataset d = separable(100, 20, 0, 1);
  ForestConfig cfg;
  cfg.seed = 3;
  const ForestClassifier f = train_forest(d.points, d.labels, cfg);
  CHECK(f.trees().size() == 100);
  CHECK(f.oob_accuracy() >= 0.95);
}

TEST_CASE("single-class training data is rejected")
{
  Dataset d = separable(30, 0, 1, 2);
  CHECK_THROWS_AS(train_forest(d.points, d.labels, small_forest()), SingleClassTrainingData);
  const Analyst a(d, small_forest());
  const int s[] = {0};
  CHECK_THROWS_AS(a.classifier(s), SingleClassTrainingData);
}

TEST_CASE("Laplace-smoothed leaf of a perfectly splitting stump")
{
  DecisionTree stump;
  stump.nodes.resize(3);
  stump.nodes[0].feature = 0;
  stump.nodes[0].threshold = 2.0;
  stump.nodes[0].left = 1;
  stump.nodes[0].right = 2;
  stump.nodes[1].normal = 10.0;
  stump.nodes[2].anomaly = 10.0;
  const ForestClassifier f({stump}, 1.0);
  const double anomalous[] = {3.5};
  const double normal[] = {0.5};
  CHECK(f.prob_normal(std::span<const double>(anomalous)) == doctest::Approx(1.0 / 12.0));
  CHECK(f.prob_normal(std::span<const double>(normal)) == doctest::Approx(11.0 / 12.0));
}

TEST_CASE("analyst probabilities on a separable toy set")
{
  const Analyst a(separable(100, 20, 2, 4), small_forest());
  Eigen::VectorXd deep_normal(3), deep_anomaly(3);
  deep_normal << 0.5, 0.0, 0.0;
  deep_anomaly << 3.5, 0.0, 0.0;
  const int s[] = {0};
  CHECK(a.prob_normal(deep_normal, s) >= 0.9);
  CHECK(a.prob_normal(deep_anomaly, s) <= 0.1);
  CHECK(a.prob_normal(deep_normal, s) == a.prob_normal(deep_normal, s));
  const int all[] = {0, 1, 2};
  const double p = a.prob_normal(deep_anomaly, all);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
}

TEST_CASE("cache contract: hits, canonicalization and bounded training")
{
  const Analyst a(separable(60, 15, 3, 5), small_forest());
  const int s02[] = {0, 2};
  const int s20[] = {2, 0};
  const int s220[] = {2, 2, 0};
  const auto first = a.classifier(s02);
  CHECK(a.stats().trained == 1);
  const auto second = a.classifier(s02);
  CHECK(a.stats().trained == 1);
  CHECK(a.stats().cache_hits == 1);
  CHECK(a.classifier(s20) == first);
  CHECK(a.classifier(s220) == first);
  CHECK(second == first);
  CHECK(a.stats().trained == 1);

  const int bad[] = {4};
  CHECK_THROWS_AS(a.classifier(bad), std::invalid_argument);
  CHECK_THROWS_AS(a.classifier(std::span<const int>{}), std::invalid_argument);
  CHECK(Analyst::subset_key(s02) == "0-2");
}

TEST_CASE("concurrent misses train each subset at most once")
{
  const Analyst a(separable(60, 15, 3, 6), small_forest());
  const FeatureSet subsets[] = {{0}, {1}, {0, 1}, {1, 2, 3}, {0, 3}};
  std::vector<double> probs(40);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.7);
  parallel_for(probs.size(), 8, [&](std::size_t i) { probs[i] = a.prob_normal(x, subsets[i % 5]); });
  CHECK(a.stats().trained == 5);
  CHECK(a.stats().queries == 40);
  for (std::size_t i = 5; i < probs.size(); ++i)
    CHECK(probs[i] == probs[i % 5]);
}

TEST_CASE("forest predictions ignore training-row order")
{
  const Dataset d = separable(50, 12, 2, 7);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(d.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng = make_rng(8);
  for (std::size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  Dataset shuffled = d;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.points.row(static_cast<Eigen::Index>(i)) = d.points.row(perm[i]);
    shuffled.labels[i] = d.labels[static_cast<std::size_t>(perm[i])];
  }
  const Analyst a(d, small_forest(9));
  const Analyst b(shuffled, small_forest(9));
  const int s[] = {0, 1, 2};
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd x = test::normal_matrix(3, 1, rng) + Eigen::VectorXd::Constant(3, 1.5);
    CHECK(a.prob_normal(x, s) == b.prob_normal(x, s));
  }
}

TEST_CASE("different analyst seeds give different forests")
{
  const Dataset d = separable(50, 12, 2, 10);
  const Analyst a(d, small_forest(1));
  const Analyst b(d, small_forest(2));
  const int s[] = {1, 2};
  CHECK(a.classifier(s)->to_string() != b.classifier(s)->to_string());
}

TEST_CASE("disk cache reloads identical forests")
{
  test::TempDir dir("analyst_cache");
  const Dataset d = separable(50, 12, 2, 11);
  const int s[] = {0, 2};
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 2.1);
  double p = 0.0;
  {
    const Analyst a(d, small_forest(), dir.path);
    p = a.prob_normal(x, s);
    CHECK(a.stats().trained == 1);
    CHECK(a.stats().disk_loads == 0);
  }
  const Analyst b(d, small_forest(), dir.path);
  CHECK(b.prob_normal(x, s) == p);
  CHECK(b.stats().trained == 0);
  CHECK(b.stats().disk_loads == 1);

  ForestConfig other = small_forest();
  other.tree_count = 21;
  const Analyst c(d, other, dir.path);
  c.prob_normal(x, s);
  CHECK(c.stats().trained == 1);
}

TEST_CASE("forest serialization round trip")
{
  const Dataset d = separable(40, 10, 1, 12);
  const ForestClassifier f = train_forest(d.points, d.labels, small_forest());
  const ForestClassifier g = ForestClassifier::from_string(f.to_string());
  CHECK(g.oob_accuracy() == f.oob_accuracy());
  const double x[] = {1.9, -0.3};
  CHECK(g.prob_normal(std::span<const double>(x)) == f.prob_normal(std::span<const double>(x)));
  CHECK_THROWS_AS(ForestClassifier::from_string("{}"), Error);
}

TEST_CASE("certainty curves")
{
  const Analyst a(separable(80, 20, 2, 13), small_forest());
  Eigen::VectorXd x(3);
  x << 3.4, 0.1, -0.2;
  const Sfe e{{1, 0, 2}, {0, 0, 0}, Method::SeqMarg};
  const CertaintyCurve one = a.certainty_curve(x, e, 1);
  REQUIRE(one.values.size() == 1);
  const int first[] = {1};
  CHECK(one.values[0] == a.prob_normal(x, first));

  const CertaintyCurve full = a.certainty_curve(x, e, 3);
  REQUIRE(full.values.size() == 3);
  for (double v : full.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  const int two[] = {0, 1};
  CHECK(full.values[1] == a.prob_normal(x, two));
  CHECK(full.values[1] < full.values[0]);

  const CertaintyCurve early = a.certainty_curve_until(x, e, 3, 0.3);
  REQUIRE(early.values.size() == 2);
  CHECK(early.values[1] <= 0.3);
  CHECK_THROWS_AS(a.certainty_curve(x, e, 4), std::invalid_argument);
}

TEST_CASE("mfp examples")
{
  const CertaintyCurve c = curve({0.6, 0.25, 0.05});
  CHECK(mfp(c, 0.3) == 2);
  CHECK(mfp(c, 0.1) == 3);
  CHECK(mfp(c, 0.25) == 2);
  CHECK(!mfp(curve({0.6, 0.55}), 0.3));
  CHECK(*expected_mfp(c, ThresholdDistribution::standard()) == doctest::Approx(8.0 / 3.0));
  CHECK(*expected_mfp(curve({0.05}), ThresholdDistribution::standard()) == 1.0);
  CHECK(*expected_mfp(c, ThresholdDistribution::single(0.2)) == *mfp(c, 0.2));
  CHECK(!expected_mfp(curve({0.6, 0.15}), ThresholdDistribution::standard()));

  const MfpOutcome out = censored_expected_mfp(curve({0.6, 0.15}), ThresholdDistribution::standard(), 2);
  CHECK(out.censored);
  CHECK(out.per_tau == std::vector<int>{3, 2, 2});
  CHECK(out.value == doctest::Approx(7.0 / 3.0));
}

TEST_CASE("mfp monotonicity and expected-value bounds on random curves")
{
  Rng rng = make_rng(14);
  const double taus[] = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  for (int t = 0; t < 500; ++t) {
    CertaintyCurve c;
    const auto len = 1 + uniform_index(rng, 8);
    for (std::size_t i = 0; i < len; ++i)
      c.values.push_back(uniform_unit(rng));
    constexpr int kInf = 1 << 20;
    int previous = kInf;
    for (double tau : taus) {
      const int m = mfp(c, tau).value_or(kInf);
      CHECK(m <= previous);
      previous = m;
    }
    const auto dist = ThresholdDistribution::uniform(std::span<const double>(taus + 1, 5));
    if (const auto e = expected_mfp(c, dist)) {
      int lo = kInf, hi = 0;
      for (const auto& [tau, p] : dist.support) {
        lo = std::min(lo, *mfp(c, tau));
        hi = std::max(hi, *mfp(c, tau));
      }
      CHECK(*e >= lo - 1e-12);
      CHECK(*e <= hi + 1e-12);
    }
  }
}

TEST_CASE("threshold distribution validation")
{
  CHECK_NOTHROW(ThresholdDistribution::standard().validate());
  CHECK_THROWS_AS((ThresholdDistribution{{{0.6, 1.0}}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((ThresholdDistribution{{{0.1, 0.5}}}.validate()), std::invalid_argument);
  CHECK_THROWS_AS(ThresholdDistribution{}.validate(), std::invalid_argument);
}
