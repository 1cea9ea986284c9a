#include "sfe/forest.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace sfe {

void ForestConfig::validate() const
{
  if (tree_count < 1)
    throw std::invalid_argument("tree_count must be positive");
  if (max_depth < 1)
    throw std::invalid_argument("max_depth must be positive");
  if (min_leaf < 1)
    throw std::invalid_argument("min_leaf must be positive");
}

double DecisionTree::prob_normal(std::span<const double> x) const
{
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& node = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                           : node.right);
  }
  return (nodes[i].normal + 1.0) / (nodes[i].normal + nodes[i].anomaly + 2.0);
}

ForestClassifier::ForestClassifier(std::vector<DecisionTree> trees, double oob_accuracy)
  : trees_(std::move(trees)), oob_accuracy_(oob_accuracy)
{
  if (trees_.empty())
    throw std::invalid_argument("forest needs at least one tree");
}

double ForestClassifier::prob_normal(std::span<const double> x) const
{
  double sum = 0.0;
  for (const auto& t : trees_)
    sum += t.prob_normal(x);
  return sum / static_cast<double>(trees_.size());
}

std::string ForestClassifier::to_string() const
{
  using nlohmann::json;
  json trees = json::array();
  for (const auto& t : trees_) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
      nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.normal, n.anomaly}));
    trees.push_back(std::move(nodes));
  }
  json doc = {{"format", "sfe-forest"}, {"version", 1}, {"oob_accuracy", oob_accuracy_}, {"trees", std::move(trees)}};
  return doc.dump();
}

ForestClassifier ForestClassifier::from_string(const std::string& text)
{
  using nlohmann::json;
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "sfe-forest" || doc.at("version").get<int>() != 1)
      throw Error("unsupported forest file");
    std::vector<DecisionTree> trees;
    for (const auto& t : doc.at("trees")) {
      DecisionTree tree;
      for (const auto& n : t) {
        DecisionTree::Node node;
        node.feature = n.at(0).get<int>();
        node.threshold = n.at(1).get<double>();
        node.left = n.at(2).get<int>();
        node.right = n.at(3).get<int>();
        node.normal = n.at(4).get<double>();
        node.anomaly = n.at(5).get<double>();
        tree.nodes.push_back(node);
      }
      const auto size = static_cast<int>(tree.nodes.size());
      for (const auto& node : tree.nodes)
        if (node.feature >= 0 && (node.left <= 0 || node.left >= size || node.right <= 0 || node.right >= size))
          throw Error("forest file has dangling child index");
      if (tree.nodes.empty())
        throw Error("forest file has an empty tree");
      trees.push_back(std::move(tree));
    }
    return ForestClassifier(std::move(trees), doc.at("oob_accuracy").get<double>());
  } catch (const json::exception& e) {
    throw Error(fmt::format("malformed forest file: {}", e.what()));
  }
}

namespace {

struct TrainingView {
  const Eigen::MatrixXd& x;
  const std::vector<Label>& y;
  const std::vector<double>& weight;
};

class TreeBuilder {
public:
  TreeBuilder(const TrainingView& data, const ForestConfig& config, Rng& rng)
    : data_(data), config_(config), rng_(rng),
      mtry_(std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(data.x.cols()))))))
  {}

  DecisionTree build(std::vector<int> rows)
  {
    tree_.nodes.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

private:
  int grow(std::vector<int> rows, int depth)
  {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double normal = 0.0, anomaly = 0.0;
    for (int r : rows)
      (data_.y[static_cast<std::size_t>(r)] == Label::Normal ? normal : anomaly) += data_.weight[static_cast<std::size_t>(r)];
    tree_.nodes[static_cast<std::size_t>(id)].normal = normal;
    tree_.nodes[static_cast<std::size_t>(id)].anomaly = anomaly;

    const double total = normal + anomaly;
    if (depth >= config_.max_depth || normal == 0.0 || anomaly == 0.0 || total < 2.0 * config_.min_leaf)
      return id;

    const double parent = total - (normal * normal + anomaly * anomaly) / total;
    double best = parent - 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<int> features(static_cast<std::size_t>(data_.x.cols()));
    std::iota(features.begin(), features.end(), 0);
    for (int i = 0; i < mtry_; ++i) {
      const auto j = static_cast<std::size_t>(i) + uniform_index(rng_, features.size() - static_cast<std::size_t>(i));
      std::swap(features[static_cast<std::size_t>(i)], features[j]);
    }

    std::vector<int> sorted = rows;
    for (int fi = 0; fi < mtry_; ++fi) {
      const int f = features[static_cast<std::size_t>(fi)];
      const auto col = data_.x.col(f);
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        return col[a] < col[b] || (col[a] == col[b] && a < b);
      });
      double ln = 0.0, la = 0.0;
      for (std::size_t p = 0; p + 1 < sorted.size(); ++p) {
        const auto r = static_cast<std::size_t>(sorted[p]);
        (data_.y[r] == Label::Normal ? ln : la) += data_.weight[r];
        const double lo = col[sorted[p]];
        const double hi = col[sorted[p + 1]];
        if (lo == hi)
          continue;
        const double lw = ln + la;
        const double rw = total - lw;
        if (lw < config_.min_leaf || rw < config_.min_leaf)
          continue;
        const double rn = normal - ln, ra = anomaly - la;
        const double impurity = (lw - (ln * ln + la * la) / lw) + (rw - (rn * rn + ra * ra) / rw);
        if (impurity < best) {
          best = impurity;
          best_feature = f;
          double mid = 0.5 * (lo + hi);
          if (!(mid < hi))
            mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0)
      return id;

    std::vector<int> left, right;
    for (int r : rows)
      (data_.x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const int l = grow(std::move(left), depth + 1);
    const int rgt = grow(std::move(right), depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = rgt;
    return id;
  }

  const TrainingView& data_;
  const ForestConfig& config_;
  Rng& rng_;
  int mtry_;
  DecisionTree tree_;
};

} // namespace

ForestClassifier train_forest(const Eigen::MatrixXd& points, std::span<const Label> labels,
                              const ForestConfig& config)
{
  config.validate();
  if (static_cast<Eigen::Index>(labels.size()) != points.rows() || points.rows() == 0 || points.cols() == 0)
    throw std::invalid_argument("training data shape mismatch");

  // Canonical row order: lexicographic on (features, label).
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(points.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      if (points(a, c) != points(b, c))
        return points(a, c) < points(b, c);
    }
    return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
  });
  Eigen::MatrixXd x(points.rows(), points.cols());
  std::vector<Label> y(labels.size());
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < perm.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = points.row(perm[i]);
    y[i] = labels[static_cast<std::size_t>(perm[i])];
    by_class[y[i] == Label::Anomaly ? 1 : 0].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw SingleClassTrainingData("analyst training data must contain both normal and anomaly points");

  const std::size_t count = y.size();
  const std::size_t draws = (count + 1) / 2;
  std::vector<double> oob_sum(count, 0.0);
  std::vector<int> oob_votes(count, 0);
  std::vector<DecisionTree> trees;
  trees.reserve(static_cast<std::size_t>(config.tree_count));

  std::vector<double> weight(count);
  for (int t = 0; t < config.tree_count; ++t) {
    Rng rng = make_rng(mix_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::fill(weight.begin(), weight.end(), 0.0);
    for (const auto& rows : by_class)
      for (std::size_t d = 0; d < draws; ++d)
        weight[rows[uniform_index(rng, rows.size())]] += 1.0;

    std::vector<int> in_bag;
    for (std::size_t i = 0; i < count; ++i)
      if (weight[i] > 0.0)
        in_bag.push_back(static_cast<int>(i));

    TrainingView view{x, y, weight};
    TreeBuilder builder(view, config, rng);
    trees.push_back(builder.build(std::move(in_bag)));

    for (std::size_t i = 0; i < count; ++i) {
      if (weight[i] > 0.0)
        continue;
      const Eigen::VectorXd row = x.row(static_cast<Eigen::Index>(i)).transpose();
      oob_sum[i] += trees.back().prob_normal(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
      ++oob_votes[i];
    }
  }

  std::size_t scored = 0, correct = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (oob_votes[i] == 0)
      continue;
    ++scored;
    const bool predicted_normal = oob_sum[i] / oob_votes[i] >= 0.5;
    correct += predicted_normal == (y[i] == Label::Normal);
  }
  const double oob = scored ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0;
  return ForestClassifier(std::move(trees), oob);
}

} // namespace sfe
