#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfe/data.hpp"

namespace sfe {

struct ForestConfig {
  int tree_count = 100;
  int max_depth = 12;
  int min_leaf = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

class SingleClassTrainingData : public Error {
public:
  using Error::Error;
};

/// Flat binary tree. Leaves have feature == -1 and carry the bootstrap
/// weight of each class that reached them.
struct DecisionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double normal = 0.0;
    double anomaly = 0.0;
  };
  std::vector<Node> nodes;

  /// Laplace-smoothed normal fraction (normal + 1) / (normal + anomaly + 2)
  /// of the leaf reached by x; goes left when x[feature] <= threshold.
  double prob_normal(std::span<const double> x) const;
};

/// Bagged Gini CART forest returning P(normal | x).
class ForestClassifier {
public:
  ForestClassifier() = default;
  explicit ForestClassifier(std::vector<DecisionTree> trees, double oob_accuracy = 0.0);

  /// Mean over trees of the smoothed leaf normal fraction.
  double prob_normal(std::span<const double> x) const;
  double prob_normal(const Eigen::VectorXd& x) const
  {
    return prob_normal(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }

  const std::vector<DecisionTree>& trees() const { return trees_; }
  /// Out-of-bag accuracy measured at training time (0 for hand-built forests).
  double oob_accuracy() const { return oob_accuracy_; }

  std::string to_string() const;
  static ForestClassifier from_string(const std::string& text);

private:
  std::vector<DecisionTree> trees_;
  double oob_accuracy_ = 0.0;
};

/// Trains one tree per config.tree_count. Each tree sees a class-balanced
/// bootstrap (ceil(N/2) draws with replacement from each class) and samples
/// max(1, floor(sqrt(d))) candidate features per split. Rows are put in a
/// canonical order first, so the result does not depend on input row order.
ForestClassifier train_forest(const Eigen::MatrixXd& points, std::span<const Label> labels,
                              const ForestConfig& config);

} // namespace sfe
