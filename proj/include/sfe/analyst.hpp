#pragma once

#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sfe/data.hpp"
#include "sfe/explain.hpp"
#include "sfe/forest.hpp"

namespace sfe {

/// Discrete distribution over analyst detection thresholds tau in [0, 0.5].
struct ThresholdDistribution {
  std::vector<std::pair<double, double>> support; // (tau, probability)

  static ThresholdDistribution uniform(std::span<const double> taus);
  /// Uniform over {0.1, 0.2, 0.3}.
  static ThresholdDistribution standard();
  static ThresholdDistribution single(double tau) { return {{{tau, 1.0}}}; }

  void validate() const;
};

struct CertaintyCurve {
  /// values[i] = P(normal | first i+1 revealed features).
  std::vector<double> values;
};

/// Smallest 1-based prefix length whose value is <= tau; nullopt when the
/// curve never gets there.
std::optional<int> mfp(const CertaintyCurve& curve, double tau);

/// Expectation of mfp over the thresholds; nullopt if any supported tau is
/// never reached.
std::optional<double> expected_mfp(const CertaintyCurve& curve, const ThresholdDistribution& dist);

/// Expected MFP with undetected thresholds counted as `length + 1`.
struct MfpOutcome {
  double value = 0.0;
  bool censored = false;
  /// Per-threshold MFP in support order, censored entries as length + 1.
  std::vector<int> per_tau;
};

MfpOutcome censored_expected_mfp(const CertaintyCurve& curve, const ThresholdDistribution& dist, int length);

struct AnalystStats {
  std::size_t trained = 0;
  std::size_t cache_hits = 0;
  std::size_t disk_loads = 0;
  std::size_t queries = 0;
};

/// Simulated analyst A(x, S) = P(normal | x_S): one forest per feature
/// subset, trained on first use and cached. Thread-safe; concurrent misses on
/// the same subset train it once.
class Analyst {
public:
  /// `cache_dir`, when given, persists forests as
  /// <dataset-hash>_<subset>.json and reloads them on later runs.
  Analyst(Dataset training, ForestConfig config, std::optional<std::filesystem::path> cache_dir = std::nullopt);

  Analyst(const Analyst&) = delete;
  Analyst& operator=(const Analyst&) = delete;

  /// Cached forest for the subset in any order or multiplicity.
  std::shared_ptr<const ForestClassifier> classifier(std::span<const int> subset) const;

  double prob_normal(const Eigen::VectorXd& x, std::span<const int> subset) const;

  CertaintyCurve certainty_curve(const Eigen::VectorXd& x, const Sfe& sfe, int k) const;

  /// Like certainty_curve but stops after the first value <= stop_at.
  CertaintyCurve certainty_curve_until(const Eigen::VectorXd& x, const Sfe& sfe, int k, double stop_at) const;

  Eigen::Index dim() const { return training_.dim(); }
  const Dataset& training_data() const { return training_; }
  const ForestConfig& config() const { return config_; }
  std::uint64_t training_hash() const { return training_hash_; }
  AnalystStats stats() const;

  static std::string subset_key(std::span<const int> canonical);

private:
  std::shared_ptr<const ForestClassifier> train(const FeatureSet& canonical) const;

  Dataset training_;
  ForestConfig config_;
  std::optional<std::filesystem::path> cache_dir_;
  std::uint64_t training_hash_ = 0;

  mutable std::mutex mutex_;
  mutable std::map<FeatureSet, std::shared_future<std::shared_ptr<const ForestClassifier>>> cache_;
  mutable AnalystStats stats_;
};

} // namespace sfe
