#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfe/analyst.hpp"
#include "sfe/data.hpp"
#include "sfe/density.hpp"
#include "sfe/explain.hpp"

namespace sfe {

enum class DetectorMode { Egmm, OracleDetector };

struct EvalConfig {
  double top_fraction = 0.10;
  /// Explanation length; defaults to the dimensionality.
  std::optional<int> max_prefix;
  ThresholdDistribution thresholds = ThresholdDistribution::standard();
  int random_repeats = 100;
  std::vector<Method> methods = {Method::SeqMarg, Method::IndMarg, Method::SeqDO,
                                 Method::IndDO,   Method::Random,  Method::OptOracle};
  DetectorMode detector_mode = DetectorMode::Egmm;
  std::uint64_t seed = 0;
  int opt_oracle_cap = 10;
  double opt_oracle_budget = 1e6;
  unsigned threads = 1;

  void validate() const;
};

class NoAnomaliesSelected : public Error {
public:
  using Error::Error;
};

class CombinatorialBudgetExceeded : public Error {
public:
  using Error::Error;
};

/// Anomalies among the first ceil(top_fraction * N) ranked points, in rank
/// order.
std::vector<std::size_t> select_evaluation_anomalies(std::span<const std::size_t> ranking,
                                                     std::span<const Label> labels, double top_fraction);

struct OptOracleStep {
  int size = 0;
  FeatureSet subset;
  double prob = 1.0;
};

struct OptOracleResult {
  std::vector<OptOracleStep> steps;
};

/// Number of subsets of size 1..k drawn from n features.
double subset_count(int n, int k);

/// For every size i in 1..max_size: the size-i subset (lexicographically
/// first among ties) minimizing prob(x, S). Subsets need not be nested.
template <typename ProbFn>
OptOracleResult explain_opt_oracle(const ProbFn& prob, const Eigen::VectorXd& x, int max_size,
                                   double budget = 1e6)
{
  const int n = static_cast<int>(x.size());
  if (max_size < 1 || max_size > n)
    throw std::invalid_argument("subset size must lie in [1, n]");
  if (subset_count(n, max_size) > budget)
    throw CombinatorialBudgetExceeded("exhaustive subset search exceeds the budget");

  OptOracleResult out;
  for (int size = 1; size <= max_size; ++size) {
    OptOracleStep best{size, {}, std::numeric_limits<double>::infinity()};
    FeatureSet subset(static_cast<std::size_t>(size));
    std::iota(subset.begin(), subset.end(), 0);
    for (;;) {
      const double p = prob(x, subset);
      if (p < best.prob) {
        best.prob = p;
        best.subset = subset;
      }
      // Next combination in lexicographic order.
      int i = size - 1;
      while (i >= 0 && subset[static_cast<std::size_t>(i)] == n - size + i)
        --i;
      if (i < 0)
        break;
      ++subset[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < size; ++j)
        subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
    }
    out.steps.push_back(std::move(best));
  }
  return out;
}

OptOracleResult explain_opt_oracle(const Analyst& analyst, const Eigen::VectorXd& x, int max_size,
                                   double budget = 1e6);

/// Per-threshold MFP = smallest size whose best probability is strictly
/// below tau; undetected thresholds count as steps.size() + 1.
MfpOutcome opt_oracle_mfp(const OptOracleResult& result, const ThresholdDistribution& dist);

/// Egmm: the ensemble's log-marginal. OracleDetector: log P(normal | x_S)
/// from the analyst. Both reference their model; keep it alive.
DensityFn make_detector(DetectorMode mode, const EgmmModel* egmm, const Analyst* analyst);

struct MethodSummary {
  Method method = Method::Random;
  /// Display name, with '*' appended for detector methods in oracle mode.
  std::string name;
  double mean = 0.0;
  double ci95 = 0.0;
  std::size_t n_anomalies = 0;
  std::size_t censored_count = 0;
};

struct PointResult {
  std::size_t point_index = 0;
  Method method = Method::Random;
  double expected_mfp = 0.0;
  bool censored = false;
  /// Certainty curve (or OptOracle's best probability per size). Empty
  /// for Random, which averages many explanations.
  std::vector<double> curve;
  /// Per-threshold MFP after censoring; Random holds none.
  std::vector<int> per_tau;
};

struct EvaluationReport {
  std::vector<MethodSummary> per_method;
  std::vector<PointResult> per_point;
  int explanation_length = 0;
};

/// mean +- 1.96 * s / sqrt(n), with half-width 0 when n == 1.
std::pair<double, double> mean_ci95(std::span<const double> values);

/// Fits the ensemble on the benchmark points and evaluates.
EvaluationReport run_evaluation(const Dataset& benchmark, const Analyst& analyst,
                                const EgmmConfig& egmm_config, const EvalConfig& config);

/// Evaluates against a fitted ensemble.
EvaluationReport run_evaluation(const Dataset& benchmark, const Analyst& analyst, const EgmmModel& egmm,
                                const EvalConfig& config);

/// Aggregates per-point results of several benchmarks (e.g. all benchmarks of
/// one mother set) into one report.
EvaluationReport pool_reports(std::span<const EvaluationReport> reports, const EvalConfig& config);

std::string summary_csv(const EvaluationReport& report);
std::string per_point_csv(const EvaluationReport& report);
/// Writes summary.csv and per_point.csv into `dir`.
void write_report(const EvaluationReport& report, const std::filesystem::path& dir);

} // namespace sfe
