#include "sfe/analyst.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "sfe/density.hpp"

namespace sfe {

ThresholdDistribution ThresholdDistribution::uniform(std::span<const double> taus)
{
  ThresholdDistribution d;
  for (double t : taus)
    d.support.emplace_back(t, 1.0 / static_cast<double>(taus.size()));
  return d;
}

ThresholdDistribution ThresholdDistribution::standard()
{
  const double taus[] = {0.1, 0.2, 0.3};
  return uniform(taus);
}

void ThresholdDistribution::validate() const
{
  if (support.empty())
    throw std::invalid_argument("threshold distribution is empty");
  double total = 0.0;
  for (const auto& [tau, p] : support) {
    if (!(tau >= 0.0 && tau <= 0.5))
      throw std::invalid_argument("thresholds must lie in [0, 0.5]");
    if (!(p >= 0.0))
      throw std::invalid_argument("threshold probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("threshold probabilities must sum to 1");
}

std::optional<int> mfp(const CertaintyCurve& curve, double tau)
{
  for (std::size_t i = 0; i < curve.values.size(); ++i)
    if (curve.values[i] <= tau)
      return static_cast<int>(i + 1);
  return std::nullopt;
}

std::optional<double> expected_mfp(const CertaintyCurve& curve, const ThresholdDistribution& dist)
{
  double total = 0.0;
  for (const auto& [tau, p] : dist.support) {
    const auto m = mfp(curve, tau);
    if (!m)
      return std::nullopt;
    total += p * *m;
  }
  return total;
}

MfpOutcome censored_expected_mfp(const CertaintyCurve& curve, const ThresholdDistribution& dist, int length)
{
  MfpOutcome out;
  for (const auto& [tau, p] : dist.support) {
    const auto m = mfp(curve, tau);
    const int v = m ? *m : length + 1;
    out.censored = out.censored || !m;
    out.per_tau.push_back(v);
    out.value += p * v;
  }
  return out;
}

Analyst::Analyst(Dataset training, ForestConfig config, std::optional<std::filesystem::path> cache_dir)
  : training_(std::move(training)), config_(config), cache_dir_(std::move(cache_dir))
{
  config_.validate();
  if (training_.size() < 1 || training_.dim() < 1)
    throw std::invalid_argument("analyst training data is empty");
  Fnv1a h;
  h.update_value(dataset_hash(training_));
  h.update_value(config_.tree_count);
  h.update_value(config_.max_depth);
  h.update_value(config_.min_leaf);
  h.update_value(config_.seed);
  training_hash_ = h.digest();
  if (cache_dir_)
    std::filesystem::create_directories(*cache_dir_);
}

std::string Analyst::subset_key(std::span<const int> canonical)
{
  return fmt::format("{}", fmt::join(canonical, "-"));
}

std::shared_ptr<const ForestClassifier> Analyst::train(const FeatureSet& canonical) const
{
  std::filesystem::path file;
  if (cache_dir_) {
    file = *cache_dir_ / fmt::format("{:016x}_{}.json", training_hash_, subset_key(canonical));
    std::ifstream in(file, std::ios::binary);
    if (in) {
      std::ostringstream buf;
      buf << in.rdbuf();
      auto forest = std::make_shared<const ForestClassifier>(ForestClassifier::from_string(buf.str()));
      std::lock_guard lock(mutex_);
      ++stats_.disk_loads;
      return forest;
    }
  }

  std::vector<Eigen::Index> cols(canonical.begin(), canonical.end());
  const Eigen::MatrixXd projected = training_.points(Eigen::all, cols);
  ForestConfig cfg = config_;
  cfg.seed = hash_subset(config_.seed, canonical);
  auto forest = std::make_shared<const ForestClassifier>(train_forest(projected, training_.labels, cfg));

  if (cache_dir_) {
    const auto tmp = file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << forest->to_string();
    }
    std::filesystem::rename(tmp, file);
  }
  std::lock_guard lock(mutex_);
  ++stats_.trained;
  return forest;
}

std::shared_ptr<const ForestClassifier> Analyst::classifier(std::span<const int> subset) const
{
  FeatureSet key = canonical_subset(subset);
  check_subset(key, training_.dim());

  std::promise<std::shared_ptr<const ForestClassifier>> promise;
  std::shared_future<std::shared_ptr<const ForestClassifier>> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    ++stats_.queries;
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++stats_.cache_hits;
      future = it->second;
    } else {
      future = promise.get_future().share();
      cache_.emplace(key, future);
      owner = true;
    }
  }
  if (owner) {
    try {
      promise.set_value(train(key));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  }
  return future.get();
}

double Analyst::prob_normal(const Eigen::VectorXd& x, std::span<const int> subset) const
{
  if (x.size() != training_.dim())
    throw std::invalid_argument("point dimensionality does not match analyst");
  const auto forest = classifier(subset);
  FeatureSet key = canonical_subset(subset);
  std::vector<double> projected;
  projected.reserve(key.size());
  for (int f : key)
    projected.push_back(x[f]);
  return forest->prob_normal(projected);
}

CertaintyCurve Analyst::certainty_curve(const Eigen::VectorXd& x, const Sfe& sfe, int k) const
{
  return certainty_curve_until(x, sfe, k, -1.0);
}

CertaintyCurve Analyst::certainty_curve_until(const Eigen::VectorXd& x, const Sfe& sfe, int k, double stop_at) const
{
  if (k < 0 || k > static_cast<int>(sfe.order.size()))
    throw std::invalid_argument("curve length exceeds explanation length");
  CertaintyCurve curve;
  FeatureSet prefix;
  for (int i = 0; i < k; ++i) {
    prefix.push_back(sfe.order[static_cast<std::size_t>(i)]);
    curve.values.push_back(prob_normal(x, prefix));
    if (curve.values.back() <= stop_at)
      break;
  }
  return curve;
}

AnalystStats Analyst::stats() const
{
  std::lock_guard lock(mutex_);
  return stats_;
}

} // namespace sfe
