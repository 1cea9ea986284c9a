#include "sfe/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace sfe {

void EvalConfig::validate() const
{
  if (!(top_fraction > 0.0 && top_fraction <= 1.0))
    throw std::invalid_argument("top_fraction must lie in (0, 1]");
  if (max_prefix && *max_prefix < 1)
    throw std::invalid_argument("max_prefix must be positive");
  if (random_repeats < 1)
    throw std::invalid_argument("random_repeats must be positive");
  if (methods.empty())
    throw std::invalid_argument("no methods requested");
  if (opt_oracle_cap < 1)
    throw std::invalid_argument("opt_oracle_cap must be positive");
  thresholds.validate();
}

std::vector<std::size_t> select_evaluation_anomalies(std::span<const std::size_t> ranking,
                                                     std::span<const Label> labels, double top_fraction)
{
  if (ranking.size() != labels.size())
    throw std::invalid_argument("ranking and labels differ in length");
  if (!(top_fraction > 0.0 && top_fraction <= 1.0))
    throw std::invalid_argument("top_fraction must lie in (0, 1]");
  const auto cutoff = std::min(
      ranking.size(),
      static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(ranking.size()) - 1e-9)));
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < cutoff; ++r)
    if (labels[ranking[r]] == Label::Anomaly)
      out.push_back(ranking[r]);
  if (out.empty())
    throw NoAnomaliesSelected(fmt::format("no anomalies among the top {} ranked points", cutoff));
  return out;
}

double subset_count(int n, int k)
{
  double total = 0.0, binom = 1.0;
  for (int i = 1; i <= k; ++i) {
    binom = binom * (n - i + 1) / i;
    total += binom;
  }
  return total;
}

OptOracleResult explain_opt_oracle(const Analyst& analyst, const Eigen::VectorXd& x, int max_size, double budget)
{
  return explain_opt_oracle(
      [&](const Eigen::VectorXd& p, std::span<const int> s) { return analyst.prob_normal(p, s); }, x, max_size,
      budget);
}

MfpOutcome opt_oracle_mfp(const OptOracleResult& result, const ThresholdDistribution& dist)
{
  const int length = static_cast<int>(result.steps.size());
  MfpOutcome out;
  for (const auto& [tau, p] : dist.support) {
    int v = length + 1;
    for (const auto& step : result.steps) {
      if (step.prob < tau) {
        v = step.size;
        break;
      }
    }
    out.censored = out.censored || v == length + 1;
    out.per_tau.push_back(v);
    out.value += p * v;
  }
  return out;
}

DensityFn make_detector(DetectorMode mode, const EgmmModel* egmm, const Analyst* analyst)
{
  if (mode == DetectorMode::Egmm) {
    if (!egmm)
      throw std::invalid_argument("ensemble detector requested without a model");
    return [egmm](const Eigen::VectorXd& x, std::span<const int> s) { return egmm_log_marginal(*egmm, x, s); };
  }
  if (!analyst)
    throw std::invalid_argument("oracle detector requested without an analyst");
  return [analyst](const Eigen::VectorXd& x, std::span<const int> s) { return std::log(analyst->prob_normal(x, s)); };
}

std::pair<double, double> mean_ci95(std::span<const double> values)
{
  if (values.empty())
    return {0.0, 0.0};
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values)
    mean += v;
  mean /= n;
  if (values.size() == 1)
    return {mean, 0.0};
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

namespace {

std::string display_name(Method m, DetectorMode mode)
{
  std::string name(method_name(m));
  if (mode == DetectorMode::OracleDetector && uses_detector(m))
    name += '*';
  return name;
}

PointResult evaluate_point(Method method, std::size_t index, const Eigen::VectorXd& x, const Analyst& analyst,
                           const DensityFn& detector, int k, const EvalConfig& config)
{
  PointResult r;
  r.point_index = index;
  r.method = method;
  const int n = static_cast<int>(x.size());
  if (method == Method::OptOracle) {
    const auto result = explain_opt_oracle(analyst, x, std::min(k, config.opt_oracle_cap), config.opt_oracle_budget);
    const auto outcome = opt_oracle_mfp(result, config.thresholds);
    for (const auto& step : result.steps)
      r.curve.push_back(step.prob);
    r.expected_mfp = outcome.value;
    r.censored = outcome.censored;
    r.per_tau = outcome.per_tau;
    return r;
  }
  if (method == Method::Random) {
    double min_tau = 1.0;
    for (const auto& [tau, p] : config.thresholds.support)
      min_tau = std::min(min_tau, tau);
    double total = 0.0;
    for (int rep = 0; rep < config.random_repeats; ++rep) {
      const Sfe sfe = explain_random(n, k, mix_seed(config.seed, index, static_cast<std::uint64_t>(rep)));
      const auto curve = analyst.certainty_curve_until(x, sfe, k, min_tau);
      const auto outcome = censored_expected_mfp(curve, config.thresholds, k);
      total += outcome.value;
      r.censored = r.censored || outcome.censored;
    }
    r.expected_mfp = total / config.random_repeats;
    return r;
  }
  const Sfe sfe = explain(method, detector, x, k);
  const auto curve = analyst.certainty_curve(x, sfe, k);
  const auto outcome = censored_expected_mfp(curve, config.thresholds, k);
  r.curve = curve.values;
  r.expected_mfp = outcome.value;
  r.censored = outcome.censored;
  r.per_tau = outcome.per_tau;
  return r;
}

void summarize(EvaluationReport& report, const EvalConfig& config)
{
  report.per_method.clear();
  for (Method m : config.methods) {
    MethodSummary s;
    s.method = m;
    s.name = display_name(m, config.detector_mode);
    std::vector<double> values;
    for (const auto& p : report.per_point) {
      if (p.method != m)
        continue;
      values.push_back(p.expected_mfp);
      s.censored_count += p.censored;
    }
    s.n_anomalies = values.size();
    std::tie(s.mean, s.ci95) = mean_ci95(values);
    report.per_method.push_back(std::move(s));
  }
}

} // namespace

EvaluationReport run_evaluation(const Dataset& benchmark, const Analyst& analyst, const EgmmConfig& egmm_config,
                                const EvalConfig& config)
{
  const EgmmModel egmm = egmm_fit(benchmark.points, egmm_config, config.threads);
  return run_evaluation(benchmark, analyst, egmm, config);
}

EvaluationReport run_evaluation(const Dataset& benchmark, const Analyst& analyst, const EgmmModel& egmm,
                                const EvalConfig& config)
{
  config.validate();
  benchmark.validate();
  if (benchmark.anomaly_count() == 0)
    throw std::invalid_argument("benchmark has no anomalies");
  if (egmm.dim() != benchmark.dim() || analyst.dim() != benchmark.dim())
    throw std::invalid_argument("model dimensionality does not match benchmark");

  const int n = static_cast<int>(benchmark.dim());
  const int k = std::min(config.max_prefix.value_or(n), n);
  const auto ranking = rank_points(egmm, benchmark.points);
  const auto selected = select_evaluation_anomalies(ranking, benchmark.labels, config.top_fraction);
  const DensityFn detector = make_detector(config.detector_mode, &egmm, &analyst);

  std::vector<std::vector<PointResult>> results(selected.size());
  parallel_for(selected.size(), config.threads, [&](std::size_t i) {
    const Eigen::VectorXd x = benchmark.points.row(static_cast<Eigen::Index>(selected[i])).transpose();
    for (Method m : config.methods)
      results[i].push_back(evaluate_point(m, selected[i], x, analyst, detector, k, config));
  });

  EvaluationReport report;
  report.explanation_length = k;
  for (auto& rows : results)
    for (auto& r : rows)
      report.per_point.push_back(std::move(r));
  summarize(report, config);
  return report;
}

EvaluationReport pool_reports(std::span<const EvaluationReport> reports, const EvalConfig& config)
{
  EvaluationReport pooled;
  for (const auto& r : reports) {
    pooled.per_point.insert(pooled.per_point.end(), r.per_point.begin(), r.per_point.end());
    pooled.explanation_length = std::max(pooled.explanation_length, r.explanation_length);
  }
  summarize(pooled, config);
  return pooled;
}

std::string summary_csv(const EvaluationReport& report)
{
  std::ostringstream out;
  out << "method,mean,ci95,n,censored_count\n";
  for (const auto& s : report.per_method)
    out << fmt::format("{},{},{},{},{}\n", s.name, format_real(s.mean), format_real(s.ci95), s.n_anomalies,
                       s.censored_count);
  return out.str();
}

std::string per_point_csv(const EvaluationReport& report)
{
  std::string names[6];
  for (const auto& s : report.per_method)
    names[static_cast<int>(s.method)] = s.name;
  std::ostringstream out;
  out << "point_index,method,expected_mfp,censored,curve\n";
  for (const auto& p : report.per_point) {
    std::vector<std::string> curve;
    for (double v : p.curve)
      curve.push_back(format_real(v));
    const auto& name = names[static_cast<int>(p.method)];
    out << fmt::format("{},{},{},{},{}\n", p.point_index, name.empty() ? std::string(method_name(p.method)) : name,
                       format_real(p.expected_mfp), p.censored ? 1 : 0, fmt::join(curve, ";"));
  }
  return out.str();
}

void write_report(const EvaluationReport& report, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  const std::pair<const char*, std::string> files[] = {{"summary.csv", summary_csv(report)},
                                                       {"per_point.csv", per_point_csv(report)}};
  for (const auto& [name, text] : files) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out)
      throw Error(fmt::format("cannot write {}", (dir / name).string()));
  }
}

} // namespace sfe
