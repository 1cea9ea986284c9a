#include "sfe/density.hpp"

#include <cassert>
#include <numeric>

#include <fmt/format.h>

namespace sfe {

void EgmmConfig::validate() const
{
  if (members_per_k < 1)
    throw std::invalid_argument("members_per_k must be positive");
  if (component_counts.empty())
    throw std::invalid_argument("component_counts must be nonempty");
  for (int k : component_counts)
    if (k < 1)
      throw std::invalid_argument("component counts must be positive");
  if (!(retention_quantile >= 0.0 && retention_quantile < 1.0))
    throw std::invalid_argument("retention_quantile must lie in [0, 1)");
  if (em_max_iters < 1)
    throw std::invalid_argument("em_max_iters must be positive");
  if (!(em_tol > 0.0))
    throw std::invalid_argument("em_tol must be positive");
}

std::vector<std::size_t> rank_by_scores(std::span<const double> scores)
{
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

std::vector<std::size_t> rank_points(const EgmmModel& model, const Eigen::MatrixXd& points)
{
  if (points.cols() != model.dim())
    throw std::invalid_argument("model dimensionality does not match data");
  std::vector<double> scores(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    scores[static_cast<std::size_t>(i)] = egmm_log_density(model, points.row(i).transpose());
  return rank_by_scores(scores);
}

namespace {

constexpr double kMinResponsibility = 1e-8;

/// Column c holds log(w_c) + log N(x_i; mu_c, Sigma_c) for every row i.
Eigen::MatrixXd weighted_log_densities(const GmmModel& model, const Eigen::MatrixXd& points)
{
  const Eigen::Index n = points.cols();
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(model.components.size()));
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    const auto& comp = model.components[c];
    const Eigen::LLT<Eigen::MatrixXd> llt(comp.covariance);
    if (llt.info() != Eigen::Success)
      throw DegenerateCluster(fmt::format("component {} covariance is not positive definite", c));
    const Eigen::MatrixXd centered = (points.rowwise() - comp.mean.transpose()).transpose();
    const Eigen::MatrixXd z = llt.matrixL().solve(centered);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.col(static_cast<Eigen::Index>(c)) =
        (std::log(comp.weight) - 0.5 * (static_cast<double>(n) * log_2pi + log_det)) -
        0.5 * z.colwise().squaredNorm().transpose().array();
  }
  return out;
}

/// E-step: normalizes `log_terms` into responsibilities in place and returns
/// the total log-likelihood.
double responsibilities(Eigen::MatrixXd& log_terms)
{
  double total = 0.0;
  for (Eigen::Index i = 0; i < log_terms.rows(); ++i) {
    const double lse = log_sum_exp(log_terms.row(i));
    total += lse;
    log_terms.row(i) = (log_terms.row(i).array() - lse).exp();
  }
  return total;
}

GmmModel m_step(const Eigen::MatrixXd& points, const Eigen::MatrixXd& resp, double ridge)
{
  const auto total = static_cast<double>(points.rows());
  GmmModel model;
  model.components.resize(static_cast<std::size_t>(resp.cols()));
  for (Eigen::Index c = 0; c < resp.cols(); ++c) {
    const double nk = resp.col(c).sum();
    if (!(nk > kMinResponsibility))
      throw DegenerateCluster(fmt::format("component {} lost all responsibility", c));
    auto& comp = model.components[static_cast<std::size_t>(c)];
    comp.weight = nk / total;
    comp.mean = (points.transpose() * resp.col(c)) / nk;
    const Eigen::MatrixXd centered = points.rowwise() - comp.mean.transpose();
    Eigen::MatrixXd cov = centered.transpose() * (centered.array().colwise() * resp.col(c).array()).matrix() / nk;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += ridge;
    comp.covariance = std::move(cov);
  }
  return model;
}

std::vector<int> kmeans_assignments(const Eigen::MatrixXd& points, int k, Rng& rng)
{
  const Eigen::Index count = points.rows();
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(count))));
  Eigen::VectorXd nearest = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = count - 1;
    if (total > 0.0) {
      double target = uniform_unit(rng) * total;
      for (Eigen::Index i = 0; i < count; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(count)));
    }
    centers.row(c) = points.row(pick);
    nearest = nearest.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(count), 0);
  for (int iter = 0; iter < 10; ++iter) {
    for (Eigen::Index i = 0; i < count; ++i) {
      Eigen::Index best;
      (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < count; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0.0)
        centers.row(c) = sums.row(c) / counts[c];
  }
  return assign;
}

GmmFit fit_gmm_once(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const EmOptions& options)
{
  const double n_minus_1 = points.rows() > 1 ? static_cast<double>(points.rows() - 1) : 1.0;
  const Eigen::RowVectorXd mu = points.colwise().mean();
  const double mean_var = (points.rowwise() - mu).colwise().squaredNorm().mean() / n_minus_1;
  const double ridge = 1e-6 * (mean_var > 0.0 ? mean_var : 1.0);

  Rng rng = make_rng(seed);
  const auto assign = kmeans_assignments(points, k, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(points.rows(), k);
  for (std::size_t i = 0; i < assign.size(); ++i)
    resp(static_cast<Eigen::Index>(i), assign[i]) = 1.0;

  GmmFit fit;
  fit.model = m_step(points, resp, ridge);
  resp = weighted_log_densities(fit.model, points);
  fit.log_likelihood.push_back(responsibilities(resp));

  for (int iter = 0; iter < options.max_iters; ++iter) {
    GmmModel next = m_step(points, resp, ridge);
    Eigen::MatrixXd next_resp = weighted_log_densities(next, points);
    const double ll = responsibilities(next_resp);
    const double previous = fit.log_likelihood.back();
    assert(ll >= previous - 1e-9 * std::abs(previous));
    fit.model = std::move(next);
    resp = std::move(next_resp);
    fit.log_likelihood.push_back(ll);
    fit.iterations = iter + 1;
    if (ll - previous < options.tol * std::abs(previous)) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

} // namespace

GmmFit fit_gmm(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const EmOptions& options)
{
  if (k < 1)
    throw std::invalid_argument("component count must be positive");
  if (points.rows() < k)
    throw std::invalid_argument("fewer points than components");
  if (!points.allFinite())
    throw std::invalid_argument("non-finite training values");

  for (int attempt = 0;; ++attempt) {
    try {
      return fit_gmm_once(points, k, attempt == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(attempt)),
                          options);
    } catch (const DegenerateCluster&) {
      if (attempt >= options.max_retries)
        throw;
    }
  }
}

double gmm_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& points)
{
  Eigen::MatrixXd terms = weighted_log_densities(model, points);
  double total = 0.0;
  for (Eigen::Index i = 0; i < terms.rows(); ++i)
    total += log_sum_exp(terms.row(i));
  return total;
}

EgmmModel egmm_fit(const Eigen::MatrixXd& points, const EgmmConfig& config, unsigned threads)
{
  config.validate();
  const int max_k = *std::max_element(config.component_counts.begin(), config.component_counts.end());
  if (points.rows() < max_k)
    throw std::invalid_argument("fewer points than the largest component count");

  EgmmModel model;
  model.config = config;
  model.standardizer = fit_standardizer(points);
  const Eigen::MatrixXd z = model.standardizer.apply_rows(points);
  const auto count = static_cast<std::size_t>(z.rows());

  std::vector<int> ks;
  for (int k : config.component_counts)
    for (int m = 0; m < config.members_per_k; ++m)
      ks.push_back(k);

  EmOptions options;
  options.max_iters = config.em_max_iters;
  options.tol = config.em_tol;

  std::vector<GmmModel> trained(ks.size());
  std::vector<double> scores(ks.size());
  parallel_for(ks.size(), threads, [&](std::size_t idx) {
    for (std::uint64_t redraw = 0;; ++redraw) {
      const std::uint64_t member_seed = mix_seed(config.seed, idx, redraw);
      Rng rng = make_rng(member_seed);
      Eigen::MatrixXd sample(z.rows(), z.cols());
      for (std::size_t i = 0; i < count; ++i)
        sample.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(uniform_index(rng, count)));
      try {
        trained[idx] = fit_gmm(sample, ks[idx], mix_seed(member_seed, 1), options).model;
        break;
      } catch (const DegenerateCluster&) {
        if (redraw >= 3)
          throw;
      }
    }
    scores[idx] = gmm_log_likelihood(trained[idx], z) / static_cast<double>(count);
  });

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const auto cut = std::min(sorted.size() - 1,
                            static_cast<std::size_t>(std::floor(config.retention_quantile *
                                                                static_cast<double>(sorted.size()))));
  const double threshold = sorted[cut];
  for (std::size_t i = 0; i < trained.size(); ++i)
    if (scores[i] >= threshold)
      model.members.push_back(std::move(trained[i]));
  model.trained_members = trained.size();
  if (model.members.empty())
    throw AllMembersDiscarded("every ensemble member fell below the retention threshold");
  return model;
}

} // namespace sfe
