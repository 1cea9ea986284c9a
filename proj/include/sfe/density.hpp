#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "sfe/common.hpp"

namespace sfe {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// log(sum(exp(v))) without overflow. Empty input or all -inf yields -inf.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& v)
{
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0)
    return -std::numeric_limits<Scalar>::infinity();
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m))
    return m;
  return m + std::log((v.derived().array() - m).exp().sum());
}

/// Log of the multivariate normal density N(x; mean, cov) via Cholesky.
/// Returns -inf when cov is not positive definite.
template <typename XDerived, typename MDerived, typename CDerived>
typename XDerived::Scalar log_gaussian(const Eigen::MatrixBase<XDerived>& x,
                                       const Eigen::MatrixBase<MDerived>& mean,
                                       const Eigen::MatrixBase<CDerived>& cov)
{
  using Scalar = typename XDerived::Scalar;
  const Eigen::LLT<Matrix<Scalar>> llt(cov);
  if (llt.info() != Eigen::Success)
    return -std::numeric_limits<Scalar>::infinity();
  const Vector<Scalar> z = llt.matrixL().solve((x - mean).eval());
  const Scalar log_det = 2 * llt.matrixLLT().diagonal().array().log().sum();
  const auto d = static_cast<Scalar>(x.size());
  return Scalar(-0.5) * (d * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det + z.squaredNorm());
}

template <typename Scalar>
struct GaussianComponent {
  Scalar weight = 1;
  Vector<Scalar> mean;
  Matrix<Scalar> covariance;

  /// Marginal over `subset`: the sub-mean and the matching covariance block.
  Scalar log_marginal(const Vector<Scalar>& x, std::span<const int> subset) const
  {
    std::vector<Eigen::Index> idx(subset.begin(), subset.end());
    return log_gaussian(x(idx), mean(idx), covariance(idx, idx));
  }
};

template <typename Scalar>
struct Gmm {
  std::vector<GaussianComponent<Scalar>> components;

  Eigen::Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }
};

using GmmModel = Gmm<double>;

inline void check_subset(std::span<const int> subset, Eigen::Index n)
{
  if (subset.empty())
    throw std::invalid_argument("feature subset must be nonempty");
  for (int f : subset)
    if (f < 0 || f >= n)
      throw std::invalid_argument("feature index out of range");
}

/// log sum_c w_c N(x_S; mu_c[S], Sigma_c[S,S]).
template <typename Scalar, typename XDerived>
Scalar gmm_log_marginal(const Gmm<Scalar>& model, const Eigen::MatrixBase<XDerived>& x,
                        std::span<const int> subset)
{
  const Eigen::Index n = model.dim();
  if (x.size() != n)
    throw std::invalid_argument("point dimensionality does not match model");
  check_subset(subset, n);
  const Vector<Scalar> xv = x;
  Vector<Scalar> terms(static_cast<Eigen::Index>(model.components.size()));
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    const auto& comp = model.components[c];
    terms[static_cast<Eigen::Index>(c)] = std::log(comp.weight) + comp.log_marginal(xv, subset);
  }
  return log_sum_exp(terms);
}

/// Full-joint log-density.
template <typename Scalar, typename XDerived>
Scalar gmm_log_density(const Gmm<Scalar>& model, const Eigen::MatrixBase<XDerived>& x)
{
  std::vector<int> all(static_cast<std::size_t>(model.dim()));
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = static_cast<int>(i);
  return gmm_log_marginal(model, x, all);
}

/// Per-feature affine map z = (x - shift) / scale applied before density
/// queries. The log-Jacobian is not added: scores are densities of z.
template <typename Scalar>
struct Standardizer {
  Vector<Scalar> shift;
  Vector<Scalar> scale;

  static Standardizer identity(Eigen::Index n)
  {
    return {Vector<Scalar>::Zero(n), Vector<Scalar>::Ones(n)};
  }

  template <typename XDerived>
  Vector<Scalar> apply(const Eigen::MatrixBase<XDerived>& x) const
  {
    return ((x.array() - shift.array()) / scale.array()).matrix();
  }

  Matrix<Scalar> apply_rows(const Matrix<Scalar>& points) const
  {
    return ((points.rowwise() - shift.transpose()).array().rowwise() / scale.transpose().array()).matrix();
  }
};

/// Fits zero-mean unit-variance shift/scale to the columns of `points`.
/// Constant columns get scale 1.
inline Standardizer<double> fit_standardizer(const Eigen::MatrixXd& points)
{
  Standardizer<double> s;
  s.shift = points.colwise().mean().transpose();
  const Eigen::MatrixXd centered = points.rowwise() - s.shift.transpose();
  const double denom = points.rows() > 1 ? static_cast<double>(points.rows() - 1) : 1.0;
  s.scale = (centered.colwise().squaredNorm().array() / denom).sqrt().transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 0.0))
      s.scale[j] = 1.0;
  return s;
}

struct EgmmConfig {
  int members_per_k = 15;
  std::vector<int> component_counts = {3, 4, 5};
  double retention_quantile = 0.10;
  int em_max_iters = 200;
  double em_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Uniform mixture of retained GMMs, queried in standardized coordinates.
template <typename Scalar>
struct Egmm {
  Standardizer<Scalar> standardizer;
  std::vector<Gmm<Scalar>> members;
  std::size_t trained_members = 0;
  EgmmConfig config;

  Eigen::Index dim() const { return members.empty() ? 0 : members.front().dim(); }
};

using EgmmModel = Egmm<double>;

/// log((1/M) sum_m exp(gmm_log_marginal(member_m, z, subset))), z standardized.
template <typename Scalar, typename XDerived>
Scalar egmm_log_marginal(const Egmm<Scalar>& model, const Eigen::MatrixBase<XDerived>& x,
                         std::span<const int> subset)
{
  if (model.members.empty())
    throw std::invalid_argument("ensemble has no members");
  const Vector<Scalar> z = model.standardizer.apply(x);
  Vector<Scalar> terms(static_cast<Eigen::Index>(model.members.size()));
  for (std::size_t m = 0; m < model.members.size(); ++m)
    terms[static_cast<Eigen::Index>(m)] = gmm_log_marginal(model.members[m], z, subset);
  return log_sum_exp(terms) - std::log(static_cast<Scalar>(model.members.size()));
}

template <typename Scalar, typename XDerived>
Scalar egmm_log_density(const Egmm<Scalar>& model, const Eigen::MatrixBase<XDerived>& x)
{
  std::vector<int> all(static_cast<std::size_t>(model.dim()));
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = static_cast<int>(i);
  return egmm_log_marginal(model, x, all);
}

/// Indices ordered by ascending score, ties by ascending index.
std::vector<std::size_t> rank_by_scores(std::span<const double> scores);

/// Points ordered from most to least anomalous (ascending full-joint density).
std::vector<std::size_t> rank_points(const EgmmModel& model, const Eigen::MatrixXd& points);

class DegenerateCluster : public Error {
public:
  using Error::Error;
};

class AllMembersDiscarded : public Error {
public:
  using Error::Error;
};

struct EmOptions {
  int max_iters = 200;
  double tol = 1e-6;
  /// Retries with a fresh seed after a degenerate fit before giving up.
  int max_retries = 3;
};

struct GmmFit {
  GmmModel model;
  /// Training log-likelihood after initialization and after each M-step.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

/// EM for a k-component full-covariance GMM on the rows of `points`:
/// k-means++ seeding, 10 Lloyd iterations, then EM with a diagonal ridge of
/// 1e-6 times the mean feature variance added at every M-step.
GmmFit fit_gmm(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const EmOptions& options = {});

/// Total log-likelihood of the rows of `points` under `model`.
double gmm_log_likelihood(const GmmModel& model, const Eigen::MatrixXd& points);

/// Bootstrap ensemble of GMMs. Members are trained on independent resamples,
/// scored by mean log-likelihood on the original (standardized) data. Members
/// scoring strictly below the floor(retention_quantile * M)-th smallest score
/// are dropped.
EgmmModel egmm_fit(const Eigen::MatrixXd& points, const EgmmConfig& config, unsigned threads = 1);

} // namespace sfe
