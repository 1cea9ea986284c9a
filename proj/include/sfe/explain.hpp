#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sfe/common.hpp"

namespace sfe {

enum class Method { IndMarg, SeqMarg, IndDO, SeqDO, Random, OptOracle };

/// Display name, e.g. "SeqMarg".
std::string_view method_name(Method m);
/// Command-line spelling, e.g. "seqmarg".
std::string_view method_key(Method m);
std::optional<Method> parse_method(std::string_view key);
/// True for methods that consult the detector density.
bool uses_detector(Method m);

/// A sequential feature explanation: features in reveal order with the
/// objective value seen when each was chosen.
struct Sfe {
  std::vector<int> order;
  std::vector<double> step_scores;
  Method method = Method::Random;
};

/// Anything answering log f(x_S) for a nonempty subset S. Implementations
/// must be deterministic for fixed inputs and must not depend on the order
/// of S; the explainers always pass S sorted ascending.
template <typename F>
concept DensityOracle = requires(const F& f, const Eigen::VectorXd& x, std::span<const int> s) {
  { f(x, s) } -> std::convertible_to<double>;
};

using DensityFn = std::function<double(const Eigen::VectorXd&, std::span<const int>)>;

class EmptySubsetQuery : public Error {
public:
  using Error::Error;
};

namespace detail {

inline void check_length(int k, Eigen::Index n)
{
  if (k < 1 || k > n)
    throw std::invalid_argument("explanation length must lie in [1, n]");
}

inline FeatureSet with_feature(const FeatureSet& sorted, int j)
{
  FeatureSet out;
  out.reserve(sorted.size() + 1);
  auto pos = std::lower_bound(sorted.begin(), sorted.end(), j);
  out.insert(out.end(), sorted.begin(), pos);
  out.push_back(j);
  out.insert(out.end(), pos, sorted.end());
  return out;
}

inline FeatureSet without_feature(const FeatureSet& sorted, int j)
{
  FeatureSet out;
  out.reserve(sorted.size());
  for (int f : sorted)
    if (f != j)
      out.push_back(f);
  return out;
}

inline FeatureSet all_features(Eigen::Index n)
{
  FeatureSet out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

} // namespace detail

/// Features sorted by ascending singleton log-marginal, ties by index.
template <DensityOracle F>
Sfe explain_ind_marg(const F& f, const Eigen::VectorXd& x, int k)
{
  const Eigen::Index n = x.size();
  detail::check_length(k, n);
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const int s[] = {j};
    scores[static_cast<std::size_t>(j)] = f(x, s);
  }
  std::vector<int> order = detail::all_features(n);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] < scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(k));
  Sfe out{order, {}, Method::IndMarg};
  for (int j : order)
    out.step_scores.push_back(scores[static_cast<std::size_t>(j)]);
  return out;
}

/// Greedy: each step adds the feature minimizing the joint marginal with
/// the features already chosen.
template <DensityOracle F>
Sfe explain_seq_marg(const F& f, const Eigen::VectorXd& x, int k)
{
  const Eigen::Index n = x.size();
  detail::check_length(k, n);
  Sfe out{{}, {}, Method::SeqMarg};
  FeatureSet chosen;
  FeatureSet remaining = detail::all_features(n);
  for (int step = 0; step < k; ++step) {
    double best = std::numeric_limits<double>::infinity();
    int pick = remaining.front();
    for (int j : remaining) {
      const double v = f(x, detail::with_feature(chosen, j));
      if (v < best) {
        best = v;
        pick = j;
      }
    }
    out.order.push_back(pick);
    out.step_scores.push_back(best);
    chosen = detail::with_feature(chosen, pick);
    remaining = detail::without_feature(remaining, pick);
  }
  return out;
}

/// Scores each feature by f(x without i) - f(x) in density space and sorts
/// descending, ties by index. Requires n >= 2.
template <DensityOracle F>
Sfe explain_ind_do(const F& f, const Eigen::VectorXd& x, int k)
{
  const Eigen::Index n = x.size();
  if (n < 2)
    throw std::invalid_argument("dropout needs at least two features");
  detail::check_length(k, n);
  const FeatureSet all = detail::all_features(n);
  const double full = f(x, all);
  std::vector<double> dropped(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    dropped[static_cast<std::size_t>(j)] = f(x, detail::without_feature(all, j));

  // exp(a) - exp(b) = exp(m) * (exp(a - m) - exp(b - m)); order by the scaled part.
  const double m = std::max(full, *std::max_element(dropped.begin(), dropped.end()));
  std::vector<double> scaled(dropped.size());
  for (std::size_t j = 0; j < dropped.size(); ++j)
    scaled[j] = std::exp(dropped[j] - m) - std::exp(full - m);

  std::vector<int> order = all;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scaled[static_cast<std::size_t>(a)] > scaled[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(k));
  Sfe out{order, {}, Method::IndDO};
  const double unit = std::exp(m);
  for (int j : order)
    out.step_scores.push_back(scaled[static_cast<std::size_t>(j)] * unit);
  return out;
}

/// Greedy dual of explain_seq_marg: each step removes the feature whose
/// removal leaves the kept features looking most normal, i.e. maximizes
/// f over the complement of (chosen + {j}). When only one feature is left
/// it is appended without a query and scored log f(empty) = 0.
template <DensityOracle F>
Sfe explain_seq_do(const F& f, const Eigen::VectorXd& x, int k)
{
  const Eigen::Index n = x.size();
  detail::check_length(k, n);
  Sfe out{{}, {}, Method::SeqDO};
  FeatureSet remaining = detail::all_features(n);
  for (int step = 0; step < k; ++step) {
    if (remaining.size() == 1) {
      out.order.push_back(remaining.front());
      out.step_scores.push_back(0.0);
      break;
    }
    double best = -std::numeric_limits<double>::infinity();
    int pick = remaining.front();
    for (int j : remaining) {
      const double v = f(x, detail::without_feature(remaining, j));
      if (v > best) {
        best = v;
        pick = j;
      }
    }
    out.order.push_back(pick);
    out.step_scores.push_back(best);
    remaining = detail::without_feature(remaining, pick);
  }
  return out;
}

/// First k entries of a seeded uniform permutation. Step scores are zero.
Sfe explain_random(int n, int k, std::uint64_t seed);

/// Dispatches to the named method. Random draws its permutation from `seed`.
template <DensityOracle F>
Sfe explain(Method method, const F& f, const Eigen::VectorXd& x, int k, std::uint64_t seed = 0)
{
  switch (method) {
  case Method::IndMarg: return explain_ind_marg(f, x, k);
  case Method::SeqMarg: return explain_seq_marg(f, x, k);
  case Method::IndDO: return explain_ind_do(f, x, k);
  case Method::SeqDO: return explain_seq_do(f, x, k);
  case Method::Random: return explain_random(static_cast<int>(x.size()), k, seed);
  case Method::OptOracle: break;
  }
  throw std::invalid_argument("OptOracle is computed from the analyst, not a density");
}

/// One CSV row: point_index,method,order,step_scores with the two list
/// fields joined by ';'.
std::string sfe_csv_header();
std::string sfe_csv_row(std::size_t point_index, const Sfe& sfe);

} // namespace sfe
