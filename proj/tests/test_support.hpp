#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfe/common.hpp"
#include "sfe/data.hpp"
#include "sfe/density.hpp"

namespace sfe::test {

inline double standard_normal(Rng& rng)
{
  // Box-Muller on the library's portable uniform.
  const double u1 = 1.0 - uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng)
{
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = standard_normal(rng);
  return m;
}

inline double normal_log_pdf(double x)
{
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Density of independent standard normals, written out per feature.
struct IndependentNormals {
  double operator()(const Eigen::VectorXd& x, std::span<const int> subset) const
  {
    double total = 0.0;
    for (int f : subset)
      total += normal_log_pdf(x[f]);
    return total;
  }
};

/// Random SPD matrix A A^T + 0.3 I.
inline Eigen::MatrixXd random_spd(Eigen::Index n, Rng& rng)
{
  const Eigen::MatrixXd a = normal_matrix(n, n, rng) * 0.7;
  return a * a.transpose() + 0.3 * Eigen::MatrixXd::Identity(n, n);
}

inline GmmModel random_gmm(Eigen::Index n, int components, Rng& rng)
{
  GmmModel g;
  double total = 0.0;
  for (int c = 0; c < components; ++c) {
    GaussianComponent<double> comp;
    comp.weight = 0.2 + uniform_unit(rng);
    total += comp.weight;
    comp.mean = normal_matrix(n, 1, rng) * 1.5;
    comp.covariance = random_spd(n, rng);
    g.components.push_back(std::move(comp));
  }
  for (auto& c : g.components)
    c.weight /= total;
  return g;
}

/// Composite trapezoid over [lo, hi] with `steps` intervals.
template <typename Fn>
double trapezoid(Fn&& fn, double lo, double hi, int steps)
{
  const double h = (hi - lo) / steps;
  double sum = 0.5 * (fn(lo) + fn(hi));
  for (int i = 1; i < steps; ++i)
    sum += fn(lo + i * h);
  return sum * h;
}

/// Points from N(0, I) labelled normal plus anomalies from N(0, I) with
/// `critical` shifted by `shift`.
inline Dataset shifted_feature_dataset(int normals, int anomalies, int n, int critical, double shift, Rng& rng)
{
  Dataset d;
  d.points = normal_matrix(normals + anomalies, n, rng);
  for (int i = 0; i < normals + anomalies; ++i) {
    const bool anomalous = i >= normals;
    if (anomalous)
      d.points(i, critical) += shift;
    d.labels.push_back(anomalous ? Label::Anomaly : Label::Normal);
  }
  for (int j = 0; j < n; ++j)
    d.feature_names.push_back("f" + std::to_string(j));
  return d;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
    : path(std::filesystem::temp_directory_path() / ("sfe_test_" + name + "_" +
                                                     std::to_string(std::hash<std::string>{}(name) % 100000)))
  {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& f) const { return path / f; }
};

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace sfe::test
