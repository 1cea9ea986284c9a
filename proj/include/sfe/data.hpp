#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfe/common.hpp"

namespace sfe {

enum class Label : std::uint8_t { Normal, Anomaly };

/// Labeled point matrix: one row per point, one column per feature.
/// Immutable after construction by convention; share freely across readers.
struct Dataset {
  Eigen::MatrixXd points;
  std::vector<Label> labels;
  std::vector<std::string> feature_names;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  std::size_t anomaly_count() const;
  std::size_t normal_count() const { return labels.size() - anomaly_count(); }

  /// Throws std::invalid_argument when a structural invariant is broken
  /// (empty matrix, non-finite cell, label/name count mismatch, no normals).
  void validate() const;
};

/// A mother set: points carrying their original class values.
struct ClassTable {
  Eigen::MatrixXd points;
  std::vector<std::string> classes;
  std::vector<std::string> feature_names;

  std::set<std::string> distinct_classes() const;
};

class MissingColumn : public Error {
public:
  explicit MissingColumn(const std::string& column);
};

class NonNumericCell : public Error {
public:
  NonNumericCell(std::size_t row, std::string column, const std::string& text);
  std::size_t row;
  std::string column;
};

class EmptyFile : public Error {
public:
  explicit EmptyFile(const std::filesystem::path& path);
};

class InsufficientPoints : public Error {
public:
  InsufficientPoints(std::string cls, std::size_t needed, std::size_t available);
  std::string cls;
  std::size_t needed;
  std::size_t available;
};

class InvalidBenchmarkSpec : public Error {
public:
  using Error::Error;
};

/// Reads a comma-separated file with one header row. Every column except
/// `label_column` must hold finite reals; row numbers in errors are 1-based
/// data rows (the header is row 0).
ClassTable load_class_table(const std::filesystem::path& path, const std::string& label_column);

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const std::set<std::string>& anomaly_values);

Dataset to_dataset(const ClassTable& table, const std::set<std::string>& anomaly_values);

/// Writes features in column order plus a trailing label column holding
/// "anomaly" or "normal". Reals are printed in shortest round-trip form.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "label");

inline const char* label_name(Label l) { return l == Label::Anomaly ? "anomaly" : "normal"; }

/// Shortest decimal string that parses back to exactly `v`.
std::string format_real(double v);

struct BenchmarkSpec {
  std::set<std::string> anomaly_classes;
  double anomaly_fraction = 0.05;
  std::size_t target_size = 100;
  std::uint64_t seed = 0;
};

struct Benchmark {
  Dataset data;
  /// Mother-set row of each benchmark row, ascending.
  std::vector<std::size_t> mother_rows;
};

/// round(anomaly_fraction * size) with halves rounded up.
std::size_t benchmark_anomaly_count(double anomaly_fraction, std::size_t size);

/// Draws normal and anomaly rows without replacement at the requested
/// proportion. Output rows keep mother-set order.
Benchmark sample_benchmark(const ClassTable& mother, const BenchmarkSpec& spec);

Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows);

/// Rows of `pool` whose feature vector does not occur in `exclude`.
Dataset exclude_matching_rows(const Dataset& pool, const Dataset& exclude);

/// Content hash over shape, points and labels.
std::uint64_t dataset_hash(const Dataset& data);

} // namespace sfe
