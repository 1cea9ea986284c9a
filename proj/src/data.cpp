#include "sfe/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>

namespace sfe {

MissingColumn::MissingColumn(const std::string& column)
  : Error(fmt::format("missing column '{}'", column))
{}

NonNumericCell::NonNumericCell(std::size_t row_, std::string column_, const std::string& text)
  : Error(fmt::format("non-numeric cell at row {}, column '{}': '{}'", row_, column_, text)),
    row(row_), column(std::move(column_))
{}

EmptyFile::EmptyFile(const std::filesystem::path& path)
  : Error(fmt::format("empty file: {}", path.string()))
{}

InsufficientPoints::InsufficientPoints(std::string cls_, std::size_t needed_, std::size_t available_)
  : Error(fmt::format("insufficient {} points: needed {}, available {}", cls_, needed_, available_)),
    cls(std::move(cls_)), needed(needed_), available(available_)
{}

std::size_t Dataset::anomaly_count() const
{
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::Anomaly));
}

void Dataset::validate() const
{
  if (points.rows() < 1 || points.cols() < 1)
    throw std::invalid_argument("dataset must have at least one point and one feature");
  if (static_cast<Eigen::Index>(labels.size()) != points.rows())
    throw std::invalid_argument("label count does not match point count");
  if (static_cast<Eigen::Index>(feature_names.size()) != points.cols())
    throw std::invalid_argument("feature name count does not match dimensionality");
  if (!points.allFinite())
    throw std::invalid_argument("dataset contains non-finite values");
  if (normal_count() == 0)
    throw std::invalid_argument("dataset has no normal points");
}

std::set<std::string> ClassTable::distinct_classes() const
{
  return {classes.begin(), classes.end()};
}

namespace {

std::string trim(std::string_view s)
{
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos)
    return {};
  auto end = s.find_last_not_of(" \t\r\n");
  s = s.substr(begin, end - begin + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_row(const std::string& line)
{
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(trim(std::string_view(line).substr(start)));
      return cells;
    }
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_real(const std::string& text, double& out)
{
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+')
    ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

} // namespace

ClassTable load_class_table(const std::filesystem::path& path, const std::string& label_column)
{
  std::ifstream in(path);
  if (!in)
    throw Error(fmt::format("cannot open {}", path.string()));

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_row(line);
      break;
    }
  }
  if (header.empty())
    throw EmptyFile(path);

  auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end())
    throw MissingColumn(label_column);
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());

  ClassTable table;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != label_pos)
      table.feature_names.push_back(header[c]);
  if (table.feature_names.empty())
    throw Error("no feature columns");

  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty())
      continue;
    ++row;
    auto cells = split_row(line);
    if (cells.size() != header.size())
      throw Error(fmt::format("row {} has {} cells, expected {}", row, cells.size(), header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_pos) {
        table.classes.push_back(cells[c]);
        continue;
      }
      double v;
      if (!parse_real(cells[c], v))
        throw NonNumericCell(row, header[c], cells[c]);
      values.push_back(v);
    }
  }
  if (row == 0)
    throw EmptyFile(path);

  const auto n = static_cast<Eigen::Index>(table.feature_names.size());
  table.points = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(row), n);
  return table;
}

Dataset to_dataset(const ClassTable& table, const std::set<std::string>& anomaly_values)
{
  Dataset data;
  data.points = table.points;
  data.feature_names = table.feature_names;
  data.labels.reserve(table.classes.size());
  for (const auto& c : table.classes)
    data.labels.push_back(anomaly_values.count(c) ? Label::Anomaly : Label::Normal);
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const std::set<std::string>& anomaly_values)
{
  return to_dataset(load_class_table(path, label_column), anomaly_values);
}

std::string format_real(double v)
{
  return fmt::format("{}", v);
}

void write_csv(const Dataset& data, const std::filesystem::path& path, const std::string& label_column)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error(fmt::format("cannot write {}", path.string()));
  for (const auto& name : data.feature_names)
    out << name << ',';
  out << label_column << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      out << format_real(data.points(i, j)) << ',';
    out << label_name(data.labels[static_cast<std::size_t>(i)]) << '\n';
  }
  if (!out)
    throw Error(fmt::format("write failed: {}", path.string()));
}

std::size_t benchmark_anomaly_count(double anomaly_fraction, std::size_t size)
{
  return static_cast<std::size_t>(std::floor(anomaly_fraction * static_cast<double>(size) + 0.5));
}

namespace {

std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool, std::size_t count, Rng& rng)
{
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

} // namespace

Benchmark sample_benchmark(const ClassTable& mother, const BenchmarkSpec& spec)
{
  if (!(spec.anomaly_fraction > 0.0 && spec.anomaly_fraction < 1.0))
    throw InvalidBenchmarkSpec("anomaly_fraction must lie strictly between 0 and 1");
  if (spec.target_size == 0)
    throw InvalidBenchmarkSpec("target_size must be positive");
  const auto classes = mother.distinct_classes();
  if (spec.anomaly_classes.empty())
    throw InvalidBenchmarkSpec("anomaly_classes is empty");
  for (const auto& c : spec.anomaly_classes)
    if (!classes.count(c))
      throw InvalidBenchmarkSpec(fmt::format("anomaly class '{}' not present in mother set", c));
  if (spec.anomaly_classes.size() >= classes.size())
    throw InvalidBenchmarkSpec("anomaly_classes must be a proper subset of the mother set's classes");

  std::vector<std::size_t> normal_rows, anomaly_rows;
  for (std::size_t r = 0; r < mother.classes.size(); ++r)
    (spec.anomaly_classes.count(mother.classes[r]) ? anomaly_rows : normal_rows).push_back(r);

  const std::size_t anomalies = benchmark_anomaly_count(spec.anomaly_fraction, spec.target_size);
  const std::size_t normals = spec.target_size - anomalies;
  if (anomalies > anomaly_rows.size())
    throw InsufficientPoints("anomaly", anomalies, anomaly_rows.size());
  if (normals > normal_rows.size())
    throw InsufficientPoints("normal", normals, normal_rows.size());
  if (normals == 0)
    throw InsufficientPoints("normal", 1, 0);

  Rng rng = make_rng(mix_seed(spec.seed, 0xBE7C));
  auto picked = draw_without_replacement(std::move(normal_rows), normals, rng);
  auto picked_anomalies = draw_without_replacement(std::move(anomaly_rows), anomalies, rng);
  picked.insert(picked.end(), picked_anomalies.begin(), picked_anomalies.end());
  std::sort(picked.begin(), picked.end());

  Benchmark out;
  out.mother_rows = picked;
  out.data.feature_names = mother.feature_names;
  out.data.points.resize(static_cast<Eigen::Index>(picked.size()), mother.points.cols());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    out.data.points.row(static_cast<Eigen::Index>(i)) = mother.points.row(static_cast<Eigen::Index>(picked[i]));
    out.data.labels.push_back(spec.anomaly_classes.count(mother.classes[picked[i]]) ? Label::Anomaly
                                                                                    : Label::Normal);
  }
  return out;
}

Dataset select_rows(const Dataset& data, std::span<const std::size_t> rows)
{
  Dataset out;
  out.feature_names = data.feature_names;
  out.points.resize(static_cast<Eigen::Index>(rows.size()), data.dim());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.points.row(static_cast<Eigen::Index>(i)) = data.points.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(data.labels[rows[i]]);
  }
  return out;
}

namespace {

std::uint64_t row_hash(const Eigen::MatrixXd& m, Eigen::Index r)
{
  Fnv1a h;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    double v = m(r, c);
    if (v == 0.0)
      v = 0.0; // fold -0.0
    h.update_value(v);
  }
  return h.digest();
}

} // namespace

Dataset exclude_matching_rows(const Dataset& pool, const Dataset& exclude)
{
  if (pool.dim() != exclude.dim())
    throw std::invalid_argument("dimensionality mismatch");
  std::unordered_multiset<std::uint64_t> hashes;
  for (Eigen::Index r = 0; r < exclude.size(); ++r)
    hashes.insert(row_hash(exclude.points, r));

  std::vector<std::size_t> keep;
  for (Eigen::Index r = 0; r < pool.size(); ++r) {
    bool matched = false;
    if (hashes.count(row_hash(pool.points, r))) {
      for (Eigen::Index e = 0; e < exclude.size() && !matched; ++e)
        matched = (pool.points.row(r).array() == exclude.points.row(e).array()).all();
    }
    if (!matched)
      keep.push_back(static_cast<std::size_t>(r));
  }
  return select_rows(pool, keep);
}

std::uint64_t dataset_hash(const Dataset& data)
{
  Fnv1a h;
  h.update_value(static_cast<std::int64_t>(data.size()));
  h.update_value(static_cast<std::int64_t>(data.dim()));
  for (Eigen::Index r = 0; r < data.size(); ++r)
    for (Eigen::Index c = 0; c < data.dim(); ++c)
      h.update_value(data.points(r, c));
  for (Label l : data.labels)
    h.update_value(static_cast<std::uint8_t>(l));
  return h.digest();
}

} // namespace sfe
