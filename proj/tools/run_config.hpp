#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "sfe/density.hpp"
#include "sfe/evaluate.hpp"
#include "sfe/forest.hpp"

namespace sfe::cli {

/// Experiment configuration read from a JSON file. Unknown keys anywhere are
/// rejected. Component seeds are derived from the single top-level seed:
/// egmm = mix_seed(seed, 1), forest = mix_seed(seed, 2), eval = mix_seed(seed, 3).
struct RunConfig {
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0; // 0: available parallelism

  std::string label_column = "label";
  std::set<std::string> anomaly_values = {"anomaly"};
  std::optional<std::filesystem::path> analyst_csv;
  std::optional<std::string> analyst_label_column;
  std::optional<std::set<std::string>> analyst_anomaly_values;
  std::optional<std::filesystem::path> analyst_cache_dir;

  EgmmConfig egmm;
  ForestConfig forest;
  EvalConfig eval;

  /// Pushes the top-level seed and thread count into the component configs.
  void finalize();
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Parses JSON text; relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace sfe::cli
