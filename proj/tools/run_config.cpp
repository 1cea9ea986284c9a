#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace sfe::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where)
{
  if (!obj.is_object())
    throw ConfigError(fmt::format("'{}' must be an object", where));
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      ok = ok || key == a;
    if (!ok)
      throw ConfigError(fmt::format("unknown config key '{}{}'", where.empty() ? "" : where + ".", key));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out)
{
  if (obj.contains(key))
    out = obj.at(key).get<T>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

} // namespace

void RunConfig::finalize()
{
  egmm.seed = mix_seed(seed, 1);
  forest.seed = mix_seed(seed, 2);
  eval.seed = mix_seed(seed, 3);
  eval.threads = threads == 0 ? default_threads() : threads;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir)
{
  RunConfig cfg;
  try {
    const json doc = json::parse(text);
    reject_unknown(doc, {"seed", "threads", "data", "egmm", "forest", "eval"}, "");
    if (doc.contains("seed")) {
      cfg.seed = doc.at("seed").get<std::uint64_t>();
      cfg.seed_given = true;
    }
    read(doc, "threads", cfg.threads);

    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      reject_unknown(d,
                     {"label_column", "anomaly_values", "analyst_csv", "analyst_label_column",
                      "analyst_anomaly_values", "analyst_cache_dir"},
                     "data");
      read(d, "label_column", cfg.label_column);
      read(d, "anomaly_values", cfg.anomaly_values);
      if (d.contains("analyst_csv"))
        cfg.analyst_csv = resolve(base_dir, d.at("analyst_csv").get<std::string>());
      if (d.contains("analyst_label_column"))
        cfg.analyst_label_column = d.at("analyst_label_column").get<std::string>();
      if (d.contains("analyst_anomaly_values"))
        cfg.analyst_anomaly_values = d.at("analyst_anomaly_values").get<std::set<std::string>>();
      if (d.contains("analyst_cache_dir"))
        cfg.analyst_cache_dir = resolve(base_dir, d.at("analyst_cache_dir").get<std::string>());
    }

    if (doc.contains("egmm")) {
      const auto& e = doc.at("egmm");
      reject_unknown(e, {"members_per_k", "component_counts", "retention_quantile", "em_max_iters", "em_tol"},
                     "egmm");
      read(e, "members_per_k", cfg.egmm.members_per_k);
      read(e, "component_counts", cfg.egmm.component_counts);
      read(e, "retention_quantile", cfg.egmm.retention_quantile);
      read(e, "em_max_iters", cfg.egmm.em_max_iters);
      read(e, "em_tol", cfg.egmm.em_tol);
    }

    if (doc.contains("forest")) {
      const auto& f = doc.at("forest");
      reject_unknown(f, {"tree_count", "max_depth", "min_leaf", "features_per_split"}, "forest");
      read(f, "tree_count", cfg.forest.tree_count);
      read(f, "max_depth", cfg.forest.max_depth);
      read(f, "min_leaf", cfg.forest.min_leaf);
      if (f.contains("features_per_split") && f.at("features_per_split").get<std::string>() != "sqrt")
        throw ConfigError("forest.features_per_split supports only \"sqrt\"");
    }

    if (doc.contains("eval")) {
      const auto& v = doc.at("eval");
      reject_unknown(v,
                     {"top_fraction", "max_prefix", "thresholds", "random_repeats", "methods", "oracle_detector",
                      "opt_oracle_cap"},
                     "eval");
      read(v, "top_fraction", cfg.eval.top_fraction);
      if (v.contains("max_prefix"))
        cfg.eval.max_prefix = v.at("max_prefix").get<int>();
      read(v, "random_repeats", cfg.eval.random_repeats);
      read(v, "opt_oracle_cap", cfg.eval.opt_oracle_cap);
      if (v.contains("oracle_detector"))
        cfg.eval.detector_mode =
            v.at("oracle_detector").get<bool>() ? DetectorMode::OracleDetector : DetectorMode::Egmm;
      if (v.contains("thresholds")) {
        // Either [tau, ...] (uniform) or [{"tau": t, "p": p}, ...].
        const auto& t = v.at("thresholds");
        ThresholdDistribution dist;
        if (t.is_array() && !t.empty() && t.front().is_object()) {
          for (const auto& e : t) {
            reject_unknown(e, {"tau", "p"}, "eval.thresholds[]");
            dist.support.emplace_back(e.at("tau").get<double>(), e.at("p").get<double>());
          }
        } else {
          const auto taus = t.get<std::vector<double>>();
          dist = ThresholdDistribution::uniform(taus);
        }
        cfg.eval.thresholds = dist;
      }
      if (v.contains("methods")) {
        cfg.eval.methods.clear();
        for (const auto& name : v.at("methods").get<std::vector<std::string>>()) {
          const auto m = parse_method(name);
          if (!m)
            throw ConfigError(fmt::format("unknown method '{}' in eval.methods", name));
          cfg.eval.methods.push_back(*m);
        }
      }
    }
    cfg.egmm.validate();
    cfg.forest.validate();
    cfg.eval.validate();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid config: {}", e.what()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("invalid config: {}", e.what()));
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError(fmt::format("cannot open config {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

} // namespace sfe::cli
