#include "cli.hpp"

#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "run_config.hpp"
#include "sfe/analyst.hpp"
#include "sfe/data.hpp"
#include "sfe/density.hpp"
#include "sfe/evaluate.hpp"
#include "sfe/explain.hpp"
#include "sfe/model_io.hpp"

namespace sfe::cli {

namespace {

class UsageError : public Error {
public:
  using Error::Error;
};

constexpr Method kExplainMethods[] = {Method::IndMarg, Method::SeqMarg, Method::IndDO, Method::SeqDO,
                                      Method::Random};

Method parse_explain_method(const std::string& name)
{
  for (Method m : kExplainMethods)
    if (method_key(m) == name)
      return m;
  std::vector<std::string_view> keys;
  for (Method m : kExplainMethods)
    keys.push_back(method_key(m));
  throw UsageError(fmt::format("unknown method '{}'; valid methods: {}", name, fmt::join(keys, ", ")));
}

std::vector<std::string> split_list(const std::string& s)
{
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty())
      out.push_back(item);
  return out;
}

/// Flags shared by the subcommands; values left unset keep the config's.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> top_fraction;
  std::optional<int> k;
  std::optional<std::string> label_column;
  bool oracle_detector = false;

  void add_to(CLI::App& app, bool with_eval_flags)
  {
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "top-level seed");
    app.add_option("--threads", threads, "worker threads (default: available parallelism)");
    app.add_option("--label-column", label_column, "label column name");
    if (with_eval_flags) {
      app.add_option("--top-fraction", top_fraction, "fraction of top-ranked points to explain");
      app.add_option("--k", k, "explanation length");
      app.add_flag("--oracle-detector", oracle_detector, "use the analyst as the detector");
    }
  }

  RunConfig resolve(std::ostream& err) const
  {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.seed_given = true;
    }
    if (!cfg.seed_given)
      err << fmt::format("note: no seed given; using default seed {}\n", cfg.seed);
    if (threads)
      cfg.threads = *threads;
    if (top_fraction)
      cfg.eval.top_fraction = *top_fraction;
    if (k)
      cfg.eval.max_prefix = *k;
    if (label_column)
      cfg.label_column = *label_column;
    if (oracle_detector)
      cfg.eval.detector_mode = DetectorMode::OracleDetector;
    cfg.finalize();
    cfg.eval.validate();
    return cfg;
  }
};

int cmd_fit(const std::string& csv, const Overrides& o, const std::string& model_out, std::ostream& out,
            std::ostream& err)
{
  const RunConfig cfg = o.resolve(err);
  const Dataset data = load_csv(csv, cfg.label_column, cfg.anomaly_values);
  data.validate();
  const EgmmModel model = egmm_fit(data.points, cfg.egmm, cfg.eval.threads);
  save_egmm(model, model_out);
  out << fmt::format("retained {} of {} members\n", model.members.size(), model.trained_members);
  return 0;
}

int cmd_explain(const std::string& model_path, const std::string& csv, const std::string& method_name_arg,
                const std::string& points_arg, const Overrides& o, const std::string& out_csv, std::ostream& out,
                std::ostream& err)
{
  const Method method = parse_explain_method(method_name_arg);
  const RunConfig cfg = o.resolve(err);
  const EgmmModel model = load_egmm(model_path);
  const Dataset data = load_csv(csv, cfg.label_column, cfg.anomaly_values);
  if (data.dim() != model.dim())
    throw Error(fmt::format("data has {} features but the model expects {}", data.dim(), model.dim()));

  const int n = static_cast<int>(data.dim());
  const int k = cfg.eval.max_prefix.value_or(n);
  if (k < 1 || k > n)
    throw UsageError(fmt::format("--k must lie in [1, {}]", n));

  std::vector<std::size_t> points;
  if (!points_arg.empty()) {
    for (const auto& item : split_list(points_arg)) {
      const auto idx = std::stoull(item);
      if (idx >= static_cast<std::size_t>(data.size()))
        throw UsageError(fmt::format("point index {} out of range", idx));
      points.push_back(idx);
    }
  } else {
    points = select_evaluation_anomalies(rank_points(model, data.points), data.labels, cfg.eval.top_fraction);
  }

  const DensityFn f = make_detector(DetectorMode::Egmm, &model, nullptr);
  std::ostringstream rows;
  rows << sfe_csv_header() << '\n';
  for (std::size_t idx : points) {
    const Eigen::VectorXd x = data.points.row(static_cast<Eigen::Index>(idx)).transpose();
    const Sfe sfe = explain(method, f, x, k, mix_seed(cfg.eval.seed, idx, 0));
    rows << sfe_csv_row(idx, sfe) << '\n';
  }
  std::ofstream file(out_csv, std::ios::binary);
  file << rows.str();
  if (!file)
    throw Error(fmt::format("cannot write {}", out_csv));
  out << fmt::format("wrote {} explanations to {}\n", points.size(), out_csv);
  return 0;
}

int cmd_evaluate(const std::string& csv, const Overrides& o, const std::string& methods_arg,
                 const std::string& out_dir, std::ostream& out, std::ostream& err)
{
  RunConfig cfg = o.resolve(err);
  if (!methods_arg.empty()) {
    cfg.eval.methods.clear();
    for (const auto& name : split_list(methods_arg)) {
      const auto m = parse_method(name);
      if (!m)
        throw UsageError(fmt::format("unknown method '{}'; valid methods: indmarg, seqmarg, inddo, seqdo, "
                                     "random, optoracle",
                                     name));
      cfg.eval.methods.push_back(*m);
    }
  }
  const Dataset benchmark = load_csv(csv, cfg.label_column, cfg.anomaly_values);
  benchmark.validate();

  Dataset training;
  if (cfg.analyst_csv) {
    const Dataset mother = load_csv(*cfg.analyst_csv, cfg.analyst_label_column.value_or(cfg.label_column),
                                    cfg.analyst_anomaly_values.value_or(cfg.anomaly_values));
    training = exclude_matching_rows(mother, benchmark);
    if (training.anomaly_count() == 0 || training.normal_count() == 0) {
      err << "warning: excluding benchmark points leaves one class; training the analyst on all mother-set points\n";
      training = mother;
    }
  } else {
    err << "warning: no analyst_csv configured; training the analyst on the benchmark itself\n";
    training = benchmark;
  }

  const Analyst analyst(std::move(training), cfg.forest, cfg.analyst_cache_dir);
  const EvaluationReport report = run_evaluation(benchmark, analyst, cfg.egmm, cfg.eval);
  write_report(report, out_dir);

  out << fmt::format("{:<12} {:>10} {:>10} {:>6} {:>9}\n", "method", "mean", "ci95", "n", "censored");
  for (const auto& s : report.per_method)
    out << fmt::format("{:<12} {:>10.4f} {:>10.4f} {:>6} {:>9}\n", s.name, s.mean, s.ci95, s.n_anomalies,
                       s.censored_count);
  return 0;
}

int cmd_benchgen(const std::string& mother_csv, const std::string& label_column, const std::string& classes,
                 double fraction, std::size_t size, std::uint64_t seed, const std::string& out_csv,
                 std::ostream& out)
{
  const ClassTable mother = load_class_table(mother_csv, label_column);
  BenchmarkSpec spec;
  for (const auto& c : split_list(classes))
    spec.anomaly_classes.insert(c);
  spec.anomaly_fraction = fraction;
  spec.target_size = size;
  spec.seed = seed;
  const Benchmark bench = sample_benchmark(mother, spec);
  write_csv(bench.data, out_csv, "label");
  out << fmt::format("wrote {} points ({} anomalies) to {}\n", bench.data.size(), bench.data.anomaly_count(),
                     out_csv);
  return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Sequential feature explanations for density-based anomaly detection"};
  app.require_subcommand(1);

  Overrides fit_o, explain_o, eval_o;
  std::string fit_csv, fit_out;
  auto* fit = app.add_subcommand("fit", "fit the ensemble density and write a model file");
  fit->add_option("csv", fit_csv, "input CSV")->required();
  fit->add_option("--out", fit_out, "model output path")->required();
  fit_o.add_to(*fit, false);

  std::string ex_model, ex_csv, ex_method, ex_points, ex_out;
  auto* ex = app.add_subcommand("explain", "write one explanation row per top-ranked anomaly");
  ex->add_option("model", ex_model, "model file from `fit`")->required();
  ex->add_option("csv", ex_csv, "input CSV")->required();
  ex->add_option("--method", ex_method, "indmarg, seqmarg, inddo, seqdo or random")->required();
  ex->add_option("--points", ex_points, "comma-separated point indices (default: top-ranked anomalies)");
  ex->add_option("--out", ex_out, "output CSV")->required();
  explain_o.add_to(*ex, true);

  std::string ev_csv, ev_methods, ev_out;
  auto* ev = app.add_subcommand("evaluate", "run the full evaluation and write summary + per-point CSVs");
  ev->add_option("csv", ev_csv, "benchmark CSV")->required();
  ev->add_option("--method", ev_methods, "comma-separated methods (default: all six)");
  ev->add_option("--out-dir", ev_out, "output directory")->required();
  eval_o.add_to(*ev, true);

  std::string bg_csv, bg_label = "class", bg_classes, bg_out;
  double bg_fraction = 0.05;
  std::size_t bg_size = 100;
  std::uint64_t bg_seed = 0;
  auto* bg = app.add_subcommand("benchgen", "sample an anomaly benchmark from a labeled mother set");
  bg->add_option("mother_csv", bg_csv, "mother-set CSV")->required();
  bg->add_option("--label-column", bg_label, "class column of the mother set");
  bg->add_option("--anomaly-classes", bg_classes, "comma-separated classes treated as anomalies")->required();
  bg->add_option("--anomaly-fraction", bg_fraction, "anomaly proportion in (0, 1)");
  bg->add_option("--size", bg_size, "benchmark size");
  bg->add_option("--seed", bg_seed, "sampling seed");
  bg->add_option("--out", bg_out, "output CSV")->required();

  std::vector<std::string> argv_storage;
  argv_storage.emplace_back("sfe");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage)
    argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return 2;
  }

  try {
    if (*fit)
      return cmd_fit(fit_csv, fit_o, fit_out, out, err);
    if (*ex)
      return cmd_explain(ex_model, ex_csv, ex_method, ex_points, explain_o, ex_out, out, err);
    if (*ev)
      return cmd_evaluate(ev_csv, eval_o, ev_methods, ev_out, out, err);
    if (*bg)
      return cmd_benchgen(bg_csv, bg_label, bg_classes, bg_fraction, bg_size, bg_seed, bg_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

} // namespace sfe::cli
