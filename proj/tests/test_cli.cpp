#include <doctest.h>

#include <sstream>

#include <fmt/format.h>

#include "cli.hpp"
#include "run_config.hpp"
#include "sfe/data.hpp"
#include "test_support.hpp"

using namespace sfe;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args)
{
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_dataset(const Dataset& d, const std::filesystem::path& p) { write_csv(d, p, "label"); }

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> lines(const std::string& s)
{
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);)
    out.push_back(line);
  return out;
}

constexpr const char* kSmallConfig = R"({
  "seed": 5,
  "threads": 1,
  "data": {"analyst_csv": "mother.csv"},
  "egmm": {"members_per_k": 2},
  "forest": {"tree_count": 15},
  "eval": {"random_repeats": 5}
})";

} // namespace

TEST_CASE("fit prints the retained member count and is byte-reproducible")
{
  test::TempDir dir("cli_fit");
  Rng rng = make_rng(1);
  write_dataset(test::shifted_feature_dataset(280, 20, 9, 2, 6.0, rng), dir / "shuttle.csv");

  const Result r = run_cli({"fit", (dir / "shuttle.csv").string(), "--out", (dir / "a.json").string(), "--seed", "3"});
  REQUIRE(r.code == 0);
  int retained = 0, trained = 0;
  REQUIRE(std::sscanf(r.out.c_str(), "retained %d of %d members", &retained, &trained) == 2);
  CHECK(trained == 45);
  CHECK(retained >= 41);

  REQUIRE(run_cli({"fit", (dir / "shuttle.csv").string(), "--out", (dir / "b.json").string(), "--seed", "3",
                   "--threads", "3"})
              .code == 0);
  CHECK(test::read_text(dir / "a.json") == test::read_text(dir / "b.json"));
}

TEST_CASE("fit on a CSV without the label column fails with a clear message")
{
  test::TempDir dir("cli_corrupt");
  test::write_text(dir / "bad.csv", "a,b\n1,2\n3,4\n");
  const Result r = run_cli({"fit", (dir / "bad.csv").string(), "--out", (dir / "m.json").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("missing column 'label'") != std::string::npos);
  CHECK(!std::filesystem::exists(dir / "m.json"));
}

TEST_CASE("a defaulted seed is logged")
{
  test::TempDir dir("cli_seed_note");
  Rng rng = make_rng(2);
  write_dataset(test::shifted_feature_dataset(90, 10, 2, 0, 6.0, rng), dir / "d.csv");
  const Result r = run_cli({"fit", (dir / "d.csv").string(), "--out", (dir / "m.json").string()});
  CHECK(r.code == 0);
  CHECK(r.err.find("no seed given; using default seed 0") != std::string::npos);
}

TEST_CASE("explain writes k indices per row and puts a 10-sigma feature first")
{
  test::TempDir dir("cli_explain");
  Rng rng = make_rng(3);
  Dataset train = test::shifted_feature_dataset(300, 0, 7, 0, 0.0, rng);
  train.labels[0] = Label::Anomaly;
  write_dataset(train, dir / "train.csv");

  Dataset query = test::shifted_feature_dataset(95, 5, 7, 4, 10.0, rng);
  write_dataset(query, dir / "query.csv");

  REQUIRE(run_cli({"fit", (dir / "train.csv").string(), "--out", (dir / "m.json").string(), "--seed", "1"}).code ==
          0);
  const Result r = run_cli({"explain", (dir / "m.json").string(), (dir / "query.csv").string(), "--method",
                            "seqmarg", "--k", "3", "--out", (dir / "e.csv").string(), "--seed", "1"});
  REQUIRE(r.code == 0);
  const auto rows = lines(test::read_text(dir / "e.csv"));
  REQUIRE(rows.size() >= 2);
  CHECK(rows[0] == "point_index,method,order,step_scores");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> fields;
    std::istringstream in(rows[i]);
    for (std::string f; std::getline(in, f, ',');)
      fields.push_back(f);
    REQUIRE(fields.size() == 4);
    CHECK(fields[1] == "seqmarg");
    CHECK(std::count(fields[2].begin(), fields[2].end(), ';') == 2);
    CHECK(fields[2].substr(0, 2) == "4;");
  }

  const Result pts = run_cli({"explain", (dir / "m.json").string(), (dir / "query.csv").string(), "--method",
                              "inddo", "--points", "96,3", "--out", (dir / "p.csv").string(), "--seed", "1"});
  REQUIRE(pts.code == 0);
  const auto prow = lines(test::read_text(dir / "p.csv"));
  REQUIRE(prow.size() == 3);
  CHECK(prow[1].rfind("96,inddo,4;", 0) == 0);
  CHECK(prow[2].rfind("3,inddo,", 0) == 0);
}

TEST_CASE("explain rejects unknown methods with the valid list")
{
  test::TempDir dir("cli_method");
  const Result r = run_cli({"explain", (dir / "m.json").string(), (dir / "d.csv").string(), "--method",
                            "frobnicate", "--out", (dir / "e.csv").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("indmarg, seqmarg, inddo, seqdo, random") != std::string::npos);
}

TEST_CASE("evaluate writes one summary row per method and is reproducible")
{
  test::TempDir dir("cli_evaluate");
  Rng rng = make_rng(4);
  write_dataset(test::shifted_feature_dataset(180, 20, 4, 1, 8.0, rng), dir / "bench.csv");
  write_dataset(test::shifted_feature_dataset(400, 80, 4, 1, 8.0, rng), dir / "mother.csv");
  test::write_text(dir / "cfg.json", kSmallConfig);

  const auto eval = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args = {"evaluate", (dir / "bench.csv").string(), "--config",
                                     (dir / "cfg.json").string(), "--out-dir", (dir / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  };

  const Result a = eval("a", {});
  REQUIRE(a.code == 0);
  CHECK(a.err.find("no seed given") == std::string::npos);
  const std::string summary = test::read_text(dir / "a" / "summary.csv");
  CHECK(count_lines(summary) == 7);
  for (const char* name : {"SeqMarg,", "IndMarg,", "SeqDO,", "IndDO,", "Random,", "OptOracle,"})
    CHECK(summary.find(name) != std::string::npos);
  CHECK(a.out.find("OptOracle") != std::string::npos);

  REQUIRE(eval("b", {}).code == 0);
  CHECK(test::read_text(dir / "b" / "summary.csv") == summary);
  CHECK(test::read_text(dir / "b" / "per_point.csv") == test::read_text(dir / "a" / "per_point.csv"));

  const Result two = eval("c", {"--method", "seqmarg,random"});
  REQUIRE(two.code == 0);
  CHECK(count_lines(test::read_text(dir / "c" / "summary.csv")) == 3);

  const Result star = eval("d", {"--oracle-detector", "--method", "seqmarg,indmarg,random"});
  REQUIRE(star.code == 0);
  const std::string s = test::read_text(dir / "d" / "summary.csv");
  CHECK(s.find("SeqMarg*,") != std::string::npos);
  CHECK(s.find("IndMarg*,") != std::string::npos);
  CHECK(s.find("Random,") != std::string::npos);

  CHECK(eval("e", {"--method", "bogus"}).code == 2);
}

TEST_CASE("config files reject unknown keys")
{
  test::TempDir dir("cli_config");
  test::write_text(dir / "cfg.json", R"({"seed": 1, "egmm": {"members": 3}})");
  CHECK_THROWS_AS(cli::load_run_config(dir / "cfg.json"), cli::ConfigError);
  test::write_text(dir / "d.csv", "a,label\n1,normal\n2,anomaly\n");
  const Result r = run_cli({"fit", (dir / "d.csv").string(), "--config", (dir / "cfg.json").string(), "--out",
                            (dir / "m.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("members") != std::string::npos);

  const cli::RunConfig cfg = cli::parse_run_config(R"({"seed": 9, "eval": {"thresholds": [0.2, 0.4]}})", dir.path);
  CHECK(cfg.seed == 9);
  CHECK(cfg.eval.thresholds.support.size() == 2);
}

TEST_CASE("benchgen samples the requested composition deterministically")
{
  test::TempDir dir("cli_benchgen");
  std::string mother = "x,y,class\n";
  for (int i = 0; i < 200; ++i)
    mother += fmt::format("{},{},{}\n", i, i * 0.5, i < 150 ? "a" : "b");
  test::write_text(dir / "mother.csv", mother);

  const auto gen = [&](const std::string& out, const std::string& cls) {
    return run_cli({"benchgen", (dir / "mother.csv").string(), "--anomaly-classes", cls, "--anomaly-fraction",
                    "0.05", "--size", "100", "--seed", "7", "--out", (dir / out).string()});
  };
  REQUIRE(gen("b1.csv", "b").code == 0);
  const Dataset d = load_csv(dir / "b1.csv", "label", {"anomaly"});
  CHECK(d.size() == 100);
  CHECK(d.anomaly_count() == 5);
  REQUIRE(gen("b2.csv", "b").code == 0);
  CHECK(test::read_text(dir / "b1.csv") == test::read_text(dir / "b2.csv"));

  const Result missing = gen("b3.csv", "zebra");
  CHECK(missing.code != 0);
  CHECK(!missing.err.empty());
}
