#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "umfi/cli.hpp"
#include "umfi/error.hpp"

using namespace umfi;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

// y = x1 + 0.5 x2 + noise, x3 a noisy copy of x1.
std::string write_data(const testing::TempDir& dir, std::size_t n = 120) {
  const Dataset d = testing::regression_data(n, 3, 21, [](const Matrix& x, std::size_t i, Rng& rng) {
    return x(i, 0) + 0.5 * x(i, 1) + 0.1 * rng.normal();
  });
  Matrix x = d.features();
  for (std::size_t i = 0; i < n; ++i) x(i, 2) = x(i, 0) + 0.3 * x(i, 2);
  const Dataset out(x, d.feature_names(), d.response(), "y");
  const auto path = (dir / "data.csv").string();
  write_csv(out, path);
  return path;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const char* value) : name_(name) { ::setenv(name, value, 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

TEST_CASE("help exits 0, usage problems exit 1, data problems exit 2") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"umfi", "--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"umfi", "--response", "y"}).code == 1);
  CHECK(run({"umfi", "--input", "x.csv", "--response", "y", "--method", "pca"}).code == 1);
  CHECK(run({"benchmark", "--synthetic", "--input", "x.csv"}).code == 1);
  CHECK(run({"simulate", "--design", "corr", "--methods", "shap"}).code == 1);
  CHECK(run({"umfi", "--input", "/no/such/file.csv", "--response", "y"}).code == 2);

  testing::TempDir dir;
  const auto data = write_data(dir);
  const auto missing = run({"umfi", "--input", data, "--response", "nope"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("MissingColumn") != std::string::npos);
}

TEST_CASE("umfi writes a JSON report to stdout or to a file") {
  testing::TempDir dir;
  const auto data = write_data(dir);
  const auto r = run({"umfi", "--input", data, "--response", "y", "--trees", "30", "--no-timing"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["method"] == "UMFI_OT");
  CHECK(j["trainings"] == 6);
  CHECK(j["seed"] == 42);
  CHECK(j["scores"]["x1"].get<double>() > j["scores"]["x3"].get<double>());

  const auto path = (dir / "report.json").string();
  const auto lr = run({"umfi", "--input", data, "--response", "y", "--method", "lr", "--trees", "30", "--json", path});
  REQUIRE(lr.code == 0);
  CHECK(lr.out.empty());
  CHECK(nlohmann::json::parse(read_file(path))["method"] == "UMFI_LR");
}

TEST_CASE("outputs are byte-identical across runs and thread counts") {
  testing::TempDir dir;
  const auto data = write_data(dir);
  const std::vector<std::string> base{"mci", "--input", data, "--response", "y", "--trees", "20", "--no-timing"};
  auto with_threads = [&](const std::string& t) {
    auto args = base;
    args.insert(args.end(), {"--threads", t});
    return run(args);
  };
  const auto a = with_threads("1");
  const auto b = with_threads("1");
  const auto c = with_threads("3");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
  CHECK(nlohmann::json::parse(a.out)["trainings"] == 7);
}

TEST_CASE("seed comes from --seed, then UMFI_SEED, then 42") {
  testing::TempDir dir;
  const auto data = write_data(dir);
  const std::vector<std::string> args{"umfi", "--input", data, "--response", "y", "--trees", "10"};
  CHECK(nlohmann::json::parse(run(args).out)["seed"] == 42);
  {
    ScopedEnv env("UMFI_SEED", "77");
    CHECK(nlohmann::json::parse(run(args).out)["seed"] == 77);
    auto explicit_seed = args;
    explicit_seed.insert(explicit_seed.end(), {"--seed", "5"});
    CHECK(nlohmann::json::parse(run(explicit_seed).out)["seed"] == 5);
  }
  {
    ScopedEnv env("UMFI_SEED", "abc");
    CHECK(run(args).code == 1);
  }
}

TEST_CASE("mci k3 mode records its subset limit") {
  testing::TempDir dir;
  const auto data = write_data(dir);
  const auto r = run({"mci", "--input", data, "--response", "y", "--mode", "k3", "--max-subset-size", "2", "--trees", "10"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["method"] == "MCI_K3");
  CHECK(j["trainings"] == 3 + 3);
  CHECK(j["metadata"]["max_subset_size"] == "2");
}

TEST_CASE("remove-deps writes the other features with their original headers") {
  testing::TempDir dir;
  const auto data = write_data(dir);
  const auto out = (dir / "clean.csv").string();
  const auto r = run({"remove-deps", "--input", data, "--response", "y", "--protected", "x1", "--output", out});
  REQUIRE(r.code == 0);
  const auto table = parse_feature_table(read_file(out));
  CHECK(table.names == std::vector<std::string>{"x2", "x3"});
  CHECK(table.values.rows() == 120);
  CHECK(run({"remove-deps", "--input", data, "--protected", "nope", "--output", out}).code == 2);
}

TEST_CASE("diagnose reports predictability for the requested features") {
  testing::TempDir dir;
  const auto data = write_data(dir, 200);
  const auto r = run({"diagnose", "--input", data, "--response", "y", "--features", "x1", "--trees", "30"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["features"].size() == 1);
  CHECK(j["features"][0]["protected"] == "x1");
  CHECK(j["features"][0]["predictability_raw"].get<double>() > 0.5);
  CHECK(j["features"][0].contains("predictability_ot"));
  CHECK(j["features"][0].contains("predictability_lr"));
}

TEST_CASE("simulate writes a summary and per-replication points") {
  testing::TempDir dir;
  const auto json = (dir / "sim.json").string();
  const auto csv = (dir / "points.csv").string();
  const auto r = run({"simulate", "--design", "xor", "--reps", "2", "--n", "80", "--methods", "umfi-ot,umfi-lr",
                      "--trees", "10", "--json", json, "--csv-points", csv, "--threads", "2"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(read_file(json));
  CHECK(j["seed"] == 42);
  const auto points = read_file(csv);
  CHECK(std::count(points.begin(), points.end(), '\n') == 1 + 2 * 2 * 4);
}

TEST_CASE("benchmark times MCI only up to its limit") {
  testing::TempDir dir;
  const auto csv = (dir / "bench.csv").string();
  const auto r = run({"benchmark", "--synthetic", "--synthetic-n", "60", "--synthetic-p", "8", "--p-range", "2..3,6",
                      "--mci-max-p", "3", "--trees", "10", "--csv", csv, "--no-timing"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["points"].size() == 3);
  CHECK(j["points"][0]["trainings_mci"] == 3);
  CHECK(j["points"][1]["trainings_mci"] == 7);
  CHECK(j["points"][2]["mci_run"] == false);
  CHECK(j["points"][2]["trainings_umfi"] == 12);
  CHECK(read_file(csv).rfind("p,mci_run", 0) == 0);

  const auto too_many = run({"benchmark", "--synthetic", "--synthetic-p", "5", "--p-range", "9", "--trees", "5"});
  CHECK(too_many.code == 2);
  CHECK(too_many.err.find("RangeExceedsFeatures") != std::string::npos);
}

TEST_CASE("run_benchmark rejects a range beyond the available features") {
  const Dataset d = synthetic_benchmark_dataset(40, 4, SeedSpec(1));
  const std::vector<std::size_t> p{2, 5};
  try {
    run_benchmark(d, p, SeedSpec(1));
    FAIL("expected RangeExceedsFeatures");
  } catch (const UmfiError& e) {
    CHECK(e.code() == ErrorCode::kRangeExceedsFeatures);
  }
}

TEST_CASE("benchmark subsets are seeded and distinct features") {
  const Dataset d = synthetic_benchmark_dataset(50, 10, SeedSpec(2));
  BenchmarkOptions options;
  options.forest.n_trees = 5;
  options.mci_max_p = 0;
  const std::vector<std::size_t> p{4, 6};
  const auto a = run_benchmark(d, p, SeedSpec(3), options);
  const auto b = run_benchmark(d, p, SeedSpec(3), options);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a.points[k].features == b.points[k].features);
    auto f = a.points[k].features;
    std::sort(f.begin(), f.end());
    CHECK(std::adjacent_find(f.begin(), f.end()) == f.end());
    CHECK(f.size() == p[k]);
  }
}
