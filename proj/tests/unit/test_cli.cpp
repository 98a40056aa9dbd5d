#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "commands.hpp"
#include "config.hpp"
#include "doctest.h"
#include "gestimate/error.hpp"
#include "json.hpp"
#include "report.hpp"

using namespace gestimate;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gestimate_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return (path / name).string();
  }
  std::string read(const std::string& name) const {
    std::ifstream in(path / name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static inline int counter = 0;
};

int run(const std::string& cmd, const std::string& cfg, const TempDir& d, const std::string& out = "out") {
  cli::CommandOptions o;
  o.output_dir = (d.path / out).string();
  return cli::run_command(cmd, cfg, o);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown configuration keys are rejected") {
    CHECK_THROWS_AS(cli::parse_config(R"({"scenario": {"name": "null", "size": 10}})"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config(R"({"colour": 1})"), ConfigError);
    TempDir d;
    std::string cfg = d.write("c.json", R"({"scenario": {"name": "null", "nn": 10}})");
    CHECK(run("simulate", cfg, d) == 2);
    auto err = nlohmann::json::parse(d.read("out/error.json"));
    CHECK(err["error"]["type"] == "config");
  }

  TEST_CASE("simulate then fit round trip") {
    TempDir d;
    std::string sim = d.write("sim.json", R"({"scenario": {"name": "point-confounded", "n": 500}, "seed": 4})");
    REQUIRE(run("simulate", sim, d, "sim") == 0);
    CHECK(fs::exists(d.path / "sim" / "panel.csv"));
    CHECK(fs::exists(d.path / "sim" / "truth.json"));
    REQUIRE(run("fit", (d.path / "sim" / "analysis.json").string(), d, "fit") == 0);
    auto rep = nlohmann::json::parse(d.read("fit/report.json"));
    CHECK(std::abs(rep["result"]["psi"][0].get<double>() - 1.0) < 0.3);
    CHECK(rep["result"].contains("cov"));
    CHECK(rep.contains("overlap"));
  }

  TEST_CASE("survival methods need a survival panel") {
    TempDir d;
    std::string sim = d.write("sim.json", R"({"scenario": {"name": "point-confounded", "n": 100}})");
    REQUIRE(run("simulate", sim, d, "sim") == 0);
    auto cfg = nlohmann::json::parse(d.read("sim/analysis.json"));
    cfg["input"]["path"] = (d.path / "sim" / "panel.csv").string();
    cfg["estimator"] = {{"method", "saftm"}, {"grid", {{{"lo", -1}, {"hi", 1}, {"points", 5}}}}};
    CHECK(run("fit", d.write("fit.json", cfg.dump()), d, "fit") == 2);
  }

  TEST_CASE("missing panel file is a data error") {
    TempDir d;
    std::string cfg = d.write("fit.json", R"({"input": {"path": "absent.csv"},
      "model": {"blip": [{"expr": "A", "target": 1, "source": 0, "psi": 0}]},
      "estimator": {"method": "smm-identity"}})");
    CHECK(run("fit", cfg, d) == 2);
  }

  TEST_CASE("report writer prints round-trip floats and nulls") {
    cli::ordered_json j;
    j["x"] = 0.1;
    j["bad"] = NAN;
    j["v"] = {1.0, 2.5};
    std::string s = cli::dump(j);
    CHECK(s.find("0.10000000000000001") != std::string::npos);
    CHECK(s.find("null") != std::string::npos);
    CHECK(cli::num(NAN).empty());
    CHECK(std::stod(cli::num(1.0 / 3.0)) == 1.0 / 3.0);
  }

  TEST_CASE("log level must be one of the documented values") {
    std::string line = std::string("GESTIMATE_LOG=verbose ") + GESTIMATE_EXE + " simulate --config /dev/null >/dev/null 2>&1";
    int rc = std::system(line.c_str());
    CHECK(WEXITSTATUS(rc) == 2);
    std::string bad = std::string(GESTIMATE_EXE) + " estimate >/dev/null 2>&1";
    CHECK(WEXITSTATUS(std::system(bad.c_str())) == 2);
  }

  TEST_CASE("benchmark tables carry the variance ratio") {
    TempDir d;
    std::string cfg = d.write("b.json", R"({"scenario": {"name": "near-positivity", "n": 400, "reps": 10,
      "estimators": ["matched", "ipw-msm"]}})");
    REQUIRE(run("benchmark", cfg, d) == 0);
    std::string var = d.read("out/variance.csv");
    CHECK(var.find("analytic") != std::string::npos);
    CHECK(var.find("ipw-msm") != std::string::npos);
    CHECK(fs::exists(d.path / "out" / "mc_summary.csv"));
  }
}
