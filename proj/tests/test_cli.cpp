#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ontic/parallel.hpp"
#include "ontic/scenario.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

using namespace ontic;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ontic-test-cli-" + name);
  fs::remove_all(p);
  return p;
}

RunOptions quiet() {
  RunOptions o;
  o.write_artifacts = false;
  return o;
}

json small_gaussian() {
  return json::parse(R"({
    "name": "small",
    "hbar": 1.0,
    "seed": 4,
    "samples": 20000,
    "grid": {"axes": [{"lower": -10, "upper": 10, "points": 256}]},
    "state": {"family": "gaussian", "centre": 0, "sigma": 1.1},
    "tasks": [{"type": "uncertainty", "mc": true, "gate": {"product": "hbar/2", "rel_tol": 1e-5}}]
  })");
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(ONTIC_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("catalog") {
  const auto all = bundled_scenarios();
  CHECK(all.size() >= 10);
  std::set<std::string> names;
  for (const auto& s : all) {
    names.insert(s.name);
    CHECK_FALSE(s.description.empty());
    CHECK(s.budget_seconds > 0);
  }
  for (const char* n : {"gaussian-uncertainty", "box-ground-state", "plane-wave", "theorem2-sweep", "free-packet-spreading",
                        "classical-limit", "born-rule", "angular-momentum-measurement", "correlation-split", "mu-invariance"})
    CHECK(names.count(n) == 1);

  const auto m = bundled_scenarios("measure");
  REQUIRE(m.size() == 2);
  CHECK(m[0].name == "angular-momentum-measurement");
  CHECK(m[1].name == "born-rule");
  CHECK(bundled_scenarios("MEASURE").size() == 2);
  CHECK(bundled_scenarios("no-such-thing").empty());
  CHECK_THROWS_AS(bundled_scenario("no-such-thing"), ConfigError);
}

TEST_CASE("every bundled scenario validates") {
  for (const auto& s : bundled_scenarios()) {
    INFO(s.name);
    const json sc = bundled_scenario(s.name);
    CHECK(sc["name"] == s.name);
    CHECK_NOTHROW(validate_scenario(sc, {}));
  }
}

TEST_CASE("malformed configs are rejected before anything is written") {
  const fs::path out = scratch("malformed");
  RunOptions o;
  o.out = out;
  auto rejects = [&](const json& sc, const std::string& fragment) {
    try {
      run_scenario(sc, o);
      FAIL("accepted a malformed scenario");
    } catch (const ConfigError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
    CHECK_FALSE(fs::exists(out));
  };
  json sc = small_gaussian();
  sc.erase("name");
  rejects(sc, "scenario.name");

  sc = small_gaussian();
  sc["tasks"][0]["gate"]["prodcut"] = 1;
  rejects(sc, "prodcut");

  sc = small_gaussian();
  sc["grid"]["axes"][0]["points"] = 2;
  rejects(sc, "points");

  sc = small_gaussian();
  sc["hbar"] = -1;
  rejects(sc, "hbar");

  sc = small_gaussian();
  sc["state"]["family"] = "lorentzian";
  rejects(sc, "lorentzian");

  sc = small_gaussian();
  sc["tasks"][0]["type"] = "teleport";
  rejects(sc, "teleport");

  sc = small_gaussian();
  sc["tasks"][0]["gate"]["product"] = "hbar/";
  rejects(sc, "product");

  // observables are at most quadratic in momentum
  sc = small_gaussian();
  sc["tasks"] = json::array({{{"type", "expectation"}, {"observable", "p^3"}}});
  rejects(sc, "observable");

  sc = small_gaussian();
  sc["tasks"] = json::array();
  rejects(sc, "tasks");

  sc = small_gaussian();
  sc["state"] = {{"family", "files"}, {"density_file", "/nonexistent/rho.csv"}};
  rejects(sc, "density_file");

  CHECK_THROWS_AS(read_scenario_file("/nonexistent/scenario.json"), ConfigError);
}

TEST_CASE("gaussian-uncertainty passes") {
  const RunResult r = run_scenario(bundled_scenario("gaussian-uncertainty"), quiet());
  CHECK(r.exit_code == kExitPass);
  const json& res = r.report["tasks"][0]["results"];
  CHECK(std::abs(res["product"].get<double>() - 0.5) < 1e-6 * 0.5);
  CHECK(r.report["schema"] == kReportSchema);
  CHECK(r.report["provenance"]["version"] == kVersion);
}

TEST_CASE("a failing gate gives exit 1") {
  json sc = small_gaussian();
  sc["tasks"][0]["gate"]["product"] = "hbar";
  const RunResult r = run_scenario(sc, quiet());
  CHECK(r.exit_code == kExitGateFailed);
  CHECK_FALSE(r.report["pass"].get<bool>());
}

TEST_CASE("a numerical failure gives exit 3 naming the module") {
  // a node line with a density gradient across it
  const json sc = json::parse(R"j({
    "name": "node",
    "grid": {"axes": [{"lower": -4, "upper": 4, "points": 33}, {"lower": -4, "upper": 4, "points": 32}]},
    "state": {"family": "expression", "density": "q0^2*exp(-(q0 - 1)^2 - q1^2)"},
    "tasks": [{"type": "correlation", "richardson": false}]
  })j");
  const RunResult r = run_scenario(sc, quiet());
  CHECK(r.exit_code == kExitNumerical);
  CHECK(r.report["abort"]["module"] == "correlation");
  CHECK(r.diagnostic.find("correlation::") == 0);
}

TEST_CASE("same seed, same report") {
  const json sc = small_gaussian();
  const unsigned saved = worker_cap();
  worker_cap() = 1;
  const std::string a = run_scenario(sc, quiet()).report.dump();
  worker_cap() = 4;
  const std::string b = run_scenario(sc, quiet()).report.dump();
  worker_cap() = saved;
  CHECK(a == b);

  RunOptions o = quiet();
  o.seed = 99;
  const RunResult c = run_scenario(sc, o);
  CHECK(c.report["provenance"]["seed"] == 99);
  CHECK(c.report.dump() != a);
  // the echoed scenario reproduces the run
  CHECK(run_scenario(c.report["scenario"], quiet()).report.dump() == c.report.dump());
}

TEST_CASE("sample override reaches every task") {
  json sc = small_gaussian();
  sc["tasks"][0]["samples"] = 50000;
  RunOptions o = quiet();
  o.samples = 3000;
  const RunResult r = run_scenario(sc, o);
  CHECK(r.report["tasks"][0]["results"]["mc"]["samples"] == 3000);
}

TEST_CASE("artifacts") {
  const fs::path out = scratch("artifacts");
  const json sc = json::parse(R"({
    "name": "packet",
    "grid": {"axes": [{"lower": -20, "upper": 20, "points": 256, "boundary": "periodic"}]},
    "state": {"family": "gaussian", "sigma": 1, "momentum": 0.5},
    "output": {"formats": ["json", "csv"]},
    "tasks": [{"type": "evolve", "name": "free", "T": 2, "dt": 0.05, "record_stride": 10, "snapshot_stride": 20,
               "oracle": {"kind": "free_gaussian", "sigma": 1, "momentum": 0.5}}]
  })");
  RunOptions o;
  o.out = out;
  const RunResult r = run_scenario(sc, o);
  CHECK(r.exit_code == kExitPass);
  CHECK(fs::exists(out / "report.json"));
  std::ifstream series(out / "free_series.csv");
  std::string header;
  std::getline(series, header);
  CHECK(header == "time,norm,energy,mean_q0,mean_p0");
  CHECK(fs::exists(out / "free_snapshot_0000.csv"));
  CHECK(fs::exists(out / "free_snapshot_0002.csv"));
  const json rep = json::parse(std::ifstream(out / "report.json"));
  CHECK(rep == r.report);
  fs::remove_all(out);
}

TEST_CASE("command line") {
  CHECK(run_cli("--list") == 0);
  CHECK(run_cli("--list --filter nothing-matches") == 0);
  CHECK(run_cli("--config /nonexistent.json") == kExitConfig);
  CHECK(run_cli("--bogus-flag") == kExitConfig);
  CHECK(run_cli("") == kExitConfig);

  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "broken.json") << "{\"name\": \"x\", \"tasks\": [";
  CHECK(run_cli("--config " + (dir / "broken.json").string() + " --out " + (dir / "out").string()) == kExitConfig);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(run_cli("--scenario box-ground-state --out " + (dir / "box").string()) == 0);
  CHECK(fs::exists(dir / "box" / "report.json"));
  fs::remove_all(dir);
}
