#include "ontic/errors.hpp"
#include "ontic/parallel.hpp"
#include "ontic/scenario.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace {

void print_list(const std::string& filter) {
  for (const auto& s : ontic::bundled_scenarios(filter))
    std::cout << std::left << std::setw(30) << s.name << std::right << std::setw(6) << s.budget_seconds << " s  "
              << s.description << '\n';
}

void print_summary(const ontic::RunResult& r, double budget) {
  for (const auto& t : r.report["tasks"]) {
    std::cout << (t["pass"].get<bool>() ? "PASS " : "FAIL ") << t["name"].get<std::string>() << " ("
              << t["type"].get<std::string>() << ")\n";
    for (const auto& g : t["gates"]) {
      if (g["pass"].get<bool>()) continue;
      std::cout << "     gate " << g["name"].get<std::string>() << ": " << g["value"].dump();
      if (g.contains("limit")) std::cout << " > " << g["limit"].dump();
      std::cout << '\n';
    }
  }
  std::cout << "elapsed " << std::fixed << std::setprecision(2) << r.seconds << " s";
  if (budget > 0) std::cout << " (budget " << budget << " s)";
  std::cout << '\n';
  if (budget > 0 && r.seconds > budget) std::cerr << "warning: run exceeded its runtime budget\n";
  for (const auto& a : r.artifacts)
    if (a.filename() == "report.json") std::cout << "report " << a.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run epistemic-restriction scenarios and write JSON reports with CSV series."};
  std::string config, scenario, filter, show, out;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  unsigned workers = 0;
  bool list = false, quiet = false;
  app.add_option("--config", config, "scenario file (JSON)");
  app.add_option("--scenario", scenario, "bundled scenario name");
  app.add_flag("--list", list, "list the bundled scenarios");
  app.add_option("--filter", filter, "with --list: keep names or descriptions containing this text");
  app.add_option("--show", show, "print a bundled scenario file");
  auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
  auto* samples_opt = app.add_option("--samples", samples, "override every Monte Carlo sample count")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "output directory (default: the scenario's, else ontic-out/<name>)");
  app.add_option("--workers", workers, "cap on worker threads (0 = hardware)");
  app.add_flag("--quiet", quiet, "print nothing on success");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ontic::kExitConfig;
  }
  if (workers > 0) ontic::worker_cap() = workers;

  try {
    if (list || !filter.empty()) {
      print_list(filter);
      return 0;
    }
    if (!show.empty()) {
      std::cout << ontic::bundled_scenario(show).dump(2) << '\n';
      return 0;
    }
    if (config.empty() == scenario.empty()) {
      std::cerr << "error: give exactly one of --config or --scenario (see --help)\n";
      return ontic::kExitConfig;
    }
    ontic::RunOptions opts;
    if (seed_opt->count()) opts.seed = seed;
    if (samples_opt->count()) opts.samples = samples;
    opts.out = out;
    nlohmann::json sc;
    if (!config.empty()) {
      sc = ontic::read_scenario_file(config);
      opts.base_dir = std::filesystem::path(config).parent_path();
    } else {
      sc = ontic::bundled_scenario(scenario);
    }
    const ontic::RunResult r = ontic::run_scenario(sc, opts);
    if (!quiet || r.exit_code != 0) print_summary(r, sc.value("budget_seconds", 0.0));
    if (r.exit_code == ontic::kExitNumerical) std::cerr << "numerical abort: " << r.diagnostic << '\n';
    return r.exit_code;
  } catch (const ontic::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return ontic::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ontic::kExitNumerical;
  }
}
