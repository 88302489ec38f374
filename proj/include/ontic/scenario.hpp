#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ontic {

/// A scenario file that does not parse or validate. Nothing is written.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kReportSchema = "ontic-report/1";
inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitPass = 0, kExitGateFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct ScenarioInfo {
  std::string name;
  std::string description;
  double budget_seconds = 0.0;
};

/// Bundled scenarios whose name or description contains `filter`.
std::vector<ScenarioInfo> bundled_scenarios(std::string_view filter = {});
/// The bundled scenario file; throws ConfigError for an unknown name.
nlohmann::json bundled_scenario(std::string_view name);

/// Reads a JSON scenario file; throws ConfigError.
nlohmann::json read_scenario_file(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  /// output directory; empty uses the scenario's output.directory
  std::filesystem::path out;
  /// relative field-file paths in the scenario resolve against this
  std::filesystem::path base_dir;
  bool write_artifacts = true;
};

/// The scenario with command-line overrides applied, checked against the
/// schema. Throws ConfigError naming the offending key.
nlohmann::json validate_scenario(nlohmann::json scenario, const RunOptions& options);

struct RunResult {
  nlohmann::json report;
  int exit_code = kExitPass;
  /// module::op: message for a numerical abort
  std::string diagnostic;
  std::vector<std::filesystem::path> artifacts;
  double seconds = 0.0;
};

/// Validates, then executes the tasks in order. Config errors throw
/// ConfigError before anything is written; numerical aborts end the run
/// with kExitNumerical and a report naming the failing module and operation.
RunResult run_scenario(const nlohmann::json& scenario, const RunOptions& options);

}  // namespace ontic
