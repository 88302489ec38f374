#pragma once

#include "ontic/correlation.hpp"
#include "ontic/epistemic.hpp"
#include "ontic/scenario.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ontic::detail {

using json = nlohmann::json;
using Constants = std::map<std::string, double>;

[[noreturn]] void config_fail(const std::string& where, const std::string& what);

// Read-only view of one JSON object that remembers which keys were asked
// for, so finish() can reject the rest as typos.
class Node {
 public:
  Node(const json& j, std::string path, const Constants* constants);

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_ + "." + key; }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const { config_fail(at(key), what); }

  bool has(const std::string& key) const;
  const json& get(const std::string& key) const;
  Node object(const std::string& key) const;
  std::optional<Node> optional_object(const std::string& key) const;
  std::vector<Node> objects(const std::string& key) const;

  /// A number, or a string expression over the scenario constants.
  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const;
  double positive(const std::string& key, std::optional<double> fallback = std::nullopt) const;
  /// A number or an array of numbers.
  std::vector<double> numbers(const std::string& key) const;
  /// Real numbers or [re, im] pairs.
  std::vector<Complex> complexes(const std::string& key) const;
  long integer(const std::string& key, std::optional<long> fallback = std::nullopt) const;
  std::vector<int> integers(const std::string& key) const;
  std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt,
                    std::size_t min = 0) const;
  std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) const;
  bool flag(const std::string& key, bool fallback) const;

  const Constants& constants() const { return *constants_; }
  void finish() const;

 private:
  double value_of(const json& v, const std::string& where) const;

  const json* j_;
  std::string path_;
  const Constants* constants_;
  std::shared_ptr<std::set<std::string>> used_;
};

double evaluate_constant(const std::string& text, const Constants& c, const std::string& where);

// A state that can be sampled on any grid, or one read from files whose
// grid is fixed.
struct StateSpec {
  std::string family;
  std::size_t dims = 0;
  std::function<EpistemicState(const Grid&)> make;
  std::optional<Grid> fixed;
};

struct Setting {
  double hbar = 1.0;
  Constants constants;
  XiLaw law = XiLaw::two_point;
  XiMode mode = XiMode::nonseparable;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;
  std::optional<Grid> grid;
  std::optional<StateSpec> state;
};

Grid parse_grid(const Node& n);
StateSpec parse_state(const Node& n, std::optional<std::size_t> dims, const Setting& s);

class Gates {
 public:
  /// value <= limit; NaN fails
  void at_most(const std::string& name, double value, double limit);
  void holds(const std::string& name, bool ok);
  bool pass() const { return pass_; }
  const json& list() const { return list_; }

 private:
  json list_ = json::array();
  bool pass_ = true;
};

struct Context {
  const Setting* setting = nullptr;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  bool write = true;
  bool csv = true;
  bool binary = false;
  std::string task;
  json artifacts = json::array();
  std::vector<std::filesystem::path>* all_artifacts = nullptr;

  /// Writes <task>_<stem>.csv through fn; returns nothing when writing is off.
  void write_table(const std::string& stem, const std::function<void(std::ostream&)>& fn);
  void write_field(const std::string& stem, const ScalarField& f);
  void write_field(const std::string& stem, const ComplexField& f);

 private:
  std::filesystem::path claim(const std::string& file);
};

using TaskFn = std::function<json(Context&, Gates&)>;

/// Parses one task entry; the returned closure does the work.
TaskFn parse_task(const std::string& type, const Node& task, const Setting& s);
const std::vector<std::string>& task_types();

}  // namespace ontic::detail
