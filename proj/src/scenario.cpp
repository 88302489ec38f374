#include "scenario_internal.hpp"

#include "ontic/expression.hpp"
#include "ontic/families.hpp"
#include "ontic/field_io.hpp"
#include "ontic/observable.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>

namespace ontic {

namespace detail {

struct EmbeddedScenario {
  const char* name;
  const char* text;
};
extern const EmbeddedScenario kEmbedded[];
extern const std::size_t kEmbeddedCount;

void config_fail(const std::string& where, const std::string& what) { throw ConfigError(where + ": " + what); }

double evaluate_constant(const std::string& text, const Constants& c, const std::string& where) {
  try {
    const Expression e = Expression::parse(text, Expression::Symbols{{}, c});
    return e(nullptr);
  } catch (const ExpressionError& err) {
    config_fail(where, err.what());
  }
}

// Node ---------------------------------------------------------------------

Node::Node(const json& j, std::string path, const Constants* constants)
    : j_(&j), path_(std::move(path)), constants_(constants), used_(std::make_shared<std::set<std::string>>()) {
  if (!j.is_object()) config_fail(path_, "expected an object");
}

bool Node::has(const std::string& key) const {
  used_->insert(key);
  return j_->contains(key) && !(*j_)[key].is_null();
}

const json& Node::get(const std::string& key) const {
  if (!has(key)) fail(key, "required key is missing");
  return (*j_)[key];
}

Node Node::object(const std::string& key) const { return Node(get(key), at(key), constants_); }

std::optional<Node> Node::optional_object(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return object(key);
}

std::vector<Node> Node::objects(const std::string& key) const {
  const json& a = get(key);
  if (!a.is_array()) fail(key, "expected an array");
  std::vector<Node> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.emplace_back(a[i], at(key) + "[" + std::to_string(i) + "]", constants_);
  return out;
}

double Node::value_of(const json& v, const std::string& where) const {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return evaluate_constant(v.get<std::string>(), *constants_, where);
  config_fail(where, "expected a number or an expression string");
}

double Node::number(const std::string& key, std::optional<double> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail(key, "required key is missing");
  }
  const double x = value_of((*j_)[key], at(key));
  if (!std::isfinite(x)) fail(key, "must be finite");
  return x;
}

double Node::positive(const std::string& key, std::optional<double> fallback) const {
  const double x = number(key, fallback);
  if (!(x > 0)) fail(key, "must be positive");
  return x;
}

std::vector<double> Node::numbers(const std::string& key) const {
  const json& v = get(key);
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(value_of(v[i], at(key) + "[" + std::to_string(i) + "]"));
  } else {
    out.push_back(value_of(v, at(key)));
  }
  if (out.empty()) fail(key, "must not be empty");
  for (double x : out)
    if (!std::isfinite(x)) fail(key, "must be finite");
  return out;
}

std::vector<Complex> Node::complexes(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_array() || v.empty()) fail(key, "expected a nonempty array");
  std::vector<Complex> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string w = at(key) + "[" + std::to_string(i) + "]";
    if (v[i].is_array()) {
      if (v[i].size() != 2) config_fail(w, "a complex weight is [re, im]");
      out.emplace_back(value_of(v[i][0], w), value_of(v[i][1], w));
    } else {
      out.emplace_back(value_of(v[i], w), 0.0);
    }
  }
  return out;
}

long Node::integer(const std::string& key, std::optional<long> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail(key, "required key is missing");
  }
  const json& v = (*j_)[key];
  if (!v.is_number_integer()) fail(key, "expected an integer");
  return v.get<long>();
}

std::vector<int> Node::integers(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_array() || v.empty()) fail(key, "expected a nonempty array of integers");
  std::vector<int> out;
  for (const auto& x : v) {
    if (!x.is_number_integer()) fail(key, "expected a nonempty array of integers");
    out.push_back(x.get<int>());
  }
  return out;
}

std::size_t Node::count(const std::string& key, std::optional<std::size_t> fallback, std::size_t min) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail(key, "required key is missing");
  }
  const json& v = (*j_)[key];
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) fail(key, "expected a count");
  const auto n = v.get<std::size_t>();
  if (n < min) fail(key, "must be at least " + std::to_string(min));
  return n;
}

std::string Node::text(const std::string& key, std::optional<std::string> fallback) const {
  if (!has(key)) {
    if (fallback) return *fallback;
    fail(key, "required key is missing");
  }
  const json& v = (*j_)[key];
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

bool Node::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const json& v = (*j_)[key];
  if (!v.is_boolean()) fail(key, "expected true or false");
  return v.get<bool>();
}

void Node::finish() const {
  for (auto it = j_->begin(); it != j_->end(); ++it)
    if (!used_->count(it.key())) fail(it.key(), "unknown key");
}

// Grids and states ---------------------------------------------------------

Grid parse_grid(const Node& n) {
  std::vector<Axis> axes;
  for (const Node& a : n.objects("axes")) {
    Axis ax;
    ax.lower = a.number("lower");
    ax.upper = a.number("upper");
    ax.points = a.count("points", std::nullopt, 4);
    if (ax.points > (1u << 24)) a.fail("points", "too many points");
    try {
      ax.boundary = boundary_from_string(a.text("boundary", "vanishing"));
    } catch (const std::invalid_argument& e) {
      a.fail("boundary", e.what());
    }
    if (!(ax.upper > ax.lower)) a.fail("upper", "must exceed lower");
    a.finish();
    axes.push_back(ax);
  }
  if (axes.empty() || axes.size() > static_cast<std::size_t>(kMaxDims))
    n.fail("axes", "needs 1 to " + std::to_string(kMaxDims) + " axes");
  n.finish();
  return Grid(axes);
}

namespace {

std::vector<double> per_axis(const Node& n, const std::string& key, double fallback, std::size_t dims) {
  std::vector<double> v = n.has(key) ? n.numbers(key) : std::vector<double>{fallback};
  if (v.size() == 1) v.assign(dims, v.front());
  if (v.size() != dims) n.fail(key, "needs one value per axis");
  return v;
}

std::filesystem::path resolve(const Setting& s, const std::string& file) {
  const std::filesystem::path p(file);
  return p.is_absolute() || s.base_dir.empty() ? p : s.base_dir / p;
}

}  // namespace

StateSpec parse_state(const Node& n, std::optional<std::size_t> dims, const Setting& s) {
  StateSpec spec;
  spec.family = n.text("family");
  const std::string& f = spec.family;
  const double hbar = s.hbar;
  auto need_dims = [&](std::optional<std::size_t> want) {
    if (!dims) n.fail("family", "'" + f + "' needs a grid");
    if (want && *dims != *want)
      n.fail("family", "'" + f + "' needs a " + std::to_string(*want) + "-dimensional grid");
  };

  if (f == "gaussian") {
    need_dims(std::nullopt);
    const auto c = per_axis(n, "centre", 0.0, *dims), w = per_axis(n, "sigma", 1.0, *dims),
               p = per_axis(n, "momentum", 0.0, *dims);
    for (double x : w)
      if (!(x > 0)) n.fail("sigma", "must be positive");
    spec.make = [c, w, p](const Grid& g) { return gaussian_state(g, c, w, p); };
  } else if (f == "box_ground") {
    need_dims(1);
    spec.make = [](const Grid& g) { return box_ground_state(g); };
  } else if (f == "plane_wave") {
    need_dims(1);
    const double p = n.number("momentum");
    spec.make = [p](const Grid& g) { return plane_wave_state(g, p); };
  } else if (f == "entangled_gaussian") {
    need_dims(2);
    const double a = n.positive("a"), b = n.positive("b");
    spec.make = [a, b](const Grid& g) { return entangled_gaussian_state(g, a, b); };
  } else if (f == "smooth_random") {
    need_dims(1);
    const auto seed = static_cast<std::uint64_t>(n.count("seed", 0));
    Rng rng = substream(seed, 0);
    const SmoothStateParams params = SmoothStateParams::draw(rng);
    spec.make = [params](const Grid& g) { return params.on(g); };
  } else if (f == "harmonic_mode") {
    need_dims(1);
    const int level = static_cast<int>(n.count("n", 0));
    const double m = n.positive("mass", 1.0), w = n.positive("omega", 1.0);
    spec.make = [=](const Grid& g) { return from_wavefunction(harmonic_mode(g, level, m, w, hbar), hbar); };
  } else if (f == "expression") {
    need_dims(std::nullopt);
    const auto symbols = configuration_symbols(*dims, false, n.constants());
    auto parse = [&](const std::string& key, const std::string& fallback) {
      try {
        return Expression::parse(n.text(key, fallback), symbols);
      } catch (const ExpressionError& e) {
        n.fail(key, e.what());
      }
    };
    const Expression rho = parse("density", ""), phase = parse("phase", "0");
    spec.make = [rho, phase](const Grid& g) {
      const auto r = ScalarField::sample(g, [&](const Point& q) { return rho(q.data()); });
      const auto p = ScalarField::sample(g, [&](const Point& q) { return phase(q.data()); });
      return EpistemicState::normalized(r, p);
    };
  } else if (f == "files") {
    ScalarField rho, phase;
    try {
      rho = load_scalar(resolve(s, n.text("density_file")));
      phase = n.has("phase_file") ? load_scalar(resolve(s, n.text("phase_file"))) : ScalarField(rho.grid());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      n.fail("density_file", e.what());
    }
    if (!(phase.grid().axes() == rho.grid().axes())) n.fail("phase_file", "grid differs from the density file's");
    if (dims && *dims != rho.grid().dims()) n.fail("density_file", "dimension differs from the task grid");
    spec.fixed = rho.grid();
    spec.make = [rho, phase](const Grid&) { return EpistemicState::normalized(rho, phase); };
  } else if (f == "wavefunction_file") {
    ComplexField psi;
    try {
      psi = load_complex(resolve(s, n.text("file")));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      n.fail("file", e.what());
    }
    if (dims && *dims != psi.grid().dims()) n.fail("file", "dimension differs from the task grid");
    spec.fixed = psi.grid();
    spec.make = [psi, hbar](const Grid&) { return from_wavefunction(normalized(psi), hbar); };
  } else {
    n.fail("family", "unknown state family '" + f + "'");
  }
  spec.dims = spec.fixed ? spec.fixed->dims() : *dims;
  n.finish();
  return spec;
}

// Gates and artifacts ------------------------------------------------------

void Gates::at_most(const std::string& name, double value, double limit) {
  const bool ok = value <= limit;
  list_.push_back({{"name", name}, {"value", value}, {"limit", limit}, {"pass", ok}});
  pass_ = pass_ && ok;
}

void Gates::holds(const std::string& name, bool ok) {
  list_.push_back({{"name", name}, {"value", ok}, {"pass", ok}});
  pass_ = pass_ && ok;
}

std::filesystem::path Context::claim(const std::string& file) {
  const std::filesystem::path p = out / file;
  artifacts.push_back(file);
  if (all_artifacts) all_artifacts->push_back(p);
  return p;
}

void Context::write_table(const std::string& stem, const std::function<void(std::ostream&)>& fn) {
  if (!write || !csv) return;
  std::ofstream os(claim(task + "_" + stem + ".csv"));
  os.precision(17);
  fn(os);
  if (!os) throw std::runtime_error("cannot write " + stem);
}

void Context::write_field(const std::string& stem, const ScalarField& f) {
  if (!write || !(csv || binary)) return;
  save(claim(task + "_" + stem + (binary ? ".bin" : ".csv")), f);
}

void Context::write_field(const std::string& stem, const ComplexField& f) {
  if (!write || !(csv || binary)) return;
  save(claim(task + "_" + stem + (binary ? ".bin" : ".csv")), f);
}

// Plans --------------------------------------------------------------------

namespace {

struct Task {
  std::string name;
  std::string type;
  TaskFn run;
};

struct Plan {
  std::string name;
  Setting setting;
  std::vector<Task> tasks;
  std::filesystem::path out;
  bool json_report = true, csv = true, binary = false;
};

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' ||
           c == '_';
  });
}

Plan build_plan(const json& sc, const RunOptions& options) {
  Plan plan;
  Setting& s = plan.setting;
  s.base_dir = options.base_dir;
  // constants first so that every other number may be an expression over them
  static const Constants kNone;
  const Node pre(sc, "scenario", &kNone);
  s.hbar = pre.positive("hbar", 1.0);
  s.constants = {{"hbar", s.hbar}};
  const Node root(sc, "scenario", &s.constants);
  root.has("hbar");

  plan.name = root.text("name");
  if (!valid_name(plan.name)) root.fail("name", "use lower-case letters, digits, '-' and '_'");
  root.text("description", "");
  root.positive("budget_seconds", 60.0);
  if (root.has("seed")) {
    const json& v = root.get("seed");
    if (!v.is_number_unsigned()) root.fail("seed", "expected a non-negative integer");
    s.seed = v.get<std::uint64_t>();
  }
  s.samples = root.count("samples", 100000, 2);

  if (auto xi = root.optional_object("xi")) {
    try {
      s.law = xi_law_from_string(xi->text("law", "two_point"));
    } catch (const std::invalid_argument& e) {
      xi->fail("law", e.what());
    }
    try {
      s.mode = xi_mode_from_string(xi->text("mode", "nonseparable"));
    } catch (const std::invalid_argument& e) {
      xi->fail("mode", e.what());
    }
    xi->finish();
  }
  if (auto g = root.optional_object("grid")) s.grid = parse_grid(*g);
  if (auto st = root.optional_object("state"))
    s.state = parse_state(*st, s.grid ? std::optional(s.grid->dims()) : std::nullopt, s);

  if (auto o = root.optional_object("output")) {
    if (o->has("directory")) plan.out = o->text("directory");
    if (o->has("formats")) {
      const json& f = o->get("formats");
      if (!f.is_array()) o->fail("formats", "expected an array");
      plan.json_report = plan.csv = plan.binary = false;
      for (const auto& x : f) {
        const std::string v = x.is_string() ? x.get<std::string>() : "";
        if (v == "json") plan.json_report = true;
        else if (v == "csv") plan.csv = true;
        else if (v == "binary") plan.binary = true;
        else o->fail("formats", "formats are json, csv and binary");
      }
    }
    o->finish();
  }
  if (!options.out.empty()) plan.out = options.out;
  if (plan.out.empty()) plan.out = std::filesystem::path("ontic-out") / plan.name;

  std::set<std::string> names;
  const std::vector<Node> tasks = root.objects("tasks");
  if (tasks.empty()) root.fail("tasks", "needs at least one task");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Node& t = tasks[i];
    Task task;
    task.type = t.text("type");
    task.name = t.text("name", task.type + "-" + std::to_string(i));
    if (!valid_name(task.name)) t.fail("name", "use lower-case letters, digits, '-' and '_'");
    if (!names.insert(task.name).second) t.fail("name", "duplicate task name '" + task.name + "'");
    task.run = parse_task(task.type, t, s);
    t.finish();
    plan.tasks.push_back(std::move(task));
  }
  root.finish();
  return plan;
}

Plan checked_plan(const json& sc, const RunOptions& options) {
  try {
    return build_plan(sc, options);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

json grid_json(const Grid& g) {
  json axes = json::array();
  for (const Axis& a : g.axes())
    axes.push_back({{"lower", a.lower}, {"upper", a.upper}, {"points", a.points}, {"boundary", to_string(a.boundary)}});
  return {{"axes", axes}};
}

}  // namespace

}  // namespace detail

using detail::json;

std::vector<ScenarioInfo> bundled_scenarios(std::string_view filter) {
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  const std::string f = lower(std::string(filter));
  std::vector<ScenarioInfo> out;
  for (std::size_t k = 0; k < detail::kEmbeddedCount; ++k) {
    const json j = json::parse(detail::kEmbedded[k].text);
    ScenarioInfo info{detail::kEmbedded[k].name, j.value("description", ""), j.value("budget_seconds", 60.0)};
    if (f.empty() || lower(info.name).find(f) != std::string::npos || lower(info.description).find(f) != std::string::npos)
      out.push_back(std::move(info));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

json bundled_scenario(std::string_view name) {
  for (std::size_t k = 0; k < detail::kEmbeddedCount; ++k)
    if (name == detail::kEmbedded[k].name) return json::parse(detail::kEmbedded[k].text);
  throw ConfigError("no bundled scenario named '" + std::string(name) + "' (see --list)");
}

json read_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json validate_scenario(json scenario, const RunOptions& options) {
  if (!scenario.is_object()) throw ConfigError("scenario: expected a JSON object");
  if (options.seed) scenario["seed"] = *options.seed;
  if (options.samples) {
    scenario["samples"] = *options.samples;
    if (scenario.contains("tasks") && scenario["tasks"].is_array())
      for (auto& t : scenario["tasks"])
        if (t.is_object() && t.contains("samples")) t["samples"] = *options.samples;
  }
  detail::checked_plan(scenario, options);
  return scenario;
}

RunResult run_scenario(const json& scenario, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const json sc = validate_scenario(scenario, options);
  const detail::Plan plan = detail::checked_plan(sc, options);

  RunResult result;
  json& report = result.report;
  report["schema"] = kReportSchema;
  report["scenario"] = sc;
  report["provenance"] = {{"seed", plan.setting.seed},
                          {"samples", plan.setting.samples},
                          {"version", kVersion},
                          {"hbar", plan.setting.hbar},
                          {"xi_law", to_string(plan.setting.law)},
                          {"grid", plan.setting.grid ? detail::grid_json(*plan.setting.grid) : json(nullptr)}};
  report["tasks"] = json::array();

  if (options.write_artifacts) std::filesystem::create_directories(plan.out);

  bool pass = true;
  for (std::size_t i = 0; i < plan.tasks.size(); ++i) {
    const auto& task = plan.tasks[i];
    detail::Context ctx;
    ctx.setting = &plan.setting;
    ctx.seed = plan.setting.seed + i;
    ctx.out = plan.out;
    ctx.write = options.write_artifacts;
    ctx.csv = plan.csv;
    ctx.binary = plan.binary;
    ctx.task = task.name;
    ctx.all_artifacts = &result.artifacts;
    detail::Gates gates;
    json entry = {{"name", task.name}, {"type", task.type}, {"seed", ctx.seed}};
    try {
      entry["results"] = task.run(ctx, gates);
    } catch (const NumericalError& e) {
      report["abort"] = {{"task", task.name}, {"module", e.module()}, {"op", e.op()}, {"message", e.what()}};
      result.diagnostic = e.what();
      result.exit_code = kExitNumerical;
    } catch (const std::exception& e) {
      report["abort"] = {{"task", task.name}, {"module", "cli"}, {"op", task.type}, {"message", e.what()}};
      result.diagnostic = std::string("cli::") + task.type + ": " + e.what();
      result.exit_code = kExitNumerical;
    }
    entry["gates"] = gates.list();
    entry["pass"] = gates.pass() && result.exit_code != kExitNumerical;
    entry["artifacts"] = ctx.artifacts;
    pass = pass && entry["pass"].get<bool>();
    report["tasks"].push_back(std::move(entry));
    if (result.exit_code == kExitNumerical) break;
  }
  report["pass"] = pass;
  if (result.exit_code != kExitNumerical) result.exit_code = pass ? kExitPass : kExitGateFailed;

  if (options.write_artifacts && plan.json_report) {
    const auto path = plan.out / "report.json";
    std::ofstream os(path);
    os << report.dump(2) << '\n';
    result.artifacts.push_back(path);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace ontic
