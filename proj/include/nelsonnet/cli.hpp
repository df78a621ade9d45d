#pragma once

// YAML-configured command-line front end. Exit codes: 0 when every assertion
// passes, 1 when a check fails, 2 for configuration and size errors.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "nelsonnet/errors.hpp"
#include "nelsonnet/experiments.hpp"

namespace nelsonnet::cli {

inline constexpr int kSchemaVersion = 1;

/// Invalid configuration; the message starts with "path:line:".
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RegionSpec {
  std::string kind;  // ball, annulus, complement, modes, all
  double a = 0.0;
  double b = 0.0;
  std::string ref;
  std::vector<std::size_t> modes;
  std::string where;
};

struct Outputs {
  std::string csv = "sweep.csv";
  std::optional<std::string> json;
  bool triplets = false;
};

struct RunConfig {
  std::string path;
  int schema_version = kSchemaVersion;

  int dimension = 1;
  double extent = 2.0;
  double spacing = 1.0;
  double mass = 1.0;
  GridLayout layout = GridLayout::cell_centered;
  int max_total = 2;
  std::size_t dimension_cap = 200'000;

  std::vector<double> P;
  double g = 1.0;
  double K = 0.5;

  std::map<std::string, RegionSpec> regions;

  std::optional<std::vector<double>> betas;
  std::optional<double> kappa;
  std::vector<double> kappa_schedule;
  bool with_counterterm = true;
  double sigma = 0.5;
  bool couple_outside = true;
  std::optional<std::string> lambda;
  std::optional<std::string> coupled;
  std::vector<std::string> family;
  std::string selector = "Decomposition";
  double gap_tol = 1e-8;
  double pos_tol = 1e-10;
  double decomposition_tol = 1e-12;
  double perron_beta = 1.0;
  std::size_t dense_cap = 3000;
  std::size_t sweep_dense_cap = 1200;
  Outputs outputs;
  std::string where_kappa_schedule;
};

namespace detail {

class Reader {
 public:
  explicit Reader(std::string path) : path_(std::move(path)) {}

  std::string at(const YAML::Node& n) const {
    return path_ + ":" + std::to_string(n.Mark().line + 1) + ": ";
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const { throw ConfigError(at(n) + msg); }

  void require_map(const YAML::Node& n, const std::string& block) const {
    if (!n.IsMap()) fail(n, "'" + block + "' must be a mapping");
  }

  void allow(const YAML::Node& map, const std::string& block, const std::set<std::string>& keys) const {
    require_map(map, block);
    for (auto it = map.begin(); it != map.end(); ++it) {
      const auto key = it->first.as<std::string>();
      if (!keys.count(key)) fail(it->first, "unknown key '" + key + "' in '" + block + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& n, const std::string& name) const {
    if (!n.IsScalar()) fail(n, "'" + name + "' must be a scalar");
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + name + "' has an invalid value '" + n.Scalar() + "'");
    }
  }

  template <class T>
  std::vector<T> list(const YAML::Node& n, const std::string& name) const {
    if (!n.IsSequence()) fail(n, "'" + name + "' must be a list");
    std::vector<T> out;
    for (const auto& x : n) out.push_back(scalar<T>(x, name));
    return out;
  }

  double positive(const YAML::Node& n, const std::string& name) const {
    const double x = scalar<double>(n, name);
    if (!(x > 0.0)) fail(n, "'" + name + "' must be positive");
    return x;
  }

 private:
  std::string path_;
};

inline RegionSpec parse_region(const Reader& rd, const YAML::Node& n, const std::string& name) {
  rd.allow(n, "regions." + name, {"ball", "annulus", "complement", "modes", "all"});
  if (n.size() != 1) rd.fail(n, "region '" + name + "' needs exactly one descriptor");
  RegionSpec s;
  s.where = rd.at(n);
  const auto it = n.begin();
  s.kind = it->first.as<std::string>();
  const YAML::Node v = it->second;
  if (s.kind == "ball") {
    s.a = rd.positive(v, "ball");
  } else if (s.kind == "annulus") {
    const auto r = rd.list<double>(v, "annulus");
    if (r.size() != 2 || !(r[0] >= 0.0) || !(r[1] > r[0])) rd.fail(v, "annulus needs [sigma, kappa] with 0 <= sigma < kappa");
    s.a = r[0];
    s.b = r[1];
  } else if (s.kind == "complement") {
    s.ref = rd.scalar<std::string>(v, "complement");
  } else if (s.kind == "modes") {
    for (long long m : rd.list<long long>(v, "modes")) {
      if (m < 0) rd.fail(v, "mode indices must be nonnegative");
      s.modes.push_back(static_cast<std::size_t>(m));
    }
  } else if (s.kind == "all") {
    if (!rd.scalar<bool>(v, "all")) rd.fail(v, "'all' must be true");
  }
  return s;
}

}  // namespace detail

/// Parses a config document; `path` is used only in messages.
inline RunConfig parse_config(const std::string& text, const std::string& path) {
  detail::Reader rd(path);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  RunConfig c;
  c.path = path;
  if (!root.IsMap()) throw ConfigError(path + ":1: config must be a mapping");
  rd.allow(root, "config", {"schema_version", "grid", "params", "regions", "run"});
  if (!root["schema_version"]) throw ConfigError(path + ":1: missing 'schema_version'");
  c.schema_version = rd.scalar<int>(root["schema_version"], "schema_version");
  if (c.schema_version != kSchemaVersion) {
    rd.fail(root["schema_version"], "unsupported schema_version " + std::to_string(c.schema_version) + " (expected " +
                                        std::to_string(kSchemaVersion) + ")");
  }
  if (!root["grid"]) throw ConfigError(path + ":1: missing 'grid' block");

  const YAML::Node grid = root["grid"];
  rd.allow(grid, "grid", {"dimension", "extent", "spacing", "mass", "layout", "max_total", "dimension_cap"});
  if (grid["dimension"]) {
    c.dimension = rd.scalar<int>(grid["dimension"], "dimension");
    if (c.dimension < 1 || c.dimension > 3) rd.fail(grid["dimension"], "'dimension' must be 1, 2 or 3");
  }
  if (grid["extent"]) c.extent = rd.positive(grid["extent"], "extent");
  if (grid["spacing"]) c.spacing = rd.positive(grid["spacing"], "spacing");
  if (grid["mass"]) {
    c.mass = rd.scalar<double>(grid["mass"], "mass");
    if (!(c.mass >= 0.0)) rd.fail(grid["mass"], "'mass' must be nonnegative");
  }
  if (grid["layout"]) {
    const auto l = rd.scalar<std::string>(grid["layout"], "layout");
    if (l == "cell_centered") {
      c.layout = GridLayout::cell_centered;
    } else if (l == "vertex") {
      c.layout = GridLayout::vertex;
    } else {
      rd.fail(grid["layout"], "'layout' must be cell_centered or vertex");
    }
  }
  if (grid["max_total"]) {
    c.max_total = rd.scalar<int>(grid["max_total"], "max_total");
    if (c.max_total < 0) rd.fail(grid["max_total"], "'max_total' must be nonnegative");
  }
  if (grid["dimension_cap"]) {
    const auto cap = rd.scalar<long long>(grid["dimension_cap"], "dimension_cap");
    if (cap < 1) rd.fail(grid["dimension_cap"], "'dimension_cap' must be positive");
    c.dimension_cap = static_cast<std::size_t>(cap);
  }

  c.P.assign(static_cast<std::size_t>(c.dimension), 0.0);
  if (const YAML::Node params = root["params"]) {
    rd.allow(params, "params", {"P", "g", "K"});
    if (params["P"]) {
      c.P = rd.list<double>(params["P"], "P");
      if (c.P.size() != static_cast<std::size_t>(c.dimension)) {
        rd.fail(params["P"], "'P' needs " + std::to_string(c.dimension) + " components");
      }
    }
    if (params["g"]) {
      c.g = rd.scalar<double>(params["g"], "g");
      if (!(c.g >= 0.0)) rd.fail(params["g"], "'g' must be nonnegative");
    }
    if (params["K"]) c.K = rd.positive(params["K"], "K");
  }

  if (const YAML::Node regions = root["regions"]) {
    rd.require_map(regions, "regions");
    for (auto it = regions.begin(); it != regions.end(); ++it) {
      const auto name = it->first.as<std::string>();
      c.regions[name] = detail::parse_region(rd, it->second, name);
    }
  }

  if (const YAML::Node run = root["run"]) {
    rd.allow(run, "run",
             {"betas", "kappa", "kappa_schedule", "with_counterterm", "sigma", "couple_outside", "lambda", "coupled",
              "family", "selector", "tolerances", "perron_beta", "dense_cap", "sweep_dense_cap", "outputs"});
    if (run["betas"]) c.betas = rd.list<double>(run["betas"], "betas");
    if (run["kappa"]) c.kappa = rd.positive(run["kappa"], "kappa");
    if (run["kappa_schedule"]) {
      c.kappa_schedule = rd.list<double>(run["kappa_schedule"], "kappa_schedule");
      c.where_kappa_schedule = rd.at(run["kappa_schedule"]);
    }
    if (run["with_counterterm"]) c.with_counterterm = rd.scalar<bool>(run["with_counterterm"], "with_counterterm");
    if (run["sigma"]) c.sigma = rd.positive(run["sigma"], "sigma");
    if (run["couple_outside"]) c.couple_outside = rd.scalar<bool>(run["couple_outside"], "couple_outside");
    for (const char* key : {"lambda", "coupled"}) {
      if (!run[key]) continue;
      const auto name = rd.scalar<std::string>(run[key], key);
      if (!c.regions.count(name)) rd.fail(run[key], "'" + std::string(key) + "' names unknown region '" + name + "'");
      (std::string(key) == "lambda" ? c.lambda : c.coupled) = name;
    }
    if (run["family"]) {
      c.family = rd.list<std::string>(run["family"], "family");
      for (const auto& f : c.family) {
        if (!c.regions.count(f)) rd.fail(run["family"], "'family' names unknown region '" + f + "'");
      }
    }
    if (run["selector"]) c.selector = rd.scalar<std::string>(run["selector"], "selector");
    if (const YAML::Node tol = run["tolerances"]) {
      rd.allow(tol, "run.tolerances", {"gap", "positivity", "decomposition"});
      if (tol["gap"]) c.gap_tol = rd.positive(tol["gap"], "gap");
      if (tol["positivity"]) c.pos_tol = rd.positive(tol["positivity"], "positivity");
      if (tol["decomposition"]) c.decomposition_tol = rd.positive(tol["decomposition"], "decomposition");
    }
    if (run["perron_beta"]) c.perron_beta = rd.positive(run["perron_beta"], "perron_beta");
    if (run["dense_cap"]) c.dense_cap = static_cast<std::size_t>(rd.positive(run["dense_cap"], "dense_cap"));
    if (run["sweep_dense_cap"]) {
      c.sweep_dense_cap = static_cast<std::size_t>(rd.positive(run["sweep_dense_cap"], "sweep_dense_cap"));
    }
    if (const YAML::Node out = run["outputs"]) {
      rd.allow(out, "run.outputs", {"csv", "json", "triplets"});
      if (out["csv"]) c.outputs.csv = rd.scalar<std::string>(out["csv"], "csv");
      if (out["json"]) c.outputs.json = rd.scalar<std::string>(out["json"], "json");
      if (out["triplets"]) c.outputs.triplets = rd.scalar<bool>(out["triplets"], "triplets");
    }
  }
  for (const auto& [name, def] : c.regions) {
    if (def.kind == "complement" && !c.regions.count(def.ref)) {
      throw ConfigError(def.where + "region '" + name + "' is the complement of unknown region '" + def.ref + "'");
    }
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Builds the named region on `grid`, following complement references.
inline Region build_region(const RunConfig& c, const GridPtr& grid, const std::string& name,
                           std::set<std::string> visiting = {}) {
  const auto it = c.regions.find(name);
  if (it == c.regions.end()) throw ConfigError(c.path + ": unknown region '" + name + "'");
  const RegionSpec& s = it->second;
  if (!visiting.insert(name).second) throw ConfigError(s.where + "region '" + name + "' refers to itself");
  if (s.kind == "ball") return Region::ball(grid, s.a);
  if (s.kind == "annulus") return Region::annulus(grid, s.a, s.b);
  if (s.kind == "complement") return build_region(c, grid, s.ref, visiting).complement();
  if (s.kind == "all") return Region::all(grid);
  for (auto m : s.modes) {
    if (m >= grid->size()) {
      throw ConfigError(s.where + "region '" + name + "' names mode " + std::to_string(m) + " but the grid has " +
                        std::to_string(grid->size()) + " modes");
    }
  }
  return Region::explicit_set(grid, s.modes);
}

struct RuntimeOptions {
  std::string out_dir = ".";
  unsigned threads = 1;
  std::uint64_t seed = 7;
};

inline GridPtr build_grid(const RunConfig& c) {
  return ModeGrid::build(c.dimension, c.extent, c.spacing, c.mass, c.layout);
}

inline NelsonParams build_params(const RunConfig& c) {
  NelsonParams p;
  p.P = Eigen::Map<const Eigen::VectorXd>(c.P.data(), static_cast<Eigen::Index>(c.P.size()));
  p.g = c.g;
  p.K = c.K;
  return p;
}

inline Instance build_instance(const RunConfig& c, const RuntimeOptions& rt) {
  Instance in;
  in.grid = build_grid(c);
  in.params = build_params(c);
  in.max_total = c.max_total;
  in.dimension_cap = c.dimension_cap;
  if (c.lambda) in.lambda = build_region(c, in.grid, *c.lambda);
  in.kappa = c.kappa;
  if (c.kappa && *c.kappa > c.extent) {
    throw ConfigError(c.path + ": kappa " + format_double(*c.kappa) + " exceeds the grid extent " +
                      format_double(c.extent));
  }
  if (c.coupled) in.coupled = build_region(c, in.grid, *c.coupled);
  for (const auto& f : c.family) in.family.push_back(build_region(c, in.grid, f));
  if (c.betas) in.plan.betas = *c.betas;
  in.plan.dense_cap = c.dense_cap;
  in.plan.threads = rt.threads;
  in.perron.beta = c.perron_beta;
  in.perron.gap_tol = c.gap_tol;
  in.perron.pos_tol = c.pos_tol;
  in.perron.dense_cap = c.dense_cap;
  in.perron.seed = rt.seed;
  in.decomposition_tol = c.decomposition_tol;
  return in;
}

inline Json config_json(const RunConfig& c, const RuntimeOptions& rt) {
  Json regions = Json::object();
  for (const auto& [name, s] : c.regions) {
    Json d{{"kind", s.kind}};
    if (s.kind == "ball") d["kappa"] = s.a;
    if (s.kind == "annulus") d["range"] = {s.a, s.b};
    if (s.kind == "complement") d["of"] = s.ref;
    if (s.kind == "modes") d["modes"] = s.modes;
    regions[name] = d;
  }
  return Json{{"schema_version", c.schema_version},
              {"grid",
               {{"dimension", c.dimension},
                {"extent", c.extent},
                {"spacing", c.spacing},
                {"mass", c.mass},
                {"layout", c.layout == GridLayout::vertex ? "vertex" : "cell_centered"},
                {"max_total", c.max_total},
                {"dimension_cap", c.dimension_cap}}},
              {"params", {{"P", c.P}, {"g", c.g}, {"K", c.K}}},
              {"regions", regions},
              {"seed", rt.seed}};
}

namespace detail {

inline std::filesystem::path output_path(const RuntimeOptions& rt, const std::string& name) {
  std::filesystem::path p(name);
  if (p.is_absolute()) return p;
  return std::filesystem::path(rt.out_dir) / p;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

inline void write_json(const std::filesystem::path& p, const Json& j) {
  std::ostringstream os;
  write_json_text(j, os);
  os << "\n";
  write_text(p, os.str());
}

inline std::string triplet_text(const SparseOperator& op) {
  std::ostringstream os;
  write_triplets(op, os);
  return os.str();
}

inline int finish(const TheoremReport& rep, Json doc, const RunConfig& c, const RuntimeOptions& rt,
                  const std::string& default_name, std::ostream& out) {
  doc["checks"] = report_json(rep)["checks"];
  doc["passed"] = rep.passed();
  const auto path = output_path(rt, c.outputs.json.value_or(default_name));
  write_json(path, doc);
  for (const auto& ch : rep.checks) {
    out << ch.check << ": " << ch.verdict << " (extremal " << format_double(ch.extremal) << ")\n";
  }
  out << (rep.passed() ? "all checks passed" : "some checks failed") << "; report written to " << path.string()
      << "\n";
  return rep.passed() ? 0 : 1;
}

inline int cmd_build_check(const RunConfig& c, const RuntimeOptions& rt, std::ostream& out) {
  const Instance in = build_instance(c, rt);
  const ResolvedInstance r = resolve(in);
  HamiltonianOptions options;
  options.convention = MomentumConvention::full_P;
  options.coupled = in.coupled;
  const HamiltonianParts parts = build_cutoff_hamiltonian(*in.grid, r.basis, in.params, Region::all(in.grid), options);
  const SparseOperator h = parts.assembled();

  TheoremReport rep;
  rep.selector = "build-check";
  rep.checks.push_back(assertion("build.symmetric", h.is_symmetric(1e-12), 0.0, 1e-12));
  rep.checks.push_back(assertion("build.metzler", !(h.max_off_diagonal() > 0.0), h.max_off_diagonal(), 0.0));
  rep.checks.push_back(assertion("build.kinetic_diagonal", parts.kinetic.is_diagonal(), 0.0, std::nullopt));
  rep.checks.push_back(assertion("build.field_diagonal", parts.field.is_diagonal(), 0.0, std::nullopt));
  TheoremReport dec = theorem_report("Decomposition", in);
  for (auto& ch : dec.checks) rep.checks.push_back(std::move(ch));

  Json doc{{"command", "build-check"},
           {"config", config_json(c, rt)},
           {"grid", in.grid->descriptor()},
           {"modes", in.grid->size()},
           {"basis_dimension", r.basis.size()},
           {"nonzeros", h.nonzeros()},
           {"counterterm", parts.counterterm},
           {"lambda", r.lambda.descriptor()},
           {"kappa", r.kappa}};
  if (c.outputs.triplets) {
    const std::vector<std::pair<std::string, SparseOperator>> ops{
        {"kinetic", parts.kinetic}, {"interaction", parts.interaction}, {"field", parts.field}, {"hamiltonian", h}};
    Json files = Json::object();
    for (const auto& [name, op] : ops) {
      const auto p = output_path(rt, name + ".triplets");
      write_text(p, triplet_text(op));
      files[name] = p.filename().string();
    }
    Json manifest{{"params", params_json(in.params)},
                  {"grid", in.grid->descriptor()},
                  {"region", Region::all(in.grid).descriptor()},
                  {"coupled", in.coupled ? Json(in.coupled->descriptor()) : Json(nullptr)},
                  {"convention", "full_P"},
                  {"counterterm", parts.counterterm},
                  {"counterterm_included", parts.include_counterterm},
                  {"max_total", in.max_total},
                  {"dimension", r.basis.size()},
                  {"files", files}};
    write_json(output_path(rt, "manifest.json"), manifest);
  }
  return finish(rep, doc, c, rt, "build_check.json", out);
}

inline int cmd_spectrum(const RunConfig& c, const RuntimeOptions& rt, std::ostream& out) {
  const Instance in = build_instance(c, rt);
  const ResolvedInstance r = resolve(in);
  const PerronReport pf = perron_frobenius_check(instance_hamiltonian(r), in.perron);
  TheoremReport rep;
  rep.selector = "spectrum";
  rep.checks.push_back(observation("spectrum.gap", pf.gap > in.perron.gap_tol, pf.gap, in.perron.gap_tol));
  rep.checks.push_back(observation("spectrum.strictly_positive_ground_state", pf.min_entry > in.perron.pos_tol,
                                   pf.min_entry, in.perron.pos_tol, Json{{"min_index", pf.min_index}}));
  if (pf.semigroup_improves) {
    rep.checks.push_back(assertion("spectrum.perron_frobenius_consistency", pf.consistent(), pf.min_entry,
                                   in.perron.pos_tol, entry_witness_json(pf.semigroup_witness)));
  }
  Json doc{{"command", "spectrum"},
           {"config", config_json(c, rt)},
           {"basis_dimension", r.basis.size()},
           {"solver", pf.solver},
           {"ground_energy", pf.ground_energy},
           {"gap", json_number(pf.gap)},
           {"min_entry", pf.min_entry},
           {"unique_positive", pf.unique_positive}};
  return finish(rep, doc, c, rt, "spectrum.json", out);
}

inline int cmd_positivity(const RunConfig& c, const RuntimeOptions& rt, std::ostream& out) {
  const Instance in = build_instance(c, rt);
  const ResolvedInstance r = resolve(in);
  const SparseOperator h = instance_hamiltonian(r);
  const Region rest = r.lambda.complement();
  const FactorizationMap map(r.basis, r.lambda, rest);
  const EquivalenceReport scan = positivity_equivalence_scan(h, instance_local(r, r.lambda).parts.assembled(),
                                                             instance_local(r, rest).parts.assembled(), map, in.plan);
  double full_min = std::numeric_limits<double>::infinity();
  Json per_beta = Json::array();
  for (const auto& b : scan.per_beta) {
    full_min = std::min(full_min, b.full_min_entry);
    per_beta.push_back({{"beta", b.beta},
                        {"improves", b.full_improves},
                        {"full_min_entry", b.full_min_entry},
                        {"tensor_min_entry", b.tensor_min_entry}});
  }
  TheoremReport rep;
  rep.selector = "positivity";
  rep.checks.push_back(assertion("positivity.improves", scan.full_side, full_min, 0.0,
                                 entry_witness_json(scan.full_witness)));
  Json uw = nullptr;
  if (scan.unreached_pair) uw = Json{{"row", scan.unreached_pair->first}, {"col", scan.unreached_pair->second}};
  rep.checks.push_back(observation("positivity.tensor_pairing", scan.tensor_side, 0.0, 0.0, uw));
  rep.checks.push_back(assertion("positivity.equivalence", scan.agree(), 0.0, std::nullopt));
  Json doc{{"command", "positivity"},
           {"config", config_json(c, rt)},
           {"basis_dimension", r.basis.size()},
           {"lambda", r.lambda.descriptor()},
           {"improves", scan.full_side},
           {"per_beta", per_beta}};
  return finish(rep, doc, c, rt, "positivity.json", out);
}

inline int cmd_renorm_sweep(const RunConfig& c, const RuntimeOptions& rt, std::ostream& out) {
  if (c.kappa_schedule.empty()) throw ConfigError(c.path + ": renorm-sweep needs run.kappa_schedule");
  for (double k : c.kappa_schedule) {
    if (!(k > 0.0) || k > c.extent) {
      throw ConfigError(c.where_kappa_schedule + "kappa " + format_double(k) + " lies outside the grid extent (0, " +
                        format_double(c.extent) + "]");
    }
  }
  const GridPtr grid = build_grid(c);
  SweepOptions opt;
  opt.with_counterterm = c.with_counterterm;
  opt.dimension_cap = c.dimension_cap;
  opt.dense_cap = c.sweep_dense_cap;
  opt.threads = rt.threads;
  opt.seed = rt.seed;
  const SweepResult s = renorm_sweep(grid, build_params(c), c.max_total, c.kappa_schedule, opt);
  std::ostringstream csv;
  write_sweep_csv(s, csv);
  const auto csv_path = output_path(rt, c.outputs.csv);
  write_text(csv_path, csv.str());
  Json doc = sweep_json(s);
  doc["command"] = "renorm-sweep";
  doc["config"] = config_json(c, rt);
  const auto json_path = output_path(rt, c.outputs.json.value_or("sweep.json"));
  write_json(json_path, doc);
  out << csv.str() << "sweep written to " << csv_path.string() << " and " << json_path.string() << "\n";
  return 0;
}

inline int cmd_massless(const RunConfig& c, const RuntimeOptions& rt, std::ostream& out) {
  const Instance in = build_instance(c, rt);
  MasslessOptions opt;
  opt.sigma = c.sigma;
  opt.couple_outside = c.couple_outside;
  const MasslessReport m = massless_study(in, opt);
  TheoremReport rep;
  rep.selector = "massless-study";
  rep.checks.push_back(observation("massless.i.full_improves", m.verdicts[0], 0.0, 0.0, m.witnesses[0]));
  rep.checks.push_back(observation("massless.ii.outer_improves", m.verdicts[1], 0.0, 0.0, m.witnesses[1]));
  rep.checks.push_back(observation("massless.iii.local_improves", m.verdicts[2], 0.0, 0.0, m.witnesses[2]));
  rep.checks.push_back(assertion("massless.agreement", m.all_agree(), 0.0, std::nullopt));
  rep.checks.push_back(assertion("massless.scan_agreement", m.scan.agree(), 0.0, std::nullopt));
  rep.checks.push_back(assertion("massless.decomposition", m.decomposition_residual <= c.decomposition_tol,
                                 m.decomposition_residual, c.decomposition_tol));
  Json doc = massless_json(m);
  doc["command"] = "massless-study";
  doc["config"] = config_json(c, rt);
  return finish(rep, doc, c, rt, "massless.json", out);
}

inline int cmd_theorem_report(const RunConfig& c, const RuntimeOptions& rt, std::ostream& out) {
  const Instance in = build_instance(c, rt);
  const TheoremReport rep = theorem_report(c.selector, in, c.sigma);
  Json doc{{"command", "theorem-report"}, {"selector", rep.selector}, {"config", config_json(c, rt)}};
  return finish(rep, doc, c, rt, "theorem_report.json", out);
}

}  // namespace detail

inline std::string command_help(const std::string& name) {
  static const std::map<std::string, std::string> help{
      {"build-check", "assemble H(P) and the local Hamiltonians, check the decompositions"},
      {"spectrum", "ground energy, gap and ground vector of H(P)"},
      {"positivity", "entrywise positivity of e^{-beta H} over the region family"},
      {"renorm-sweep", "ground energy against the UV cutoff kappa"},
      {"massless-study", "zero-mass grid, coupling inside and outside B_sigma"},
      {"theorem-report", "run the checks for one selector"}};
  return help.at(name);
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"build-check",  "spectrum",       "positivity",
                                              "renorm-sweep", "massless-study", "theorem-report"};
  return names;
}

/// Runs one command line (args excludes the program name).
inline int execute_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                           std::ostream& err = std::cerr) {
  CLI::App app{"Renormalized Hamiltonian nets for the truncated Nelson model"};
  app.require_subcommand(1, 1);
  std::string config_path;
  RuntimeOptions rt;
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : commands()) {
    CLI::App* sub = app.add_subcommand(name, command_help(name));
    sub->add_option("--config", config_path, "YAML configuration file")->required();
    sub->add_option("--out-dir", rt.out_dir, "directory for CSV/JSON outputs");
    sub->add_option("--threads", rt.threads, "worker threads")->check(CLI::Range(1u, 256u));
    sub->add_option("--seed", rt.seed, "seed for iterative eigensolvers");
    subs[name] = sub;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  try {
    const RunConfig c = load_config(config_path);
    if (command == "build-check") return detail::cmd_build_check(c, rt, out);
    if (command == "spectrum") return detail::cmd_spectrum(c, rt, out);
    if (command == "positivity") return detail::cmd_positivity(c, rt, out);
    if (command == "renorm-sweep") return detail::cmd_renorm_sweep(c, rt, out);
    if (command == "massless-study") return detail::cmd_massless(c, rt, out);
    return detail::cmd_theorem_report(c, rt, out);
  } catch (const SizeError& e) {
    err << "error: basis refused: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    err << "error: " << config_path << ": " << e.what() << "\n";
    return 2;
  } catch (const InfraredError& e) {
    err << "error: " << config_path << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nelsonnet::cli
