#pragma once

// Scripted studies on top of the operator modules: cutoff sweeps, the
// massless sigma-split harness and pass/fail theorem reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "nelsonnet/cone.hpp"
#include "nelsonnet/errors.hpp"
#include "nelsonnet/fock.hpp"
#include "nelsonnet/linalg.hpp"
#include "nelsonnet/modegrid.hpp"
#include "nelsonnet/nelson.hpp"
#include "nelsonnet/semigroup.hpp"

namespace nelsonnet {

using Json = nlohmann::ordered_json;

/// %.17g formatting used for every floating-point value written as text.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Serializes like Json::dump(indent) but prints floating-point numbers with
/// %.17g so that text outputs use one number format throughout.
inline void write_json_text(const Json& j, std::ostream& os, int indent = 2, int depth = 0) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  if (j.is_number_float()) {
    const double x = j.get<double>();
    std::string t = format_double(x);
    if (t.find_first_of(".eEn") == std::string::npos) t += ".0";
    os << t;
  } else if (j.is_object()) {
    if (j.empty()) {
      os << "{}";
      return;
    }
    os << "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) os << ",\n";
      first = false;
      os << pad << Json(it.key()).dump() << ": ";
      write_json_text(it.value(), os, indent, depth + 1);
    }
    os << "\n" << close << "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      os << "[]";
      return;
    }
    os << "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i > 0) os << ",\n";
      os << pad;
      write_json_text(j[i], os, indent, depth + 1);
    }
    os << "\n" << close << "]";
  } else {
    os << j.dump();
  }
}

/// JSON number, or null for non-finite values.
inline Json json_number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json params_json(const NelsonParams& p) {
  Json P = Json::array();
  for (Eigen::Index i = 0; i < p.P.size(); ++i) P.push_back(p.P(i));
  return Json{{"P", P}, {"g", p.g}, {"K", p.K}};
}

// ---------------------------------------------------------------- sweeps

struct SweepRow {
  double kappa = 0.0;
  double E_counterterm = 0.0;  // E(B_kappa)
  double E0 = 0.0;
  double gap = 0.0;
  double min_entry = 0.0;
  std::size_t dim = 0;
  std::string solver;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string grid;
  NelsonParams params;
  bool with_counterterm = true;
  int max_total = 0;
};

struct SweepOptions {
  bool with_counterterm = true;
  std::size_t dimension_cap = OccupationBasis::kDefaultDimensionCap;
  std::size_t dense_cap = 1200;  // above this the Lanczos solver is used
  unsigned threads = 1;
  std::uint64_t seed = 7;
};

/// Lowest two eigenvalues and the sign-fixed ground vector, dense or Lanczos.
inline PerronReport ground_state(const SparseOperator& h, std::size_t dense_cap, std::uint64_t seed = 7) {
  PerronOptions opt;
  opt.dense_cap = dense_cap;
  opt.seed = seed;
  opt.cross_check = false;
  return perron_frobenius_check(h, opt);
}

/// For each kappa, H_kappa(P) on the truncated Fock space of the modes of B_kappa.
/// The grid is fixed; only the region grows along the schedule.
inline SweepResult renorm_sweep(const GridPtr& grid, const NelsonParams& params, int max_total,
                                const std::vector<double>& kappas, const SweepOptions& opt = {}) {
  params.validate(*grid);
  if (kappas.empty()) throw DomainError("kappa schedule is empty");
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    if (!(kappas[i] > 0.0)) throw DomainError("kappa " + format_double(kappas[i]) + " is not positive");
    if (kappas[i] > grid->extent()) {
      throw DomainError("kappa " + format_double(kappas[i]) + " exceeds the grid extent " +
                        format_double(grid->extent()));
    }
    if (i > 0 && !(kappas[i] > kappas[i - 1])) {
      throw DomainError("kappa schedule must be strictly increasing at kappa " + format_double(kappas[i]));
    }
  }
  SweepResult result;
  result.grid = grid->descriptor();
  result.params = params;
  result.with_counterterm = opt.with_counterterm;
  result.max_total = max_total;
  result.rows.resize(kappas.size());
  // Check every basis size up front so no work is done on a refused schedule.
  for (double kappa : kappas) {
    OccupationBasis::dimension(static_cast<int>(Region::ball(grid, kappa).size()), max_total, opt.dimension_cap);
  }
  parallel_for(kappas.size(), opt.threads, [&](std::size_t r) {
    const Region ball = Region::ball(grid, kappas[r]);
    const GridPtr sub = ball.subgrid();
    const OccupationBasis basis(static_cast<int>(sub->size()), max_total, opt.dimension_cap);
    const HamiltonianParts parts =
        build_kappa_hamiltonian(*sub, basis, params, Region::all(sub), opt.with_counterterm);
    const PerronReport pf = ground_state(parts.assembled(), opt.dense_cap, opt.seed);
    SweepRow& row = result.rows[r];
    row.kappa = kappas[r];
    row.E_counterterm = parts.counterterm;
    row.E0 = pf.ground_energy;
    row.gap = pf.gap;
    row.min_entry = pf.min_entry;
    row.dim = basis.size();
    row.solver = pf.solver;
  });
  return result;
}

inline void write_sweep_csv(const SweepResult& s, std::ostream& os) {
  os << "kappa,E_counterterm,E0,gap,min_entry,dim\n";
  for (const auto& r : s.rows) {
    os << format_double(r.kappa) << ',' << format_double(r.E_counterterm) << ',' << format_double(r.E0) << ','
       << format_double(r.gap) << ',' << format_double(r.min_entry) << ',' << r.dim << '\n';
  }
}

inline Json sweep_json(const SweepResult& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"kappa", r.kappa},
                    {"E_counterterm", r.E_counterterm},
                    {"E0", r.E0},
                    {"gap", json_number(r.gap)},
                    {"min_entry", r.min_entry},
                    {"dim", r.dim},
                    {"solver", r.solver}});
  }
  return Json{{"grid", s.grid},
              {"params", params_json(s.params)},
              {"max_total", s.max_total},
              {"with_counterterm", s.with_counterterm},
              {"rows", rows}};
}

// ------------------------------------------------------- check records

enum class Role { assertion, observation, diagnostic, note };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::assertion: return "assertion";
    case Role::observation: return "observation";
    case Role::diagnostic: return "diagnostic";
    case Role::note: return "note";
  }
  return "";
}

/// One line of a report. Assertions carry pass/fail; observations report
/// whether a property holds without deciding the outcome of the run.
struct CheckRecord {
  std::string check;
  std::string verdict;
  Json witness;
  double extremal = 0.0;
  std::optional<double> threshold;
  Role role = Role::assertion;

  bool failed() const { return role == Role::assertion && verdict == "fail"; }
};

inline CheckRecord assertion(std::string name, bool ok, double extremal, std::optional<double> threshold,
                             Json witness = nullptr) {
  return {std::move(name), ok ? "pass" : "fail", std::move(witness), extremal, threshold, Role::assertion};
}

inline CheckRecord observation(std::string name, bool holds, double extremal, std::optional<double> threshold,
                               Json witness = nullptr) {
  return {std::move(name), holds ? "holds" : "violated", std::move(witness), extremal, threshold, Role::observation};
}

inline Json record_json(const CheckRecord& r) {
  return Json{{"check", r.check},
              {"verdict", r.verdict},
              {"witness", r.witness},
              {"extremal", json_number(r.extremal)},
              {"threshold", r.threshold ? json_number(*r.threshold) : Json(nullptr)},
              {"role", role_name(r.role)}};
}

inline Json entry_witness_json(const std::optional<EntryWitness>& w) {
  if (!w) return nullptr;
  return Json{{"row", w->row}, {"col", w->col}, {"value", w->value}};
}

// ------------------------------------------------------------ instances

/// Everything a report needs: the grid, parameters and regions, with the
/// truncated basis over every grid mode.
struct Instance {
  GridPtr grid;
  NelsonParams params;
  int max_total = 2;
  std::size_t dimension_cap = OccupationBasis::kDefaultDimensionCap;
  std::optional<Region> lambda;  // defaults to the ball of half the extent
  std::optional<double> kappa;   // defaults to the grid extent
  std::optional<Region> coupled; // interaction restricted to these modes when set
  std::vector<Region> family;    // bounded regions quantified over; generated when empty
  SemigroupPlan plan;
  PerronOptions perron;
  double decomposition_tol = 1e-12;
};

/// Nonempty subsets of the grid modes when there are at most `exhaustive`
/// modes; otherwise balls at each distinct radius, their nonempty complements
/// and the single modes.
inline std::vector<Region> default_family(const GridPtr& grid, std::size_t exhaustive = 6) {
  std::vector<Region> out;
  const std::size_t m = grid->size();
  if (m <= exhaustive) {
    for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < m; ++i) {
        if (mask & (std::size_t{1} << i)) members.push_back(i);
      }
      out.push_back(Region::explicit_set(grid, members));
    }
    return out;
  }
  std::vector<double> radii;
  for (std::size_t i = 0; i < m; ++i) radii.push_back(std::sqrt(grid->momentum_squared(i)));
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12; }),
              radii.end());
  for (double r : radii) {
    Region b = Region::ball(grid, r);
    if (!b.empty()) out.push_back(b);
    Region c = b.complement();
    if (!c.empty()) out.push_back(c);
  }
  for (std::size_t i = 0; i < m; ++i) out.push_back(Region::explicit_set(grid, {i}));
  return out;
}

struct ResolvedInstance {
  const Instance* in = nullptr;
  OccupationBasis basis;
  Region lambda;
  double kappa = 0.0;
  std::vector<Region> family;
};

inline ResolvedInstance resolve(const Instance& in) {
  if (!in.grid) throw DomainError("instance has no grid");
  in.params.validate(*in.grid);
  in.plan.validate();
  const double kappa = in.kappa.value_or(in.grid->extent());
  Region lambda = in.lambda.value_or(Region::ball(in.grid, 0.5 * in.grid->extent()));
  if (lambda.grid() != in.grid) throw DomainError("region " + lambda.descriptor() + " is not on the instance grid");
  if (in.coupled && in.coupled->grid() != in.grid) throw DomainError("coupling region is not on the instance grid");
  return ResolvedInstance{&in, OccupationBasis(static_cast<int>(in.grid->size()), in.max_total, in.dimension_cap),
                          std::move(lambda), kappa, in.family.empty() ? default_family(in.grid) : in.family};
}

/// The Hamiltonian H of the instance: full_P convention, coupled on every
/// grid mode (or on the coupling region), counterterm included.
inline SparseOperator instance_hamiltonian(const ResolvedInstance& r) {
  HamiltonianOptions options;
  options.convention = MomentumConvention::full_P;
  options.coupled = r.in->coupled;
  return build_cutoff_hamiltonian(*r.in->grid, r.basis, r.in->params, Region::all(r.in->grid), options).assembled();
}

inline LocalHamiltonian instance_local(const ResolvedInstance& r, const Region& region) {
  return local_hamiltonian(region, r.in->max_total, r.in->params, r.in->coupled);
}

/// e^{-beta H} > 0 for every beta in the plan; witness from the first failing beta.
struct ImprovementVerdict {
  bool holds = true;
  double min_entry = std::numeric_limits<double>::infinity();
  std::optional<double> beta;
  std::optional<EntryWitness> witness;
};

inline ImprovementVerdict improves_for_all(const SparseOperator& h, const SemigroupPlan& plan) {
  ImprovementVerdict v;
  std::vector<OrderVerdict> per(plan.betas.size());
  const Eigen::MatrixXd dense = h.dense();
  if (static_cast<std::size_t>(h.dim()) > plan.dense_cap) {
    throw SizeError("positivity verdicts are dense", static_cast<std::size_t>(h.dim()), plan.dense_cap);
  }
  parallel_for(plan.betas.size(), plan.threads, [&](std::size_t k) {
    per[k] = operator_order(linalg::semigroup_dense(dense, plan.betas[k]), OrderMode::improves);
  });
  for (std::size_t k = 0; k < per.size(); ++k) {
    v.min_entry = std::min(v.min_entry, per[k].extremal);
    if (v.holds && !per[k].holds) {
      v.holds = false;
      v.beta = plan.betas[k];
      v.witness = per[k].witness;
    }
  }
  return v;
}

inline Json improvement_witness(const ImprovementVerdict& v, const std::string& region = {}) {
  if (v.holds) return nullptr;
  Json w = entry_witness_json(v.witness);
  w["beta"] = *v.beta;
  if (!region.empty()) w["region"] = region;
  return w;
}

/// Local improvement over a region family: true when every member improves.
struct FamilyVerdict {
  bool holds = true;
  double min_entry = std::numeric_limits<double>::infinity();
  Json witness = nullptr;
};

inline FamilyVerdict family_improves(const ResolvedInstance& r, const std::vector<Region>& family) {
  FamilyVerdict out;
  for (const auto& region : family) {
    const LocalHamiltonian local = instance_local(r, region);
    const ImprovementVerdict v = improves_for_all(local.parts.assembled(), r.in->plan);
    out.min_entry = std::min(out.min_entry, v.min_entry);
    if (out.holds && !v.holds) {
      out.holds = false;
      out.witness = improvement_witness(v, region.descriptor());
    }
  }
  return out;
}

// ------------------------------------------------------- massless study

struct MasslessOptions {
  double sigma = 0.5;
  bool couple_outside = true;  // false zeroes the coupling on B_sigma^c
  std::vector<Region> family;  // tested Lambda inside B_sigma^c; generated when empty
};

struct MasslessReport {
  double sigma = 0.0;
  bool degenerate = false;  // B_sigma^c empty
  std::array<bool, 3> verdicts{};  // (i) full, (ii) B_sigma^c, (iii) every tested Lambda in B_sigma^c
  std::array<std::array<bool, 3>, 3> agreement{};
  std::array<Json, 3> witnesses;
  std::vector<std::string> family;
  double decomposition_residual = 0.0;
  EquivalenceReport scan;

  bool all_agree() const { return verdicts[0] == verdicts[1] && verdicts[1] == verdicts[2]; }
};

/// H = H(B_sigma) + W(B_sigma) + H(B_sigma^c) on a massless grid, and the
/// three improvement verdicts compared pairwise.
inline MasslessReport massless_study(const Instance& in, const MasslessOptions& opt) {
  if (!in.grid) throw DomainError("instance has no grid");
  if (in.grid->mass() != 0.0) throw DomainError("massless study needs a grid with m = 0");
  if (!(opt.sigma > 0.0)) throw DomainError("sigma must be positive");
  Instance local_in = in;
  const Region inner = Region::ball(in.grid, opt.sigma);
  const Region outer = inner.complement();
  if (!opt.couple_outside) local_in.coupled = in.coupled ? intersect(*in.coupled, inner) : inner;
  local_in.lambda = inner;
  const ResolvedInstance r = resolve(local_in);

  MasslessReport rep;
  rep.sigma = opt.sigma;
  rep.degenerate = outer.empty();

  const LocalHamiltonian h_in = instance_local(r, inner);
  const LocalHamiltonian h_out = instance_local(r, outer);
  const FactorizationMap map(r.basis, inner, outer);
  const SparseOperator h = kron_embed(h_in.parts.assembled(), SparseOperator::identity(static_cast<Eigen::Index>(map.right().size())), map) +
                           cross_term(*r.in->grid, r.basis, r.in->params, inner) +
                           kron_embed(SparseOperator::identity(static_cast<Eigen::Index>(map.left().size())), h_out.parts.assembled(), map);
  rep.decomposition_residual = max_abs_difference(h, instance_hamiltonian(r));

  const ImprovementVerdict full = improves_for_all(h, r.in->plan);
  rep.verdicts[0] = full.holds;
  rep.witnesses[0] = improvement_witness(full);

  const ImprovementVerdict out_v = improves_for_all(h_out.parts.assembled(), r.in->plan);
  rep.verdicts[1] = out_v.holds;
  rep.witnesses[1] = improvement_witness(out_v, outer.descriptor());

  std::vector<Region> family = opt.family;
  if (family.empty() && !outer.empty()) {
    family.push_back(outer);
    for (auto i : outer.members()) family.push_back(Region::explicit_set(in.grid, {i}));
  }
  for (const auto& f : family) {
    if (!is_subset(f, outer)) throw DomainError("tested region " + f.descriptor() + " is not inside B_sigma^c");
    rep.family.push_back(f.descriptor());
  }
  const FamilyVerdict fam = family_improves(r, family);
  rep.verdicts[2] = fam.holds;
  rep.witnesses[2] = fam.witness;

  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) rep.agreement[a][b] = rep.verdicts[a] == rep.verdicts[b];
  }
  rep.scan = positivity_equivalence_scan(h, h_in.parts.assembled(), h_out.parts.assembled(), map, r.in->plan);
  return rep;
}

inline Json massless_json(const MasslessReport& m) {
  Json agreement = Json::array();
  for (const auto& row : m.agreement) agreement.push_back(Json(std::vector<bool>(row.begin(), row.end())));
  return Json{{"sigma", m.sigma},
              {"degenerate", m.degenerate},
              {"verdicts", {{"i_full", m.verdicts[0]}, {"ii_outer", m.verdicts[1]}, {"iii_local", m.verdicts[2]}}},
              {"witnesses", {{"i_full", m.witnesses[0]}, {"ii_outer", m.witnesses[1]}, {"iii_local", m.witnesses[2]}}},
              {"agreement", agreement},
              {"all_agree", m.all_agree()},
              {"tested_regions", m.family},
              {"decomposition_residual", m.decomposition_residual},
              {"scan", {{"full_side", m.scan.full_side}, {"tensor_side", m.scan.tensor_side}, {"agree", m.scan.agree()}}}};
}

// ------------------------------------------------------- theorem report

struct TheoremReport {
  std::string selector;
  std::vector<CheckRecord> checks;

  bool passed() const {
    return std::none_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.failed(); });
  }
};

inline Json report_json(const TheoremReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks) checks.push_back(record_json(c));
  return Json{{"selector", r.selector}, {"passed", r.passed()}, {"checks", checks}};
}

inline const std::vector<std::string>& theorem_selectors() {
  static const std::vector<std::string> names{"A1-A4", "MainTh1", "MainTh2", "UniqG", "Gross", "Decomposition"};
  return names;
}

namespace detail {

inline std::string canonical_selector(const std::string& s) {
  if (s == "A1-A4" || s == "A1...A4" || s == "A1…A4" || s == "assumptions") return "A1-A4";
  for (const auto& n : theorem_selectors()) {
    if (s == n) return n;
  }
  std::string known;
  for (const auto& n : theorem_selectors()) known += (known.empty() ? "" : ", ") + n;
  throw DomainError("unknown theorem selector '" + s + "' (known: " + known + ")");
}

inline void decomposition_checks(const ResolvedInstance& r, TheoremReport& rep) {
  const auto& grid = *r.in->grid;
  const double tol = r.in->decomposition_tol;
  const Region ball = Region::ball(r.in->grid, r.kappa);
  Json where{{"lambda", r.lambda.descriptor()}, {"kappa", r.kappa}};

  const double net = verify_net_decomposition(grid, r.basis, r.in->params, r.lambda, r.kappa);
  rep.checks.push_back(assertion("decomposition.kappa", net <= tol, net, tol, where));
  const double full = verify_full_decomposition(grid, r.basis, r.in->params, r.lambda);
  rep.checks.push_back(assertion("decomposition.full", full <= tol, full, tol, where));

  const double nested = verify_nested_decomposition(grid, r.basis, r.in->params, ball, r.lambda);
  if (r.in->params.P.isZero(0.0)) {
    rep.checks.push_back(assertion("decomposition.nested", nested <= tol, nested, tol, where));
  } else {
    CheckRecord c{"decomposition.nested", nested <= tol ? "pass" : "flagged", where, nested, tol, Role::diagnostic};
    c.witness["note"] = "nested identity with half-P local Hamiltonians is exact only at P = 0";
    rep.checks.push_back(c);
  }
}

inline void assumption_checks(const ResolvedInstance& r, TheoremReport& rep) {
  const auto& grid = *r.in->grid;
  const auto& params = r.in->params;
  const Region ball = Region::ball(r.in->grid, r.kappa);

  // (A.1): every cross term is a multiplication operator.
  double off = 0.0;
  bool diagonal = true;
  for (const auto& w : {cross_term(grid, r.basis, params, r.lambda),
                        cross_term_kappa(grid, r.basis, params, r.lambda, ball),
                        cross_term_nested(grid, r.basis, params, ball, r.lambda)}) {
    diagonal = diagonal && w.is_diagonal();
    off = std::max(off, w.max_off_diagonal());
  }
  rep.checks.push_back(assertion("A1.cross_terms_diagonal", diagonal, off, 0.0));

  CheckRecord a2{"A2.modular_commutation", "pass", Json{{"note", "Delta = 1 in the occupation-basis realization"}},
                 0.0, std::nullopt, Role::note};
  rep.checks.push_back(a2);

  // (A.3): local Hamiltonians have nonpositive off-diagonal entries, so their
  // semigroups preserve the cone; the semigroups are checked directly as well.
  std::vector<Region> regions{r.lambda};
  if (!r.lambda.complement().empty()) regions.push_back(r.lambda.complement());
  for (const auto& f : r.family) regions.push_back(f);
  double worst_off = -std::numeric_limits<double>::infinity();
  double worst_entry = std::numeric_limits<double>::infinity();
  Json a3_witness = nullptr;
  for (const auto& region : regions) {
    const SparseOperator h = instance_local(r, region).parts.assembled();
    const Eigen::MatrixXd d = h.dense();
    Eigen::MatrixXd offd = d;
    offd.diagonal().setConstant(-std::numeric_limits<double>::infinity());
    if (d.rows() > 1) worst_off = std::max(worst_off, offd.maxCoeff());
    for (double beta : r.in->plan.betas) {
      const OrderVerdict v = operator_order(linalg::semigroup_dense(d, beta), OrderMode::preserves);
      worst_entry = std::min(worst_entry, v.extremal);
      if (!v.holds && a3_witness.is_null()) {
        a3_witness = entry_witness_json(v.witness);
        a3_witness["beta"] = beta;
        a3_witness["region"] = region.descriptor();
      }
    }
  }
  rep.checks.push_back(assertion("A3.metzler_generators", !(worst_off > 0.0), worst_off, 0.0));
  rep.checks.push_back(assertion("A3.semigroup_preserves", a3_witness.is_null(), worst_entry, 0.0, a3_witness));

  // (A.4)(i): the vacuum is a normalized cone vector.
  const Eigen::VectorXd vac = vacuum_vector(r.basis);
  rep.checks.push_back(assertion("A4.i.vacuum_in_cone", in_cone(vac) && vac.norm() == 1.0, vac.minCoeff(), 0.0));

  // (A.4)(ii): omega = omega_Lambda (x) omega_{rest} for every split with nonempty rest.
  double fact = 0.0;
  for (const auto& region : regions) {
    const FactorizationMap map(r.basis, region, region.complement());
    fact = std::max(fact, (map.embed_product(vacuum_vector(map.left()), vacuum_vector(map.right())) - vac)
                              .cwiseAbs()
                              .maxCoeff());
  }
  rep.checks.push_back(assertion("A4.ii.vacuum_factorizes", fact == 0.0, fact, 0.0));

  // (A.4)(iii): 0 <= q_Lambda and 1 - q_Lambda >= 0 entrywise.
  double q_min = std::numeric_limits<double>::infinity();
  Json q_witness = nullptr;
  for (const auto& region : regions) {
    const FactorizationMap map(r.basis, region, region.complement());
    const Eigen::MatrixXd q = cone_projector(map, vacuum_vector(map.right())).dense();
    const Eigen::MatrixXd perp = Eigen::MatrixXd::Identity(q.rows(), q.cols()) - q;
    for (const Eigen::MatrixXd* m : {&q, &perp}) {
      const OrderVerdict v = operator_order(*m, OrderMode::preserves);
      q_min = std::min(q_min, v.extremal);
      if (!v.holds && q_witness.is_null()) {
        q_witness = entry_witness_json(v.witness);
        q_witness["region"] = region.descriptor();
      }
    }
  }
  rep.checks.push_back(assertion("A4.iii.vacuum_projector_order", q_witness.is_null(), q_min, 0.0, q_witness));

  // The coherent reference vector factorizes only up to truncation.
  const ReferenceState ref = reference_state(grid, r.basis);
  const FactorizationMap map(r.basis, r.lambda, r.lambda.complement());
  const double defect = coherent_factorization_defect(map, ref.xi);
  CheckRecord c{"reference_state.factorization_defect", "pass", Json{{"tail_mass", ref.tail_mass}}, defect,
                std::nullopt, Role::diagnostic};
  rep.checks.push_back(c);
}

inline void mainth1_checks(const ResolvedInstance& r, TheoremReport& rep) {
  const SparseOperator h = instance_hamiltonian(r);
  std::optional<EquivalenceReport> first;
  RayMask reached;
  std::vector<std::string> names;
  for (const auto& region : r.family) {
    const FactorizationMap map(r.basis, region, region.complement());
    const EquivalenceReport scan = positivity_equivalence_scan(h, instance_local(r, region).parts.assembled(),
                                                               instance_local(r, region.complement()).parts.assembled(),
                                                               map, r.in->plan);
    if (!first) {
      first = scan;
      reached = scan.reached;
    } else {
      reached = reached.array() || scan.reached.array();
    }
    names.push_back(region.descriptor());
  }
  if (!first) throw DomainError("MainTh1 needs a nonempty region family");
  const auto unreached = first_unreached(reached);
  double full_min = std::numeric_limits<double>::infinity();
  for (const auto& b : first->per_beta) full_min = std::min(full_min, b.full_min_entry);
  Json uw = nullptr;
  if (unreached) uw = Json{{"row", unreached->first}, {"col", unreached->second}};
  Json fw = entry_witness_json(first->full_witness);
  rep.checks.push_back(observation("MainTh1.i.full_improves", first->full_side, full_min, 0.0, fw));
  rep.checks.push_back(observation("MainTh1.ii.local_pairing", !unreached, 0.0, 0.0, uw));
  rep.checks.push_back(assertion("MainTh1.equivalence", first->full_side == !unreached, 0.0, std::nullopt,
                                 Json{{"regions", names}}));
}

inline void mainth2_checks(const ResolvedInstance& r, TheoremReport& rep) {
  const ImprovementVerdict v = improves_for_all(instance_hamiltonian(r), r.in->plan);
  rep.checks.push_back(observation("MainTh2.i.full_improves", v.holds, v.min_entry, 0.0, improvement_witness(v)));
  const FamilyVerdict fam = family_improves(r, r.family);
  rep.checks.push_back(observation("MainTh2.ii.local_improves", fam.holds, fam.min_entry, 0.0, fam.witness));
  rep.checks.push_back(assertion("MainTh2.equivalence", v.holds == fam.holds, 0.0, std::nullopt,
                                 Json{{"regions", r.family.size()}}));
}

inline void uniqg_checks(const ResolvedInstance& r, TheoremReport& rep) {
  PerronOptions opt = r.in->perron;
  const PerronReport pf = perron_frobenius_check(instance_hamiltonian(r), opt);
  Json w{{"ground_energy", pf.ground_energy},
         {"gap", json_number(pf.gap)},
         {"min_index", pf.min_index},
         {"solver", pf.solver}};
  rep.checks.push_back(observation("UniqG.gap", pf.gap > opt.gap_tol, pf.gap, opt.gap_tol, w));
  rep.checks.push_back(observation("UniqG.strictly_positive_ground_state", pf.min_entry > opt.pos_tol, pf.min_entry,
                                   opt.pos_tol, w));
  if (pf.semigroup_improves) {
    rep.checks.push_back(assertion("UniqG.perron_frobenius_consistency", pf.consistent(), pf.min_entry, opt.pos_tol,
                                   Json{{"semigroup_improves", *pf.semigroup_improves},
                                        {"beta", opt.beta},
                                        {"witness", entry_witness_json(pf.semigroup_witness)}}));
  }
  const FamilyVerdict fam = family_improves(r, r.family);
  rep.checks.push_back(observation("UniqG.ii.local_improves", fam.holds, fam.min_entry, 0.0, fam.witness));
  rep.checks.push_back(assertion("UniqG.equivalence", pf.unique_positive == fam.holds, 0.0, std::nullopt,
                                 Json{{"unique_positive", pf.unique_positive}}));
}

inline void gross_checks(const ResolvedInstance& r, TheoremReport& rep, std::optional<double> sigma) {
  const auto& grid = *r.in->grid;
  const Eigen::MatrixXd g = gross_transformation(grid, r.basis, r.in->params, std::nullopt, r.in->plan.dense_cap);
  const double orth = (g.transpose() * g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
  rep.checks.push_back(assertion("Gross.orthogonality", orth <= 1e-10, orth, 1e-10));

  const Eigen::MatrixXd h = instance_hamiltonian(r).dense();
  const Eigen::MatrixXd gh = g * h * g.transpose();
  const Eigen::VectorXd s1 = linalg::symmetric_eigen(h).values;
  const Eigen::VectorXd s2 = linalg::symmetric_eigen(0.5 * (gh + gh.transpose())).values;
  const double spectral = (s1 - s2).cwiseAbs().maxCoeff();
  rep.checks.push_back(assertion("Gross.spectrum_invariant", spectral <= 1e-9, spectral, 1e-9));

  if (sigma) {
    const Eigen::MatrixXd gs = gross_transformation(grid, r.basis, r.in->params, sigma, r.in->plan.dense_cap);
    const double o2 = (gs.transpose() * gs - Eigen::MatrixXd::Identity(gs.rows(), gs.cols())).cwiseAbs().maxCoeff();
    rep.checks.push_back(assertion("Gross.infrared_orthogonality", o2 <= 1e-10, o2, 1e-10, Json{{"sigma", *sigma}}));
  }
  double disp = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    disp = std::max(disp, gross_displacement_error(grid, r.basis, r.in->params, i, 0));
  }
  CheckRecord c{"Gross.displacement_truncation", "pass", Json{{"sector", 0}}, disp, std::nullopt, Role::diagnostic};
  rep.checks.push_back(c);
}

}  // namespace detail

/// Runs the check suite behind one selector and collects its records.
inline TheoremReport theorem_report(const std::string& selector, const Instance& in,
                                    std::optional<double> sigma = std::nullopt) {
  TheoremReport rep;
  rep.selector = detail::canonical_selector(selector);
  const ResolvedInstance r = resolve(in);
  if (rep.selector == "Decomposition") detail::decomposition_checks(r, rep);
  if (rep.selector == "A1-A4") detail::assumption_checks(r, rep);
  if (rep.selector == "MainTh1") detail::mainth1_checks(r, rep);
  if (rep.selector == "MainTh2") detail::mainth2_checks(r, rep);
  if (rep.selector == "UniqG") detail::uniqg_checks(r, rep);
  if (rep.selector == "Gross") detail::gross_checks(r, rep, sigma);
  return rep;
}

}  // namespace nelsonnet
