// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nelsonnet/cli.hpp"

using namespace nelsonnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

NelsonParams params(int d, double g, double K, std::vector<double> P = {}) {
  NelsonParams p;
  p.P = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < P.size(); ++i) p.P(static_cast<Eigen::Index>(i)) = P[i];
  p.g = g;
  p.K = K;
  return p;
}

// ---------------------------------------------------------------- 1

Outcome decomposition_exactness() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> dim_pick(1, 3);
  std::uniform_int_distribution<int> modes_pick(2, 5);
  std::uniform_int_distribution<int> cap_pick(1, 3);
  double worst_net = 0.0;
  double worst_nested = 0.0;
  double worst_nested_moving = 0.0;
  const int configs = 24;
  for (int t = 0; t < configs; ++t) {
    const int d = dim_pick(rng);
    const int m = modes_pick(rng);
    Eigen::MatrixXd k(d, m);
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
      for (int a = 0; a < d; ++a) k(a, i) = 2.0 * u(rng);
      w[static_cast<std::size_t>(i)] = 0.2 + std::abs(u(rng));
    }
    const GridPtr grid = ModeGrid::from_modes(k, w, 0.3 + std::abs(u(rng)));
    OccupationBasis basis(m, cap_pick(rng));
    std::vector<double> P(static_cast<std::size_t>(d));
    for (auto& x : P) x = u(rng);
    const NelsonParams p = params(d, 0.2 + std::abs(u(rng)), 0.5 * grid->extent(), P);

    // kappa: one of the mode radii; Lambda: a random subset of B_kappa.
    const double kappa = std::sqrt(grid->momentum_squared(static_cast<std::size_t>(rng() % static_cast<unsigned>(m))));
    const Region ball = Region::ball(grid, kappa);
    std::vector<std::size_t> members;
    for (auto i : ball.members()) {
      if (rng() % 2) members.push_back(i);
    }
    const Region lambda = Region::explicit_set(grid, members);
    worst_net = std::max(worst_net, verify_net_decomposition(*grid, basis, p, lambda, kappa));

    // Nested Lambda inside Lambda' = Lambda plus a random part of its complement.
    std::vector<std::size_t> outer_members = members;
    const Region rest_of_grid = lambda.complement();
    for (auto i : rest_of_grid.members()) {
      if (rng() % 2) outer_members.push_back(i);
    }
    const Region outer = Region::explicit_set(grid, outer_members);
    NelsonParams rest = p;
    rest.P.setZero();
    worst_nested = std::max(worst_nested, verify_nested_decomposition(*grid, basis, rest, outer, lambda));
    worst_nested_moving = std::max(worst_nested_moving, verify_nested_decomposition(*grid, basis, p, outer, lambda));
  }
  Outcome o;
  o.pass = worst_net <= 1e-12 && worst_nested <= 1e-12;
  o.detail = std::to_string(configs) + " configurations, max residual net " + fmt(worst_net) + ", nested (P = 0) " +
             fmt(worst_nested) + "; nested at P != 0 leaves " + fmt(worst_nested_moving) + " (reported only)";
  return o;
}

// ---------------------------------------------------------- 2 and 3

struct DefaultInstance {
  std::string name;
  GridPtr grid;
  int max_total;
};

std::vector<DefaultInstance> default_instances() {
  return {{"M=3 N=3", ModeGrid::build(1, 1.0, 1.0, 1.0, GridLayout::vertex), 3},
          {"M=4 N=2", ModeGrid::build(1, 2.0, 1.0, 1.0), 2}};
}

SparseOperator kappa_hamiltonian(const DefaultInstance& di, double g, double P) {
  OccupationBasis basis(static_cast<int>(di.grid->size()), di.max_total);
  return build_kappa_hamiltonian(*di.grid, basis, params(1, g, 0.5, {P}), Region::all(di.grid)).assembled();
}

Outcome positivity_improvement() {
  double worst = std::numeric_limits<double>::infinity();
  bool ok = true;
  int cases = 0;
  for (const auto& di : default_instances()) {
    for (double g : {0.1, 1.0}) {
      for (double P : {0.0, 0.6}) {
        const SparseOperator h = kappa_hamiltonian(di, g, P);
        for (double beta : {0.1, 1.0, 4.0}) {
          const auto v = operator_order(linalg::semigroup_dense(h.dense(), beta), OrderMode::improves);
          ok = ok && v.holds;
          worst = std::min(worst, v.extremal);
          ++cases;
        }
      }
    }
  }
  return {ok, std::to_string(cases) + " (instance, g, P, beta) cases, smallest entry " + fmt(worst)};
}

Outcome perron_frobenius() {
  double min_gap = std::numeric_limits<double>::infinity();
  double min_entry = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (const auto& di : default_instances()) {
    for (double g : {0.1, 1.0}) {
      for (double P : {0.0, 0.6}) {
        const PerronReport r = perron_frobenius_check(kappa_hamiltonian(di, g, P));
        ok = ok && r.gap > 1e-8 && r.min_entry > 1e-10 && r.consistent();
        min_gap = std::min(min_gap, r.gap);
        min_entry = std::min(min_entry, r.min_entry);
      }
    }
  }
  // Negative control: coupling restricted to k = 0, so the other occupations are conserved.
  const GridPtr grid = ModeGrid::build(1, 1.0, 1.0, 1.0, GridLayout::vertex);
  OccupationBasis basis(3, 2);
  HamiltonianOptions opt;
  opt.convention = MomentumConvention::full_P;
  opt.coupled = Region::ball(grid, 0.5);
  const PerronReport control =
      perron_frobenius_check(build_cutoff_hamiltonian(*grid, basis, params(1, 1.0, 0.5), Region::all(grid), opt)
                                 .assembled());
  const bool control_fails = !control.unique_positive;
  return {ok && control_fails, "min gap " + fmt(min_gap) + ", min ground entry " + fmt(min_entry) +
                                   ", decoupled control " + (control_fails ? "rejected" : "NOT rejected")};
}

// ---------------------------------------------------------------- 4

Outcome counterterm_cancellation() {
  // Three bosons at most: with two, the counterterm shift of the top sector has
  // no self-energy to cancel against and adds a sizeable g^6 term.
  const GridPtr small = ModeGrid::build(3, 1.0, 0.5, 1.0);
  SweepOptions opt;
  std::vector<double> ratios;
  for (double g : {0.2, 0.1, 0.05}) {
    const SweepResult s = renorm_sweep(small, params(3, g, 0.5), 3, {1.0}, opt);
    ratios.push_back(s.rows[0].E0 / std::pow(g, 4));
  }
  double spread = 0.0;
  for (double r : ratios) spread = std::max(spread, std::abs(r / ratios.back() - 1.0));
  const bool ratio_ok = spread <= 0.2;

  const GridPtr grid = ModeGrid::build(3, 2.0, 0.5, 1.0);
  SweepOptions bare;
  bare.with_counterterm = false;
  const std::vector<double> kappas{0.5, 1.0, 1.5, 2.0};
  const SweepResult s = renorm_sweep(grid, params(3, 0.3, 0.5), 2, kappas, bare);
  bool monotone = true;
  for (std::size_t i = 1; i < s.rows.size(); ++i) {
    monotone = monotone && s.rows[i].E0 < s.rows[i - 1].E0 && s.rows[i].E_counterterm < s.rows[i - 1].E_counterterm;
  }
  const double e0_drop = s.rows.front().E0 - s.rows.back().E0;
  const double ct_drop = s.rows.front().E_counterterm - s.rows.back().E_counterterm;
  const bool tracks = std::abs(e0_drop - ct_drop) <= 0.2 * std::abs(ct_drop);
  return {ratio_ok && monotone && tracks,
          "E0/g^4 spread " + fmt(spread) + "; bare E0 " + (monotone ? "strictly decreasing" : "NOT decreasing") +
              ", drop " + fmt(e0_drop) + " vs E_kappa drop " + fmt(ct_drop)};
}

// ---------------------------------------------------------------- 5

Outcome equivalence_metzler() {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int disagreements = 0;
  int positive = 0;
  for (int t = 0; t < 50; ++t) {
    const double density = t % 2 ? 0.15 : 0.03;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(50, 50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      a(i, i) = 4.0 * u(rng) - 2.0;
      for (Eigen::Index j = 0; j < 50; ++j) {
        if (i != j && u(rng) < density) a(i, j) = -u(rng);
      }
    }
    const PairingVerdict v = pairing_equivalence(a, {0.05, 0.5, 2.0});
    if (v.pairing != v.entrywise) ++disagreements;
    if (v.entrywise) ++positive;
  }
  return {disagreements == 0,
          "50 generators, " + std::to_string(positive) + " improving, " + std::to_string(disagreements) +
              " disagreements"};
}

// ---------------------------------------------------------------- 6

Outcome trotter() {
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double lo = 1e300;
  double hi = 0.0;
  bool nonneg = true;
  for (int t = 0; t < 12; ++t) {
    const Eigen::Index n = 12;
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      l(i, i) = 2.0 * u(rng);
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (u(rng) < 0.4) l(i, j) = l(j, i) = -u(rng);
      }
    }
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = 4.0 * u(rng) - 2.0;
    const SparseOperator lo_op = SparseOperator::from_dense(l);
    const SparseOperator w_op = SparseOperator::diagonal(w);
    const Eigen::MatrixXd exact = linalg::expm(-(l + Eigen::MatrixXd(w.asDiagonal())));
    const Eigen::MatrixXd t1 = trotter_product(lo_op, w_op, 1.0, 64);
    const Eigen::MatrixXd t2 = trotter_product(lo_op, w_op, 1.0, 128);
    const double ratio = (t1 - exact).norm() / (t2 - exact).norm();
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    nonneg = nonneg && operator_order(linalg::semigroup_dense(l, 1.0 / 64), OrderMode::preserves).holds &&
             w.unaryExpr([](double x) { return std::exp(-x / 64); }).minCoeff() >= 0.0 &&
             operator_order(t1, OrderMode::preserves).holds && operator_order(t2, OrderMode::preserves).holds;
  }
  return {lo >= 1.6 && hi <= 2.4 && nonneg,
          "12 pairs, error ratio in [" + fmt(lo) + ", " + fmt(hi) + "], factors and products " +
              (nonneg ? "nonnegative" : "NOT nonnegative")};
}

// ---------------------------------------------------------------- 7

Outcome gross() {
  double orth = 0.0;
  double spectral = 0.0;
  for (const auto& di : default_instances()) {
    OccupationBasis basis(static_cast<int>(di.grid->size()), di.max_total);
    const NelsonParams p = params(1, 1.0, 0.5);
    const Eigen::MatrixXd g = gross_transformation(*di.grid, basis, p);
    orth = std::max(orth, (g.transpose() * g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd h = kappa_hamiltonian(di, 1.0, 0.0).dense();
    const Eigen::MatrixXd gh = g * h * g.transpose();
    const Eigen::VectorXd s1 = linalg::symmetric_eigen(h).values;
    const Eigen::VectorXd s2 = linalg::symmetric_eigen(0.5 * (gh + gh.transpose())).values;
    spectral = std::max(spectral, (s1 - s2).cwiseAbs().maxCoeff());
  }
  return {orth <= 1e-10 && spectral <= 1e-9, "max |G^T G - 1| " + fmt(orth) + ", spectral deviation " + fmt(spectral)};
}

// ---------------------------------------------------------------- 8

Outcome cone_calculus() {
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst_fppc = -1e300;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd a(12);
    Eigen::VectorXd phi(12);
    Eigen::VectorXd psi(12);
    for (Eigen::Index i = 0; i < 12; ++i) {
      a(i) = 3.0 * u(rng);
      phi(i) = u(rng);
      psi(i) = u(rng);
    }
    const Eigen::VectorXd f = (-std::abs(u(rng)) * a).array().exp();
    const double lhs = std::abs(phi.dot(f.cwiseProduct(psi)));
    const double rhs = f.maxCoeff() * phi.cwiseAbs().dot(psi.cwiseAbs());
    worst_fppc = std::max(worst_fppc, lhs - rhs);
  }
  bool meet_ok = true;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd xi(12);
    Eigen::VectorXd eta(12);
    for (Eigen::Index i = 0; i < 12; ++i) {
      xi(i) = std::abs(u(rng));
      eta(i) = std::abs(u(rng));
    }
    const Eigen::VectorXd m = meet(xi, eta);
    meet_ok = meet_ok && m == meet(eta, xi) && (xi - m).minCoeff() >= 0.0 && (eta - m).minCoeff() >= 0.0;
  }
  bool tensor_ok = true;
  std::uniform_real_distribution<double> pos(0.01, 1.0);
  for (int cap = 1; cap <= 3; ++cap) {
    OccupationBasis basis(3, cap);
    for (unsigned mask = 0; mask < 8; ++mask) {
      std::vector<std::size_t> a;
      std::vector<std::size_t> b;
      for (std::size_t i = 0; i < 3; ++i) ((mask >> i) & 1u ? a : b).push_back(i);
      FactorizationMap map(basis, a, b);
      Eigen::MatrixXd A(map.left().size(), map.left().size());
      Eigen::MatrixXd B(map.right().size(), map.right().size());
      for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = pos(rng);
      for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = pos(rng);
      tensor_ok = tensor_ok && operator_order(kron_embed(A, B, map), OrderMode::improves).holds &&
                  tensor_cone_check(map).holds;
    }
  }
  return {worst_fppc <= 1e-12 && meet_ok && tensor_ok,
          "fPPC max excess " + fmt(worst_fppc) + ", meet identities " + (meet_ok ? "exact" : "VIOLATED") +
              ", tensor positivity on all M=3 partitions " + (tensor_ok ? "holds" : "FAILS")};
}

// ---------------------------------------------------------------- 9

Outcome massless() {
  struct Config {
    int d;
    double extent;
    double sigma;
    bool couple_outside;
  };
  const std::vector<Config> configs{{1, 2.0, 0.5, true},  {1, 2.0, 1.0, true},  {1, 2.0, 1.0, false},
                                    {1, 3.0, 1.5, true},  {1, 3.0, 1.0, false}, {2, 1.0, 0.8, true},
                                    {2, 1.0, 0.8, false}, {1, 2.0, 5.0, true}};
  int disagreements = 0;
  int negatives = 0;
  for (const auto& c : configs) {
    Instance in;
    in.grid = ModeGrid::build(c.d, c.extent, 1.0, 0.0);
    in.params = params(c.d, 1.0, 0.5);
    in.max_total = 2;
    in.plan.betas = {0.1, 1.0, 4.0};
    const MasslessReport m = massless_study(in, MasslessOptions{c.sigma, c.couple_outside, {}});
    if (!m.all_agree() || !m.scan.agree() || m.decomposition_residual > 1e-12) ++disagreements;
    if (!m.verdicts[0]) ++negatives;
  }
  return {disagreements == 0 && negatives >= 1,
          std::to_string(configs.size()) + " configurations, " + std::to_string(negatives) + " negative controls, " +
              std::to_string(disagreements) + " disagreements"};
}

// ---------------------------------------------------------------- 10

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const std::string configs = NELSONNET_CONFIG_DIR;
  const fs::path base = fs::temp_directory_path() / "nelsonnet_acceptance";
  fs::remove_all(base);
  struct Job {
    std::string command;
    std::string config;
    std::vector<std::string> files;
  };
  const std::vector<Job> jobs{{"renorm-sweep", "sweep.yaml", {"sweep.csv", "sweep.json"}},
                              {"build-check", "small.yaml", {"build_check.json"}},
                              {"spectrum", "small.yaml", {"spectrum.json"}},
                              {"positivity", "small.yaml", {"positivity.json"}},
                              {"massless-study", "massless.yaml", {"massless.json"}},
                              {"theorem-report", "moving.yaml", {"theorem_report.json"}}};
  int compared = 0;
  int mismatches = 0;
  std::string first_mismatch;
  std::ostringstream sink;
  for (const auto& job : jobs) {
    for (const char* run : {"a", "b"}) {
      const fs::path dir = base / run / job.command;
      cli::execute_command({job.command, "--config", configs + "/" + job.config, "--out-dir", dir.string(), "--seed",
                            "13"},
                           sink, sink);
    }
    for (const auto& f : job.files) {
      const std::string x = slurp(base / "a" / job.command / f);
      const std::string y = slurp(base / "b" / job.command / f);
      ++compared;
      if (x.empty() || x != y) {
        ++mismatches;
        if (first_mismatch.empty()) first_mismatch = job.command + "/" + f;
      }
    }
  }
  return {mismatches == 0, std::to_string(compared) + " output files compared, " + std::to_string(mismatches) +
                               " differ" + (first_mismatch.empty() ? "" : " (first: " + first_mismatch + ")")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"decomposition exactness", decomposition_exactness},
      {"positivity improvement", positivity_improvement},
      {"Perron-Frobenius", perron_frobenius},
      {"counterterm cancellation", counterterm_cancellation},
      {"pairing/entrywise equivalence", equivalence_metzler},
      {"Trotter machinery", trotter},
      {"Gross transformation", gross},
      {"cone calculus", cone_calculus},
      {"massless harness", massless},
      {"reproducibility", reproducibility}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
