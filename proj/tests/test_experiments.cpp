#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <catch_amalgamated.hpp>

#include "nelsonnet/experiments.hpp"

using namespace nelsonnet;

namespace {

NelsonParams params(int d, double g, double K, std::vector<double> P = {}) {
  NelsonParams p;
  p.P = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < P.size(); ++i) p.P(static_cast<Eigen::Index>(i)) = P[i];
  p.g = g;
  p.K = K;
  return p;
}

Instance small_instance(double g = 1.0, std::vector<double> P = {0.0}) {
  Instance in;
  in.grid = ModeGrid::build(1, 1.0, 1.0, 1.0, GridLayout::vertex);  // modes -1, 0, 1
  in.params = params(1, g, 0.5, P);
  in.max_total = 2;
  in.plan.betas = {0.1, 1.0, 4.0};
  return in;
}

Instance massless_instance() {
  Instance in;
  in.grid = ModeGrid::build(1, 2.0, 1.0, 0.0);  // cell-centered: +-0.5, +-1.5
  in.params = params(1, 1.0, 0.5);
  in.max_total = 2;
  in.plan.betas = {0.1, 1.0, 4.0};
  return in;
}

}  // namespace

TEST_CASE("free-field sweep has vacuum ground state") {
  const GridPtr grid = ModeGrid::build(1, 2.0, 1.0, 1.0);
  const SweepResult s = renorm_sweep(grid, params(1, 0.0, 0.5), 2, {1.0, 2.0});
  REQUIRE(s.rows.size() == 2);
  for (const auto& r : s.rows) {
    CHECK(r.E0 == 0.0);
    CHECK(r.E_counterterm == 0.0);
  }
  CHECK(s.rows[0].dim == OccupationBasis::dimension(2, 2));
  CHECK(s.rows[1].dim == OccupationBasis::dimension(4, 2));
}

TEST_CASE("counterterm cancels the second-order shift at P = 0") {
  const GridPtr grid = ModeGrid::build(1, 2.0, 0.5, 1.0);
  std::vector<double> ratios;
  for (double g : {0.2, 0.1, 0.05}) {
    // N_max = 4 so that the sectors reached at fourth order carry their own
    // self-energy.
    const SweepResult s = renorm_sweep(grid, params(1, g, 0.5), 4, {2.0});
    ratios.push_back(s.rows[0].E0 / std::pow(g, 4));
  }
  for (double r : ratios) CHECK(std::abs(r / ratios.back() - 1.0) <= 0.2);
}

TEST_CASE("without the counterterm the ground energy follows E_kappa down") {
  const GridPtr grid = ModeGrid::build(1, 4.0, 0.5, 1.0);
  SweepOptions opt;
  opt.with_counterterm = false;
  const std::vector<double> kappas{1.0, 2.0, 3.0, 4.0};
  const SweepResult bare = renorm_sweep(grid, params(1, 0.5, 0.5), 2, kappas, opt);
  const SweepResult ren = renorm_sweep(grid, params(1, 0.5, 0.5), 2, kappas);
  for (std::size_t i = 1; i < kappas.size(); ++i) {
    CHECK(bare.rows[i].E0 < bare.rows[i - 1].E0);
    CHECK(bare.rows[i].E_counterterm < bare.rows[i - 1].E_counterterm);
  }
  const double bare_drop = bare.rows.front().E0 - bare.rows.back().E0;
  const double ct_drop = bare.rows.front().E_counterterm - bare.rows.back().E_counterterm;
  const double ren_drop = std::abs(ren.rows.front().E0 - ren.rows.back().E0);
  CHECK(bare_drop == Catch::Approx(ct_drop).epsilon(0.2));
  CHECK(ren_drop < 0.2 * bare_drop);
}

TEST_CASE("sweep output is deterministic and thread independent") {
  const GridPtr grid = ModeGrid::build(1, 3.0, 0.5, 1.0);
  const std::vector<double> kappas{1.0, 2.0, 3.0};
  SweepOptions one;
  SweepOptions three;
  three.threads = 3;
  std::ostringstream a;
  std::ostringstream b;
  std::ostringstream c;
  write_sweep_csv(renorm_sweep(grid, params(1, 0.4, 0.5), 2, kappas, one), a);
  write_sweep_csv(renorm_sweep(grid, params(1, 0.4, 0.5), 2, kappas, one), b);
  write_sweep_csv(renorm_sweep(grid, params(1, 0.4, 0.5), 2, kappas, three), c);
  CHECK(a.str() == b.str());
  CHECK(a.str() == c.str());
  CHECK(a.str().rfind("kappa,E_counterterm,E0,gap,min_entry,dim\n", 0) == 0);

  std::ostringstream j1;
  std::ostringstream j2;
  write_json_text(sweep_json(renorm_sweep(grid, params(1, 0.4, 0.5), 2, kappas, one)), j1);
  write_json_text(sweep_json(renorm_sweep(grid, params(1, 0.4, 0.5), 2, kappas, three)), j2);
  CHECK(j1.str() == j2.str());
}

TEST_CASE("sweep schedules are validated") {
  const GridPtr grid = ModeGrid::build(1, 2.0, 1.0, 1.0);
  try {
    renorm_sweep(grid, params(1, 0.4, 0.5), 2, {1.0, 2.5});
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("kappa") != std::string::npos);
    CHECK(std::string(e.what()).find("2.5") != std::string::npos);
  }
  CHECK_THROWS_AS(renorm_sweep(grid, params(1, 0.4, 0.5), 2, {2.0, 1.0}), DomainError);
  CHECK_THROWS_AS(renorm_sweep(grid, params(1, 0.4, 0.5), 2, {}), DomainError);
  SweepOptions tiny;
  tiny.dimension_cap = 5;
  CHECK_THROWS_AS(renorm_sweep(grid, params(1, 0.4, 0.5), 2, {1.0, 2.0}, tiny), SizeError);
}

TEST_CASE("numbers are written with 17 significant digits") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  std::ostringstream os;
  write_json_text(Json{{"x", 1.0}, {"y", 1.0 / 3.0}, {"n", 2}, {"s", "a"}}, os);
  const std::string text = os.str();
  CHECK(text.find("\"x\": 1.0") != std::string::npos);
  CHECK(text.find("0.33333333333333331") != std::string::npos);
  CHECK(text.find("\"n\": 2") != std::string::npos);
  CHECK(Json::parse(text)["y"].get<double>() == 1.0 / 3.0);
}

TEST_CASE("massless study: three verdicts agree") {
  SECTION("coupled outside B_sigma") {
    const MasslessReport m = massless_study(massless_instance(), MasslessOptions{1.0, true, {}});
    CHECK_FALSE(m.degenerate);
    CHECK(m.verdicts[0]);
    CHECK(m.verdicts[1]);
    CHECK(m.verdicts[2]);
    CHECK(m.all_agree());
    CHECK(m.decomposition_residual <= 1e-12);
    CHECK(m.scan.agree());
  }
  SECTION("coupling removed outside B_sigma") {
    const MasslessReport m = massless_study(massless_instance(), MasslessOptions{1.0, false, {}});
    CHECK_FALSE(m.verdicts[0]);
    CHECK_FALSE(m.verdicts[1]);
    CHECK_FALSE(m.verdicts[2]);
    CHECK(m.all_agree());
    for (const auto& row : m.agreement) {
      for (bool x : row) CHECK(x);
    }
  }
  SECTION("sigma beyond the grid leaves an empty complement") {
    const MasslessReport m = massless_study(massless_instance(), MasslessOptions{5.0, true, {}});
    CHECK(m.degenerate);
    CHECK(m.all_agree());
  }
  SECTION("massive grids are refused") {
    CHECK_THROWS_AS(massless_study(small_instance(), MasslessOptions{}), DomainError);
  }
}

TEST_CASE("theorem reports on the small instance") {
  const Instance in = small_instance();
  for (const auto& sel : theorem_selectors()) {
    const TheoremReport r = theorem_report(sel, in, 0.6);
    INFO(sel);
    CHECK(r.selector == sel);
    CHECK_FALSE(r.checks.empty());
    CHECK(r.passed());
  }
  CHECK(theorem_report("A1...A4", in).selector == "A1-A4");
  CHECK_THROWS_AS(theorem_report("Bogus9", in), DomainError);
}

TEST_CASE("nested decomposition is flagged, not failed, at P != 0") {
  const TheoremReport r = theorem_report("Decomposition", small_instance(1.0, {0.7}));
  CHECK(r.passed());
  bool flagged = false;
  for (const auto& c : r.checks) {
    if (c.check == "decomposition.nested") flagged = c.verdict == "flagged" && c.role == Role::diagnostic;
  }
  CHECK(flagged);
}

TEST_CASE("decoupled instance: UniqG observations are violated but consistent") {
  Instance in = small_instance();
  in.coupled = Region::explicit_set(in.grid, {0});
  const TheoremReport r = theorem_report("UniqG", in);
  CHECK(r.passed());
  bool any_violated = false;
  for (const auto& c : r.checks) {
    if (c.role == Role::observation && c.verdict == "violated") any_violated = true;
  }
  CHECK(any_violated);
  const TheoremReport m = theorem_report("MainTh2", in);
  CHECK(m.passed());
}

TEST_CASE("default region family") {
  const GridPtr small = ModeGrid::build(1, 1.0, 1.0, 1.0, GridLayout::vertex);
  CHECK(default_family(small).size() == 7);
  const GridPtr big = ModeGrid::build(1, 4.0, 1.0, 1.0);
  const auto fam = default_family(big);
  for (const auto& r : fam) CHECK_FALSE(r.empty());
  CHECK(fam.size() > big->size());
}
