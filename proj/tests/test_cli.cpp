#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch_amalgamated.hpp>

#include "nelsonnet/cli.hpp"

using namespace nelsonnet;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = NELSONNET_CONFIG_DIR;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = cli::execute_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nelsonnet_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

const char* kBase =
    "schema_version: 1\n"
    "grid:\n"
    "  dimension: 1\n"
    "  extent: 1.0\n"
    "  spacing: 1.0\n"
    "  mass: 1.0\n"
    "  layout: vertex\n"
    "  max_total: 2\n"
    "params:\n"
    "  P: [0.0]\n"
    "  g: 1.0\n"
    "  K: 0.5\n";

}  // namespace

TEST_CASE("positivity on the small instance") {
  const fs::path dir = scratch("positivity");
  const Run r = run({"positivity", "--config", kConfigs + "/small.yaml", "--out-dir", dir.string()});
  INFO(r.out << r.err);
  CHECK(r.code == 0);
  const auto doc = Json::parse(read_file(dir / "positivity.json"));
  CHECK(doc["improves"].get<bool>());
  CHECK(doc["passed"].get<bool>());
  CHECK(doc["basis_dimension"].get<int>() == 10);
}

TEST_CASE("every command runs on its shipped configuration") {
  const fs::path dir = scratch("all");
  CHECK(run({"build-check", "--config", kConfigs + "/small.yaml", "--out-dir", dir.string()}).code == 0);
  CHECK(run({"spectrum", "--config", kConfigs + "/small.yaml", "--out-dir", dir.string()}).code == 0);
  CHECK(run({"theorem-report", "--config", kConfigs + "/moving.yaml", "--out-dir", dir.string()}).code == 0);
  CHECK(run({"massless-study", "--config", kConfigs + "/massless.yaml", "--out-dir", dir.string()}).code == 0);
  const Run s = run({"renorm-sweep", "--config", kConfigs + "/sweep.yaml", "--out-dir", dir.string()});
  CHECK(s.code == 0);
  CHECK(read_file(dir / "sweep.csv").rfind("kappa,E_counterterm,E0,gap,min_entry,dim\n", 0) == 0);
}

TEST_CASE("negative control exits with a failed check") {
  const fs::path dir = scratch("decoupled");
  const Run r = run({"positivity", "--config", kConfigs + "/decoupled.yaml", "--out-dir", dir.string()});
  CHECK(r.code == 1);
  const auto doc = Json::parse(read_file(dir / "positivity.json"));
  CHECK_FALSE(doc["improves"].get<bool>());
  // UniqG on the same control: observations are violated, the equivalence holds.
  CHECK(run({"theorem-report", "--config", kConfigs + "/decoupled.yaml", "--out-dir", dir.string()}).code == 0);
}

TEST_CASE("configuration errors exit with code 2") {
  const fs::path dir = scratch("errors");

  SECTION("missing file") {
    const Run r = run({"spectrum", "--config", (dir / "absent.yaml").string()});
    CHECK(r.code == 2);
    CHECK_FALSE(r.err.empty());
  }
  SECTION("missing --config") {
    CHECK(run({"spectrum"}).code == 2);
  }
  SECTION("unknown command") {
    CHECK(run({"frobnicate", "--config", "x"}).code == 2);
  }
  SECTION("unknown key reports its line") {
    const auto p = write_config(dir, "typo.yaml", std::string(kBase) + "run:\n  betaz: [1.0]\n");
    const Run r = run({"spectrum", "--config", p.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("typo.yaml:14") != std::string::npos);
    CHECK(r.err.find("betaz") != std::string::npos);
  }
  SECTION("kappa beyond the grid extent") {
    const auto p = write_config(dir, "kappa.yaml", std::string(kBase) + "run:\n  kappa_schedule: [0.5, 3.0]\n");
    const Run r = run({"renorm-sweep", "--config", p.string(), "--out-dir", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("kappa 3") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "sweep.csv"));
  }
  SECTION("oversized basis is refused before any work") {
    std::string text = kBase;
    text.replace(text.find("extent: 1.0"), 11, "extent: 30.0");
    text.replace(text.find("max_total: 2"), 12, "max_total: 6");
    text += "run:\n  kappa: 1.0\n";
    const auto p = write_config(dir, "big.yaml", text);
    const Run r = run({"spectrum", "--config", p.string(), "--out-dir", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("basis refused") != std::string::npos);
  }
  SECTION("unsupported schema version") {
    std::string text = kBase;
    text.replace(text.find("schema_version: 1"), 17, "schema_version: 7");
    CHECK(run({"spectrum", "--config", write_config(dir, "v7.yaml", text).string()}).code == 2);
  }
  SECTION("unknown selector") {
    const auto p = write_config(dir, "sel.yaml", std::string(kBase) + "run:\n  selector: Bogus9\n");
    CHECK(run({"theorem-report", "--config", p.string(), "--out-dir", dir.string()}).code == 2);
  }
  SECTION("invalid thread count") {
    CHECK(run({"spectrum", "--config", kConfigs + "/small.yaml", "--threads", "0"}).code == 2);
  }
}

TEST_CASE("reruns are byte-identical") {
  const fs::path a = scratch("rerun_a");
  const fs::path b = scratch("rerun_b");
  for (const auto& [cmd, cfg, file] : std::vector<std::tuple<std::string, std::string, std::string>>{
           {"renorm-sweep", "sweep.yaml", "sweep.csv"},
           {"renorm-sweep", "sweep.yaml", "sweep.json"},
           {"positivity", "small.yaml", "positivity.json"},
           {"theorem-report", "small.yaml", "theorem_report.json"}}) {
    REQUIRE(run({cmd, "--config", kConfigs + "/" + cfg, "--out-dir", a.string(), "--seed", "11"}).code == 0);
    REQUIRE(run({cmd, "--config", kConfigs + "/" + cfg, "--out-dir", b.string(), "--seed", "11", "--threads", "2"})
                .code == 0);
    INFO(file);
    CHECK(read_file(a / file) == read_file(b / file));
    CHECK_FALSE(read_file(a / file).empty());
  }
}

TEST_CASE("triplet export round-trips") {
  const fs::path dir = scratch("triplets");
  const auto p = write_config(dir, "trip.yaml", std::string(kBase) + "run:\n  outputs:\n    triplets: true\n");
  REQUIRE(run({"build-check", "--config", p.string(), "--out-dir", dir.string()}).code == 0);
  const auto manifest = Json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["convention"] == "full_P");
  CHECK(manifest["dimension"].get<int>() == 10);

  std::ifstream in(dir / manifest["files"]["hamiltonian"].get<std::string>());
  const SparseOperator h = read_triplets(in);
  const cli::RunConfig c = cli::load_config(p.string());
  const Instance inst = cli::build_instance(c, {});
  const ResolvedInstance r = resolve(inst);
  CHECK(max_abs_difference(h, instance_hamiltonian(r)) == 0.0);

  SparseOperator sum = 0.0 * SparseOperator::identity(h.dim());
  for (const char* part : {"kinetic", "interaction", "field"}) {
    std::ifstream f(dir / manifest["files"][part].get<std::string>());
    sum = sum + read_triplets(f);
  }
  sum = sum - manifest["counterterm"].get<double>() * SparseOperator::identity(h.dim());
  CHECK(max_abs_difference(sum, h) <= 1e-15);
}

TEST_CASE("region definitions") {
  const fs::path dir = scratch("regions");
  const std::string text = std::string(kBase) +
                           "regions:\n"
                           "  inner: {ball: 0.5}\n"
                           "  outer: {complement: inner}\n"
                           "  shell: {annulus: [0.5, 1.0]}\n"
                           "  pick: {modes: [0, 2]}\n";
  const cli::RunConfig c = cli::load_config(write_config(dir, "r.yaml", text).string());
  const GridPtr grid = cli::build_grid(c);
  CHECK(cli::build_region(c, grid, "outer") == Region::ball(grid, 0.5).complement());
  CHECK(cli::build_region(c, grid, "shell") == Region::annulus(grid, 0.5, 1.0));
  CHECK(cli::build_region(c, grid, "pick").size() == 2);

  const std::string cyclic = std::string(kBase) +
                             "regions:\n"
                             "  a: {complement: b}\n"
                             "  b: {complement: a}\n";
  const cli::RunConfig cc = cli::load_config(write_config(dir, "c.yaml", cyclic).string());
  CHECK_THROWS_AS(cli::build_region(cc, grid, "a"), cli::ConfigError);
}
