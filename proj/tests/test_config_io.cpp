// Tests for the configuration parser, CSV/manifest serialization, and the
// command-line front end (driven end-to-end through the built binary).

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sidemc/config.hpp"
#include "sidemc/io.hpp"
#include "sidemc/rng.hpp"

using namespace sidemc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(SIDEMC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sidemc_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("empty document parses to the all-zero problem with defaults") {
  const ConfigDocument doc = parse_config("");
  REQUIRE(doc.spec.coefficients.d1 == 1);
  REQUIRE(doc.spec.coefficients.alpha == 2.0);
  REQUIRE(doc.spec.T == 1.0);
  REQUIRE(doc.spec.coefficients.b.is_zero);
  REQUIRE(doc.run.seed == 1);
  REQUIRE(doc.run.inner == 100);
}

TEST_CASE("expression-backed coefficient fields evaluate and carry flags") {
  const ConfigDocument doc = parse_config(
      "[problem]\n"
      "d1 = 2\n"
      "channels = 2\n"
      "alpha = 2\n"
      "[coefficients]\n"
      "b = [sin(x1), x2*t]\n"
      "sigma2 = [[1, 0], [0, 1]]\n"
      "H1 = [0.25*z, 0]\n"
      "c = [[0]]\n"
      "upsilon1_2 = [[0.3]]\n"
      "K1 = abs(0.25*z)\n");
  const CoefficientSet& cs = doc.spec.coefficients;
  Vec x(2);
  x << 0.5, 2.0;
  const Vec bv = cs.b.eval(3.0, x);
  REQUIRE(bv[0] == Catch::Approx(std::sin(0.5)));
  REQUIRE(bv[1] == 6.0);
  REQUIRE_FALSE(cs.b.constant_in_x);
  REQUIRE(cs.sigma[1].constant_in_x);
  REQUIRE(cs.sigma[1].eval(0.0, x)(1, 1) == 1.0);
  REQUIRE(cs.H[0].constant_in_x);
  REQUIRE(cs.H[0].eval(0.0, x, 2.0)[0] == 0.5);
  REQUIRE(cs.c.is_zero);
  REQUIRE(cs.upsilon[0][1].eval(0.0, x)(0, 0) == 0.3);
  REQUIRE(cs.upsilon[0][0].is_zero);
  REQUIRE(cs.growth.K[0](-2.0) == 0.5);
}

TEST_CASE("measure blocks parse atoms, segments, and the V restriction") {
  const ConfigDocument doc = parse_config(
      "[measure1]\n"
      "atom = 1 2.5 D\n"
      "atom = -1 0.5 E\n"
      "atom = 3 0.1 V\n");
  const JumpMeasureSpec& m = doc.spec.measures[0];
  REQUIRE(m.atoms.size() == 3);
  REQUIRE(m.atoms[0].rate == 2.5);
  REQUIRE(m.atoms[2].tag == SetTag::V);

  const ConfigDocument dens = parse_config(
      "[measure2]\n"
      "segment = 0.1 1 D 1/z^2\n"
      "cutoff = 0.05\n"
      "panels = 32\n");
  const JumpMeasureSpec& md = dens.spec.measures[1];
  REQUIRE(md.mode == JumpMeasureSpec::Mode::density);
  REQUIRE(md.segments.size() == 1);
  REQUIRE(md.segments[0].rate(0.5) == 4.0);
  REQUIRE(md.small_jump_cutoff == 0.05);

  REQUIRE_THROWS_AS(parse_config("[measure2]\natom = 1 1 V\n"), ParseError);
}

TEST_CASE("configuration errors carry line positions") {
  SECTION("unknown key") {
    try {
      parse_config("[problem]\nd1 = 1\nbogus = 3\n");
      FAIL("expected ParseError");
    } catch (const ParseError& err) {
      REQUIRE(err.line() == 3);
      REQUIRE(std::string(err.what()).find("bogus") != std::string::npos);
    }
  }
  SECTION("dangling operator inside a matrix expression") {
    try {
      parse_config("[coefficients]\nsigma1 = [[t+]]\n");
      FAIL("expected ParseError");
    } catch (const ParseError& err) {
      REQUIRE(err.line() == 2);
      REQUIRE(err.column() > 9);
    }
  }
  SECTION("shape mismatch") {
    REQUIRE_THROWS_AS(
        parse_config("[problem]\nd1 = 2\n[coefficients]\nb = [1]\n"),
        ParseError);
  }
  SECTION("unknown section") {
    REQUIRE_THROWS_AS(parse_config("[bogus]\n"), ParseError);
  }
  SECTION("duplicate key") {
    REQUIRE_THROWS_AS(parse_config("[problem]\nd1 = 1\nd1 = 2\n"),
                      ParseError);
  }
  SECTION("variable beyond the state dimension") {
    REQUIRE_THROWS_AS(parse_config("[coefficients]\nb = [x2]\n"), ParseError);
  }
  SECTION("mark variable in a drift coefficient") {
    REQUIRE_THROWS_AS(parse_config("[coefficients]\nb = [z]\n"), ParseError);
  }
}

TEST_CASE("CSV serialization round-trips bit-exactly") {
  SolutionField sol;
  sol.t = 1.0;
  sol.segment_weights.push_back({2, 0.0});
  for (int i = 0; i < 40; ++i) {
    Vec x(2), u(1), se(1);
    x << rng::normal({7, 0, static_cast<std::uint64_t>(i)}) * 1e-3,
        rng::normal({7, 1, static_cast<std::uint64_t>(i)}) * 1e7;
    u << rng::normal({7, 2, static_cast<std::uint64_t>(i)}) * 1e-300;
    se << rng::uniform({7, 3, static_cast<std::uint64_t>(i)});
    sol.grid.push_back(x);
    sol.estimate.push_back(u);
    sol.std_error.push_back(se);
  }
  const std::string csv = solution_csv_string(sol);
  std::istringstream in(csv);
  const SolutionField back = read_solution_csv(in);
  REQUIRE(back.grid.size() == sol.grid.size());
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    REQUIRE(back.grid[i] == sol.grid[i]);
    REQUIRE(back.estimate[i] == sol.estimate[i]);
    REQUIRE(back.std_error[i] == sol.std_error[i]);
  }
  REQUIRE(back.segment_weights.front().first == 2);
  // serializing again reproduces the same bytes
  REQUIRE(solution_csv_string(back).substr(
              solution_csv_string(back).find('\n')) ==
          csv.substr(csv.find('\n')));
}

TEST_CASE("CLI solve on the transport config writes 101 deterministic rows") {
  const fs::path out = fresh_dir("solve");
  REQUIRE(run_cli("solve --config " + std::string(SIDEMC_CONFIG_DIR) +
                  "/transport.cfg --out " + out.string()) == 0);
  const std::string csv = slurp(out / "solution.csv");
  REQUIRE(csv.find("\r") == std::string::npos);  // LF only
  std::istringstream in(csv);
  const SolutionField sol = read_solution_csv(in);
  REQUIRE(sol.grid.size() == 101);
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    REQUIRE(sol.std_error[i][0] == 0.0);
    REQUIRE(sol.estimate[i][0] ==
            Catch::Approx(std::sin(sol.grid[i][0] + 1.0)).margin(1e-3));
  }
  const auto records = read_manifest((out / "manifest.jsonl").string());
  REQUIRE(records.size() >= 3);
  REQUIRE(records[0]["kind"] == "run");
  REQUIRE(records[0]["seed"] == 1);
}

TEST_CASE("CLI audit exits zero with all clauses passing") {
  const fs::path out = fresh_dir("audit");
  REQUIRE(run_cli("audit --config " + std::string(SIDEMC_CONFIG_DIR) +
                  "/transport.cfg --out " + out.string()) == 0);
  const auto records = read_manifest((out / "manifest.jsonl").string());
  bool saw_summary = false;
  for (const auto& r : records) {
    if (r["kind"] == "clause") REQUIRE(r["pass"] == true);
    if (r["kind"] == "summary") {
      saw_summary = true;
      REQUIRE(r["all_pass"] == true);
    }
  }
  REQUIRE(saw_summary);
}

TEST_CASE("CLI rejects a broken config with a nonzero exit") {
  const fs::path out = fresh_dir("broken");
  const fs::path cfg = fs::temp_directory_path() / "sidemc_broken.cfg";
  std::ofstream(cfg) << "[coefficients]\nsigma1 = [[t+]]\n";
  REQUIRE(run_cli("solve --config " + cfg.string() + " --out " +
                  out.string()) != 0);
}

TEST_CASE("manifest replay yields a bit-identical CSV") {
  const fs::path out1 = fresh_dir("replay1");
  REQUIRE(run_cli("solve --config " + std::string(SIDEMC_CONFIG_DIR) +
                  "/jump_interlace.cfg --out " + out1.string() +
                  " --seed 97 --inner 50 --steps 120") == 0);
  const auto records = read_manifest((out1 / "manifest.jsonl").string());
  const auto& run = records.at(0);
  REQUIRE(run["kind"] == "run");

  // Reconstruct the run purely from the manifest.
  const fs::path cfg = fs::temp_directory_path() / "sidemc_replay.cfg";
  std::ofstream(cfg, std::ios::binary)
      << run["config"].get<std::string>();
  const fs::path out2 = fresh_dir("replay2");
  std::ostringstream cmd;
  cmd << run["command"].get<std::string>() << " --config " << cfg.string()
      << " --out " << out2.string() << " --seed " << run["seed"]
      << " --inner " << run["inner"] << " --steps " << run["steps"]
      << " --threads " << std::max(1, run["threads"].get<int>());
  REQUIRE(run_cli(cmd.str()) == 0);
  REQUIRE(slurp(out1 / "solution.csv") == slurp(out2 / "solution.csv"));
}

TEST_CASE("environment variables override seed and threads") {
  const fs::path out = fresh_dir("env");
  const std::string cmd = "SIDEMC_SEED=424242 " + std::string(SIDEMC_CLI_PATH) +
                          " solve --config " +
                          std::string(SIDEMC_CONFIG_DIR) +
                          "/transport.cfg --out " + out.string() +
                          " >/dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const auto records = read_manifest((out / "manifest.jsonl").string());
  REQUIRE(records.at(0)["seed"] == 424242);
}
