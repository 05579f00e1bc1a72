#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "markovlab/experiments.hpp"

using namespace mklab;

namespace {

std::vector<std::vector<std::string>> parse_rows(const CsvDocument& doc) {
  std::vector<std::vector<std::string>> out;
  for (const auto& row : doc.rows) {
    std::vector<std::string> cells;
    std::istringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    out.push_back(cells);
  }
  return out;
}

double cell(const std::vector<std::string>& row, std::size_t i) { return std::stod(row[i]); }

}  // namespace

TEST_CASE("config parsing and validation") {
  const char* good = R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "ising_chain", "n": 8},
    "beta": 0.5,
    "noise": {"kind": "flip", "epsilons": [0.0, 0.1]},
    "tripartition": {"center": [3], "radius_min": 1, "radius_max": 2}
  })";
  ExperimentConfig cfg = ExperimentConfig::parse(good);
  CHECK(cfg.n == 8);
  CHECK(cfg.epsilons.size() == 2);
  CHECK(!cfg.hash.empty());

  CHECK_THROWS_AS(ExperimentConfig::parse("{not json"), config_error);
  CHECK_THROWS_AS(ExperimentConfig::parse(R"({"experiment":"nope","model":{"kind":"ising_chain"}})"),
                  config_error);
  // Budget rejection happens before any run.
  const char* too_big = R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "ising_chain", "n": 40},
    "noise": {"kind": "flip", "epsilon": 0.1},
    "tripartition": {"center": [20]}
  })";
  CHECK_THROWS_AS(ExperimentConfig::parse(too_big), budget_exceeded);
}

TEST_CASE("thresholds sweep") {
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "thresholds",
    "model": {"kind": "none"},
    "thresholds": {"degrees": [1, 2], "betas": [0.0, 0.5], "qs": [2], "depths": [1, 2]}
  })");
  CsvDocument doc = run_thresholds(cfg);
  auto rows = parse_rows(doc);
  REQUIRE(rows.size() == 8);
  // First row: degree 1, beta 0, q 2, depth 1 -> p_min_c = 1 + log 2.
  CHECK(cell(rows[0], 4) == doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-12));
  // Residual of the defining equation at every reported eps_c.
  for (const auto& r : rows) {
    const double deg = cell(r, 0), beta = cell(r, 1), q = cell(r, 2), d = cell(r, 3), ec = cell(r, 5);
    const double lhs = d * std::log1p(-ec) - std::log(ec);
    const double rhs = deg * (1.0 + std::log(1.0 + deg) + deg * beta + d * std::log(q));
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
  // eps_c decreases in beta at fixed degree/depth.
  CHECK(cell(rows[1], 5) < cell(rows[0], 5));
}

TEST_CASE("cmi sweep csv") {
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "ising_chain", "n": 8},
    "beta": 0.5,
    "noise": {"kind": "flip", "epsilons": [0.0, 0.1]},
    "tripartition": {"center": [3], "radius_min": 1, "radius_max": 3}
  })");
  CsvDocument doc = run_cmi_sweep(cfg);
  auto rows = parse_rows(doc);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    if (cell(r, 0) == 0.0) CHECK(std::abs(cell(r, 3)) < 1e-10);  // clean chain is Markov
    else CHECK(cell(r, 3) > 0.0);
    CHECK(cell(r, 2) == cell(r, 1) + 1);  // d_AC = radius + 1
  }
  // Byte-identical reruns, also across thread counts.
  const std::string once = doc.to_string();
  set_worker_threads(4);
  const std::string again = run_cmi_sweep(cfg).to_string();
  set_worker_threads(1);
  CHECK(once == again);
  // Header block carries version, hash and units.
  CHECK(doc.comments.size() == 3);
  CHECK(doc.comments[0].find(kVersion) != std::string::npos);
  CHECK(doc.comments[1].find(cfg.hash) != std::string::npos);
}

TEST_CASE("cmi sweep on stabilizer models goes through labels") {
  // Cluster chain: the label regions separate in the dual graph, so the
  // clean row vanishes and noise turns the label CMI on.
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "cluster_chain", "n": 8},
    "beta": 0.7,
    "noise": {"kind": "depolarizing", "epsilons": [0.0, 0.1]},
    "tripartition": {"center": [2, 3], "radius_min": 1, "radius_max": 1}
  })");
  CsvDocument doc = run_cmi_sweep(cfg);
  auto rows = parse_rows(doc);
  REQUIRE(rows.size() == 2);
  CHECK(std::abs(cell(rows[0], 3)) < 1e-10);
  CHECK(cell(rows[1], 3) > 1e-8);

  // Toric patch rows run through the same route; on the cramped 2x2 torus
  // every annulus has an empty label interior, so only finiteness is checked.
  ExperimentConfig toric = ExperimentConfig::parse(R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "toric_patch", "L": 2},
    "beta": 0.7,
    "noise": {"kind": "depolarizing", "epsilons": [0.05]},
    "tripartition": {"center": [0], "radius_min": 1, "radius_max": 1}
  })");
  auto trows = parse_rows(run_cmi_sweep(toric));
  REQUIRE(trows.size() == 1);
  CHECK(std::isfinite(cell(trows[0], 3)));
  CHECK(cell(trows[0], 3) >= 0.0);
}

TEST_CASE("expansion report csv") {
  // A = {0}, B = {1,2,3,4}, C = {5} on the 6-chain.
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "expansion",
    "model": {"kind": "ising_chain", "n": 6},
    "beta": 0.3,
    "noise": {"kind": "flip", "epsilon": 5e-4},
    "tripartition": {"center": [0], "radius_min": 4},
    "expansion": {"w_max": 4}
  })");
  CsvDocument doc = run_expansion_report(cfg);
  auto rows = parse_rows(doc);
  REQUIRE(rows.size() == 4);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    const double residual = cell(r, 3);
    CHECK(residual <= prev + 1e-15);
    prev = residual;
    CHECK(cell(r, 4) <= cell(r, 5) + 1e-15);  // |F_AC| <= analytic bound
    CHECK(cell(r, 6) <= 0.0);                 // KP margin satisfied
  }
  CHECK(parse_rows(doc).back()[3] != "nan");

  // Identity noise: all residuals vanish.
  cfg.epsilons = {0.0};
  CsvDocument clean = run_expansion_report(cfg);
  for (const auto& r : parse_rows(clean)) CHECK(cell(r, 3) < 1e-12);
}

TEST_CASE("recovery csv") {
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "recover",
    "model": {"kind": "ising_chain", "n": 6},
    "beta": 0.5,
    "noise": {"kind": "flip", "epsilons": [0.0, 0.05]},
    "recover": {"radii": [1, 2]}
  })");
  CsvDocument doc = run_recovery(cfg);
  auto rows = parse_rows(doc);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(cell(r, 2) <= cell(r, 3) + 1e-15);  // error <= tv without recovery
    if (cell(r, 0) == 0.0) CHECK(cell(r, 2) < 1e-12);
  }
  // At fixed eps, error decreases with radius.
  CHECK(cell(rows[3], 2) < cell(rows[2], 2));
}

TEST_CASE("stabilizer check runner") {
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "stabilizer-check",
    "model": {"kind": "cluster_chain", "n": 8},
    "beta": 0.7,
    "noise": {"kind": "depolarizing", "epsilon": 0.1},
    "tripartition": {"center": [2, 3], "radius_min": 1}
  })");
  std::string report;
  CHECK(run_stabilizer_check(cfg, report));
  CHECK(report.find("[PASS]") != std::string::npos);
  CHECK(report.find("[FAIL]") == std::string::npos);
}

#ifdef MKLAB_BIN
TEST_CASE("cli end to end") {
  auto run = [](const std::string& config_text, const std::string& sub, const std::string& out) {
    const std::string cfg_path = "cli_test_config.json";
    std::ofstream(cfg_path) << config_text;
    std::string cmd = std::string(MKLAB_BIN) + " " + sub + " --config " + cfg_path;
    if (!out.empty()) cmd += " --out " + out;
    cmd += " > cli_test_stdout.txt 2> cli_test_stderr.txt";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
  };
  const char* thresholds = R"({
    "experiment": "thresholds",
    "model": {"kind": "none"},
    "thresholds": {"degrees": [2], "betas": [0.0], "qs": [2], "depths": [1]}
  })";
  CHECK(run(thresholds, "thresholds", "cli_test_out.csv") == 0);
  std::ifstream in("cli_test_out.csv");
  std::string first;
  std::getline(in, first);
  CHECK(first.find("markovlab") != std::string::npos);

  CHECK(run("{\"experiment\":\"bogus\"}", "thresholds", "") == 2);
  CHECK(run(thresholds, "cmi-sweep", "") == 2);  // subcommand/config mismatch
  const char* too_big = R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "ising_chain", "n": 40},
    "noise": {"kind": "flip", "epsilon": 0.1},
    "tripartition": {"center": [20]}
  })";
  CHECK(run(too_big, "cmi-sweep", "") == 3);

  // Model files: classical JSON and compact pauli text.
  std::ofstream("cli_test_model.json") << R"({
    "n": 4, "q": 2,
    "hyperedges": [[0,1],[1,2],[2,3]],
    "terms": [[-1,1,1,-1],[-1,1,1,-1],[-1,1,1,-1]]
  })";
  const char* file_cfg = R"({
    "experiment": "cmi-sweep",
    "model": {"kind": "classical_file", "path": "cli_test_model.json"},
    "beta": 0.5,
    "noise": {"kind": "flip", "epsilon": 0.1},
    "tripartition": {"center": [1], "radius_min": 1, "radius_max": 1}
  })";
  CHECK(run(file_cfg, "cmi-sweep", "cli_test_out2.csv") == 0);

  std::ofstream("cli_test_pauli.json") << R"({
    "n": 4, "q": 2,
    "terms": ["- 0:Z 1:X 2:Z", "- 0:X 1:Z", "- 1:Z 2:X 3:Z", "- 2:Z 3:X"]
  })";
  const char* pauli_cfg = R"({
    "experiment": "stabilizer-check",
    "model": {"kind": "pauli_file", "path": "cli_test_pauli.json"},
    "beta": 0.6,
    "noise": {"kind": "depolarizing", "epsilon": 0.05},
    "tripartition": {"center": [1, 2], "radius_min": 1}
  })";
  CHECK(run(pauli_cfg, "stabilizer-check", "") == 0);
}
#endif
