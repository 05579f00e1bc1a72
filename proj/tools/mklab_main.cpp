// Experiment runner: builds models from a JSON config, runs one experiment
// per invocation, and writes a CSV (or pass/fail lines for stabilizer-check).
//
// Exit codes: 0 success, 2 invalid config, 3 budget exceeded, 4 verification
// failure.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "markovlab/experiments.hpp"

namespace {

int run_subcommand(const std::string& experiment, const std::string& config_path,
                   const std::string& out_override, int threads, int budget_bits) {
  using namespace mklab;
  set_worker_threads(threads);
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::load(config_path, budget_bits);
  } catch (const budget_exceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  }
  if (cfg.experiment != experiment) {
    std::cerr << "invalid config: config experiment is '" << cfg.experiment << "', subcommand wants '"
              << experiment << "'\n";
    return 2;
  }
  if (!out_override.empty()) cfg.out_path = out_override;

  try {
    if (experiment == "stabilizer-check") {
      std::string report;
      const bool ok = run_stabilizer_check(cfg, report);
      std::cout << report;
      if (!cfg.out_path.empty()) {
        std::ofstream out(cfg.out_path);
        out << report;
      }
      return ok ? 0 : 4;
    }
    CsvDocument doc;
    if (experiment == "cmi-sweep") doc = run_cmi_sweep(cfg);
    else if (experiment == "expansion") doc = run_expansion_report(cfg);
    else if (experiment == "thresholds") doc = run_thresholds(cfg);
    else if (experiment == "recover") doc = run_recovery(cfg);
    const std::string text = doc.to_string();
    if (cfg.out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(cfg.out_path);
      if (!out) {
        std::cerr << "cannot write " << cfg.out_path << '\n';
        return 2;
      }
      out << text;
    }
    return 0;
  } catch (const budget_exceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << '\n';
    return 3;
  } catch (const config_error& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"markovlab: exact CMI, pinning reductions, cluster expansions and recovery maps for noisy Gibbs states"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  int threads = 1;
  int budget_bits = 0;  // 0 = take from config / default
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--out", out_path, "output path (default: config 'output' or stdout)");
  app.add_option("--threads", threads, "worker threads for enumeration loops")->default_val(1);
  app.add_option("--budget-bits", budget_bits, "max log2 of enumerated state space (default 26)");

  for (const char* name : {"cmi-sweep", "expansion", "thresholds", "recover", "stabilizer-check"}) {
    app.add_subcommand(name, "")->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();
  return run_subcommand(sub, config_path, out_path, threads, budget_bits);
}
