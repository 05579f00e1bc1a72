#pragma once

#include <string>
#include <vector>

#include "markovlab/polymer.hpp"
#include "markovlab/recovery.hpp"
#include "markovlab/stabilizer.hpp"

namespace mklab {

// CSV with a comment header block (tool version, config hash, units).
struct CsvDocument {
  std::vector<std::string> comments;
  std::string columns;
  std::vector<std::string> rows;

  std::string to_string() const;
};

// Parsed experiment configuration (JSON text; see README for the schema).
struct ExperimentConfig {
  std::string experiment;

  // model
  std::string model_kind;
  std::size_t n = 0, rows = 0, cols = 0, ell = 0;
  bool periodic = false;
  std::string model_path;
  std::string model_text;  // inline file contents, if already loaded
  double beta = 1.0;

  // noise
  std::string noise_kind = "flip";
  std::vector<double> epsilons;
  std::size_t depth = 1;

  // tripartition family
  std::vector<Vertex> center;
  std::size_t radius_min = 1, radius_max = 1;

  // expansion
  std::size_t w_max = 4;
  double kp_a = 1.0;

  // recovery
  std::vector<std::size_t> radii;

  // thresholds sweep (cartesian product)
  std::vector<std::size_t> th_degrees;
  std::vector<double> th_betas;
  std::vector<std::uint32_t> th_qs;
  std::vector<std::size_t> th_depths;

  int budget_bits = kDefaultBudgetBits;
  std::string out_path;
  std::string hash;  // FNV-1a of the canonical config text

  // budget_override > 0 replaces the config's budget before validation.
  static ExperimentConfig parse(const std::string& json_text, int budget_override = 0);
  static ExperimentConfig load(const std::string& path, int budget_override = 0);
  void validate() const;
};

std::string config_hash_hex(const std::string& canonical_text);

CsvDocument run_cmi_sweep(const ExperimentConfig& cfg);
CsvDocument run_expansion_report(const ExperimentConfig& cfg);
CsvDocument run_thresholds(const ExperimentConfig& cfg);
CsvDocument run_recovery(const ExperimentConfig& cfg);

// Prints one pass/fail line per verification; returns true iff all pass.
bool run_stabilizer_check(const ExperimentConfig& cfg, std::string& report_text);

}  // namespace mklab
