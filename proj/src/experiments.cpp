#include "markovlab/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mklab {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(std::size_t v) { return std::to_string(v); }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GibbsModel build_classical_model(const ExperimentConfig& cfg) {
  if (cfg.model_kind == "ising_chain") return ising_chain(cfg.n, cfg.beta, cfg.periodic);
  if (cfg.model_kind == "ising_grid") return ising_grid(cfg.rows, cfg.cols, cfg.beta, cfg.periodic);
  if (cfg.model_kind == "classical_file") {
    return classical_from_json(cfg.model_text.empty() ? read_file(cfg.model_path) : cfg.model_text, cfg.beta);
  }
  throw config_error("not a classical model kind: " + cfg.model_kind);
}

StabilizerHamiltonian build_pauli_model(const ExperimentConfig& cfg) {
  if (cfg.model_kind == "toric_patch") return StabilizerHamiltonian::toric_patch(cfg.ell);
  if (cfg.model_kind == "cluster_chain") return StabilizerHamiltonian::cluster_chain(cfg.n);
  if (cfg.model_kind == "pauli_file") {
    return StabilizerHamiltonian::pauli_from_json(cfg.model_text.empty() ? read_file(cfg.model_path) : cfg.model_text);
  }
  throw config_error("not a pauli model kind: " + cfg.model_kind);
}

bool is_pauli_kind(const std::string& kind) {
  return kind == "toric_patch" || kind == "cluster_chain" || kind == "pauli_file";
}

LocalChannel classical_site_channel(const std::string& kind, Vertex site, std::uint32_t q, double eps) {
  if (kind == "flip") {
    if (q != 2) throw config_error("flip noise requires q = 2");
    return bit_flip_channel(site, eps);
  }
  if (kind == "uniform") return uniform_replacement_channel(site, q, eps);
  throw config_error("unknown classical noise kind: " + kind);
}

QuantumChannel quantum_site_channel(const std::string& kind, Vertex site, double eps) {
  if (kind == "depolarizing") return depolarizing_channel(site, eps);
  if (kind == "dephasing") return dephasing_channel(site, eps);
  throw config_error("unknown quantum noise kind: " + kind);
}

std::vector<std::string> header_comments(const ExperimentConfig& cfg) {
  return {
      std::string("# markovlab ") + kVersion,
      "# config_hash " + cfg.hash,
      "# units: cmi/mi in nats; tv = 0.5*sum|p-q|; energies dimensionless",
  };
}

}  // namespace

std::string CsvDocument::to_string() const {
  std::ostringstream os;
  for (const auto& c : comments) os << c << '\n';
  os << columns << '\n';
  for (const auto& r : rows) os << r << '\n';
  return os.str();
}

std::string config_hash_hex(const std::string& canonical_text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig ExperimentConfig::parse(const std::string& json_text, int budget_override) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const std::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.experiment = j.at("experiment").get<std::string>();
    const auto& m = j.at("model");
    cfg.model_kind = m.at("kind").get<std::string>();
    cfg.n = m.value("n", std::size_t{0});
    cfg.rows = m.value("rows", std::size_t{0});
    cfg.cols = m.value("cols", std::size_t{0});
    cfg.ell = m.value("L", std::size_t{0});
    cfg.periodic = m.value("periodic", false);
    cfg.model_path = m.value("path", std::string{});
    cfg.beta = j.value("beta", 1.0);
    if (j.contains("noise")) {
      const auto& nz = j.at("noise");
      cfg.noise_kind = nz.value("kind", std::string{"flip"});
      if (nz.contains("epsilons")) cfg.epsilons = nz.at("epsilons").get<std::vector<double>>();
      else if (nz.contains("epsilon")) cfg.epsilons = {nz.at("epsilon").get<double>()};
      cfg.depth = nz.value("depth", std::size_t{1});
    }
    if (j.contains("tripartition")) {
      const auto& t = j.at("tripartition");
      cfg.center = t.at("center").get<std::vector<Vertex>>();
      cfg.radius_min = t.value("radius_min", std::size_t{1});
      cfg.radius_max = t.value("radius_max", cfg.radius_min);
    }
    if (j.contains("expansion")) {
      const auto& e = j.at("expansion");
      cfg.w_max = e.value("w_max", std::size_t{4});
      cfg.kp_a = e.value("kp_a", 1.0);
    }
    if (j.contains("recover")) {
      cfg.radii = j.at("recover").at("radii").get<std::vector<std::size_t>>();
    }
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      cfg.th_degrees = t.at("degrees").get<std::vector<std::size_t>>();
      cfg.th_betas = t.at("betas").get<std::vector<double>>();
      cfg.th_qs = t.at("qs").get<std::vector<std::uint32_t>>();
      cfg.th_depths = t.at("depths").get<std::vector<std::size_t>>();
    }
    cfg.budget_bits = j.value("budget_bits", kDefaultBudgetBits);
    cfg.out_path = j.value("output", std::string{});
  } catch (const config_error&) {
    throw;
  } catch (const std::exception& e) {
    throw config_error(std::string("config field error: ") + e.what());
  }
  cfg.hash = config_hash_hex(j.dump());
  if (budget_override > 0) cfg.budget_bits = budget_override;
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, int budget_override) {
  return parse(read_file(path), budget_override);
}

void ExperimentConfig::validate() const {
  const bool known = experiment == "cmi-sweep" || experiment == "expansion" || experiment == "thresholds" ||
                     experiment == "recover" || experiment == "stabilizer-check";
  if (!known) throw config_error("unknown experiment: " + experiment);
  if (experiment == "thresholds") {
    if (th_degrees.empty() || th_betas.empty() || th_qs.empty() || th_depths.empty()) {
      throw config_error("thresholds experiment needs degrees/betas/qs/depths");
    }
    return;
  }
  if (model_kind.empty()) throw config_error("model.kind required");
  if (experiment != "thresholds" && epsilons.empty()) throw config_error("noise.epsilon(s) required");
  for (double e : epsilons) {
    if (e < 0.0 || e > 1.0) throw config_error("epsilon must lie in [0,1]");
  }
  if (experiment == "cmi-sweep" || experiment == "expansion" || experiment == "stabilizer-check") {
    if (center.empty()) throw config_error("tripartition.center required");
    if (radius_min < 1 || radius_max < radius_min) throw config_error("invalid tripartition radii");
  }
  if (experiment == "recover" && radii.empty()) throw config_error("recover.radii required");

  // Enumeration budgets are enforced before any run.
  if (model_kind == "ising_chain" && static_cast<double>(n) > budget_bits) {
    throw budget_exceeded("ising_chain state space exceeds budget");
  }
  if (model_kind == "ising_grid" && static_cast<double>(rows * cols) > budget_bits) {
    throw budget_exceeded("ising_grid state space exceeds budget");
  }
}

CsvDocument run_cmi_sweep(const ExperimentConfig& cfg) {
  CsvDocument doc;
  doc.comments = header_comments(cfg);
  doc.columns = "epsilon,radius,d_ac,cmi,fitted_xi";

  const bool pauli = is_pauli_kind(cfg.model_kind);
  if (!pauli) {
    GibbsModel m = build_classical_model(cfg);
    const Hypergraph& g = m.graph();
    DiscreteDistribution clean = exact_distribution(m, cfg.budget_bits);
    Region center(cfg.center);
    // Validate the whole radius range up front.
    for (std::size_t r = cfg.radius_min; r <= cfg.radius_max; ++r) {
      Tripartition t = annulus_tripartition(g, center, r);
      if (t.c.empty()) throw config_error("tripartition radius " + std::to_string(r) + " leaves C empty");
    }
    for (double eps : cfg.epsilons) {
      SiteProduct noise;
      for (std::size_t v = 0; v < g.n_vertices(); ++v) {
        noise.channels.push_back(classical_site_channel(cfg.noise_kind, static_cast<Vertex>(v), g.dim(static_cast<Vertex>(v)), eps));
      }
      DiscreteDistribution noisy = apply_process(clean, noise);
      std::vector<std::pair<double, double>> samples;
      std::vector<std::pair<std::size_t, double>> rows;
      for (std::size_t r = cfg.radius_min; r <= cfg.radius_max; ++r) {
        Tripartition t = annulus_tripartition(g, center, r);
        const double v = cmi(noisy, t);
        const std::size_t dac = graph_distance(g, t.a, t.c);
        samples.emplace_back(static_cast<double>(dac), v);
        rows.emplace_back(r, v);
      }
      double xi = std::nan("");
      try {
        MarkovLengthFit fit = fit_markov_length(samples);
        if (fit.decaying) xi = fit.xi;
      } catch (const std::invalid_argument&) {
      }
      for (std::size_t k = 0; k < rows.size(); ++k) {
        doc.rows.push_back(fmt(eps) + "," + fmt(rows[k].first) + "," + fmt(samples[k].first) + "," +
                           fmt(rows[k].second) + "," + fmt(xi));
      }
    }
    return doc;
  }

  // Stabilizer-reducible route: classical CMI on the label distribution.
  StabilizerHamiltonian h = build_pauli_model(cfg);
  const Hypergraph& g = h.graph();
  StabilizerDistribution sd = stabilizer_distribution(h, cfg.beta);
  DiscreteDistribution p0 = exact_distribution(sd.label_model, cfg.budget_bits);
  Region center(cfg.center);
  for (double eps : cfg.epsilons) {
    DiscreteDistribution p = p0;
    for (std::size_t v = 0; v < h.n_sites(); ++v) {
      p = apply_channel(p, induced_classical_channel(quantum_site_channel(cfg.noise_kind, static_cast<Vertex>(v), eps), h));
    }
    std::vector<std::pair<double, double>> samples;
    std::vector<std::pair<std::size_t, double>> rows;
    for (std::size_t r = cfg.radius_min; r <= cfg.radius_max; ++r) {
      Tripartition t = annulus_tripartition(g, center, r);
      if (t.c.empty()) throw config_error("tripartition radius leaves C empty");
      LabelRegions lr = classify_labels(h, t);
      Tripartition label_t{lr.a.unite(lr.boundary_a), lr.b, lr.c.unite(lr.boundary_c)};
      const double v = cmi(p, label_t);
      const std::size_t dac = graph_distance(g, t.a, t.c);
      samples.emplace_back(static_cast<double>(dac), v);
      rows.emplace_back(r, v);
    }
    double xi = std::nan("");
    try {
      MarkovLengthFit fit = fit_markov_length(samples);
      if (fit.decaying) xi = fit.xi;
    } catch (const std::invalid_argument&) {
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      doc.rows.push_back(fmt(eps) + "," + fmt(rows[k].first) + "," + fmt(samples[k].first) + "," +
                         fmt(rows[k].second) + "," + fmt(xi));
    }
  }
  return doc;
}

CsvDocument run_expansion_report(const ExperimentConfig& cfg) {
  CsvDocument doc;
  doc.comments = header_comments(cfg);
  doc.columns = "w_max,log_ptilde_truncated,log_ptilde_exact,residual_max,fac_truncated_max,fac_bound,kp_margin";

  GibbsModel m = build_classical_model(cfg);
  const Hypergraph& g = m.graph();
  Region center(cfg.center);
  Tripartition t = annulus_tripartition(g, center, cfg.radius_min);
  if (t.c.empty()) throw config_error("expansion tripartition leaves C empty");
  const double eps = cfg.epsilons.at(0);

  // Pinned instance: single-site noise on B, observed all-favored.
  std::vector<LocalChannel> channels;
  std::vector<int> b_prime(t.b.size(), 0);
  for (Vertex v : t.b) channels.push_back(classical_site_channel(cfg.noise_kind, v, g.dim(v), eps));
  PinnedModel pm = pin_single_site(m, t.b, channels, b_prime);

  std::size_t q_eff = 2;
  for (Vertex v : t.b) q_eff = std::max<std::size_t>(q_eff, g.dim(v));
  const double p_min_c = critical_pinning(g.max_degree(), pm.h_max(), q_eff);
  const double b_decay = pm.p_min() - p_min_c;
  const std::size_t dac = graph_distance(g, t.a, t.c);
  const std::size_t min_boundary = std::min(boundary_set(g, t.a).size(), boundary_set(g, t.c).size());
  // Reference expansion at the all-zero unpinned assignment plus a worst-case
  // residual over the boundary-relevant assignments.
  std::vector<int> x0(g.n_vertices(), 0);
  ExpansionReport ref = truncated_log_expansion(pm, t, x0, cfg.w_max,
                                                b_decay > 0.0 ? cfg.kp_a : 0.0,
                                                b_decay > 0.0 ? b_decay : 0.0);
  double fac_bound = std::nan("");
  double kp_margin = std::nan("");
  if (b_decay > 0.0) {
    fac_bound = static_cast<double>(min_boundary) * std::exp(-b_decay * static_cast<double>(dac));
    if (ref.kp) kp_margin = ref.kp->worst_margin;
  }

  std::vector<double> residual_max(cfg.w_max, 0.0), fac_max(cfg.w_max, 0.0);
  {
    // Unpinned sites enter only through B-adjacent hyperedges.
    std::vector<Vertex> ac_sites;
    for (Vertex v : t.a.unite(t.c)) {
      for (Vertex u : g.neighbors(v)) {
        if (t.b.contains(u)) {
          ac_sites.push_back(v);
          break;
        }
      }
    }
    std::vector<std::uint32_t> dims;
    for (Vertex v : ac_sites) dims.push_back(g.dim(v));
    MixedRadix radix(dims);
    std::vector<int> vals;
    for (std::size_t i = 0; i < radix.size(); ++i) {
      radix.decode(i, vals);
      std::vector<int> x(g.n_vertices(), 0);
      for (std::size_t k = 0; k < ac_sites.size(); ++k) x[ac_sites[k]] = vals[k];
      ExpansionReport er = truncated_log_expansion(pm, t, x, cfg.w_max);
      for (std::size_t w = 0; w < cfg.w_max; ++w) {
        residual_max[w] = std::max(residual_max[w], er.residual[w]);
        fac_max[w] = std::max(fac_max[w], std::abs(er.f_ac_partial[w]));
      }
    }
  }
  for (std::size_t w = 1; w <= cfg.w_max; ++w) {
    doc.rows.push_back(fmt(w) + "," + fmt(ref.log_ptilde_partial[w - 1]) + "," + fmt(ref.exact_log_ptilde) +
                       "," + fmt(residual_max[w - 1]) + "," + fmt(fac_max[w - 1]) + "," + fmt(fac_bound) +
                       "," + fmt(kp_margin));
  }
  return doc;
}

CsvDocument run_thresholds(const ExperimentConfig& cfg) {
  CsvDocument doc;
  doc.comments = header_comments(cfg);
  doc.columns = "degree,beta,q,depth,p_min_c,eps_c";
  for (std::size_t deg : cfg.th_degrees) {
    for (double beta : cfg.th_betas) {
      for (std::uint32_t q : cfg.th_qs) {
        for (std::size_t d : cfg.th_depths) {
          const double q_eff = std::pow(static_cast<double>(q), static_cast<double>(d));
          const double pmc = critical_pinning(deg, beta, static_cast<std::size_t>(std::llround(q_eff)));
          const double ec = critical_epsilon(deg, beta, q, d);
          doc.rows.push_back(fmt(deg) + "," + fmt(beta) + "," + fmt(static_cast<std::size_t>(q)) + "," + fmt(d) + "," + fmt(pmc) +
                             "," + fmt(ec));
        }
      }
    }
  }
  return doc;
}

CsvDocument run_recovery(const ExperimentConfig& cfg) {
  CsvDocument doc;
  doc.comments = header_comments(cfg);
  doc.columns = "epsilon,r,recovery_error,tv_no_recovery";
  GibbsModel m = build_classical_model(cfg);
  const Hypergraph& g = m.graph();
  DiscreteDistribution clean = exact_distribution(m, cfg.budget_bits);
  for (double eps : cfg.epsilons) {
    SiteProduct noise;
    for (std::size_t v = 0; v < g.n_vertices(); ++v) {
      noise.channels.push_back(classical_site_channel(cfg.noise_kind, static_cast<Vertex>(v), g.dim(static_cast<Vertex>(v)), eps));
    }
    NoiseProcess proc = noise;
    DiscreteDistribution noisy = apply_process(clean, proc);
    const double tv0 = total_variation(clean, noisy);
    for (std::size_t r : cfg.radii) {
      std::vector<PatchRecovery> recs = build_sweep_recoveries(clean, proc, g, r, cfg.budget_bits);
      const double err = recovery_error(clean, proc, recs);
      doc.rows.push_back(fmt(eps) + "," + fmt(r) + "," + fmt(err) + "," + fmt(tv0));
    }
  }
  return doc;
}

bool run_stabilizer_check(const ExperimentConfig& cfg, std::string& report_text) {
  StabilizerHamiltonian h = build_pauli_model(cfg);
  const double eps = cfg.epsilons.empty() ? 0.0 : cfg.epsilons[0];
  std::vector<QuantumChannel> process;
  for (std::size_t v = 0; v < h.n_sites(); ++v) {
    process.push_back(quantum_site_channel(cfg.noise_kind, static_cast<Vertex>(v), eps));
  }
  Tripartition t = annulus_tripartition(h.graph(), Region(cfg.center), cfg.radius_min);
  StabilizerCheckReport rep = stabilizer_check(h, cfg.beta, process, t);

  std::ostringstream os;
  auto line = [&os](const char* name, bool ok, const std::string& detail) {
    os << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) os << " (" << detail << ")";
    os << '\n';
  };
  line("terms commute", rep.commuting, "");
  line("projectors resolve identity", rep.projectors_resolve_identity, "");
  line("projector ranks equal", rep.ranks_equal, "");
  line("gibbs state reconstruction", rep.reconstruction_error <= 1e-10,
       "trace-norm error " + fmt(rep.reconstruction_error));
  line("stabilizer distribution matches dense traces", rep.distribution_error <= 1e-10,
       "max error " + fmt(rep.distribution_error));
  line("induced channel matches trace formula", rep.channel_error <= 1e-10,
       "max error " + fmt(rep.channel_error));
  line("quantum cmi equals label cmi", rep.cmi_gap <= 1e-8, "gap " + fmt(rep.cmi_gap));
  report_text = os.str();
  return rep.ok();
}

}  // namespace mklab
