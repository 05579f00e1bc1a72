// Acceptance suite: runs every stated numerical identity and bound at its
// pinned tolerance and prints one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "markovlab/experiments.hpp"
#include "oracles.hpp"

using namespace mklab;

namespace {

int g_failures = 0;

struct Criterion {
  std::string name;
  bool ok = true;
  std::ostringstream detail;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  explicit Criterion(std::string n) : name(std::move(n)) {}

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }

  void note(const std::string& what) {
    detail << (detail.str().empty() ? "" : "; ") << what;
  }

  ~Criterion() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), secs,
                detail.str().empty() ? "" : " -- ", detail.str().c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

SiteProduct flips_everywhere(std::size_t n, double eps) {
  SiteProduct sp;
  for (std::size_t v = 0; v < n; ++v) sp.channels.push_back(bit_flip_channel(static_cast<Vertex>(v), eps));
  return sp;
}

PinnedModel pinned_chain(std::size_t n, double beta, double eps, const Region& b) {
  GibbsModel m = ising_chain(n, beta);
  std::vector<LocalChannel> chans;
  for (Vertex v : b) chans.push_back(eps == 0.0 ? identity_channel(v, 2) : bit_flip_channel(v, eps));
  return pin_single_site(m, b, chans, std::vector<int>(b.size(), 0));
}

LocalChannel two_site_mix(Vertex a, Vertex b, double eps) {
  std::vector<double> t(16, eps / 4.0);
  for (std::size_t i = 0; i < 4; ++i) t[i * 4 + i] += 1.0 - eps;
  return LocalChannel(Region{a, b}, {2, 2}, std::move(t));
}

void criterion_1_hammersley_clifford() {
  Criterion c("criterion 1: Hammersley-Clifford exactness (clean CMI = 0)");
  double worst_classical = 0.0;
  for (double beta : {0.3, 1.0}) {
    DiscreteDistribution p = exact_distribution(ising_chain(10, beta));
    const Hypergraph g = ising_chain(10, beta).graph();
    for (Vertex center = 0; center < 10; ++center) {
      for (std::size_t r = 1; r <= 9; ++r) {
        Tripartition t = annulus_tripartition(g, Region{center}, r);
        worst_classical = std::max(worst_classical, std::abs(cmi(p, t)));
      }
    }
  }
  {
    GibbsModel m = ising_grid(3, 4, 0.5);
    DiscreteDistribution p = exact_distribution(m);
    for (Vertex center = 0; center < 12; ++center) {
      for (std::size_t r = 1; r <= 5; ++r) {
        Tripartition t = annulus_tripartition(m.graph(), Region{center}, r);
        worst_classical = std::max(worst_classical, std::abs(cmi(p, t)));
      }
    }
  }
  c.require(worst_classical <= 1e-10, "classical worst " + fmt(worst_classical));

  StabilizerHamiltonian h = StabilizerHamiltonian::cluster_chain(8);
  DensityMatrix rho = gibbs_density_matrix(h, 0.7);
  double worst_quantum = 0.0;
  for (Vertex center = 0; center < 8; ++center) {
    for (std::size_t r = 1; r <= 3; ++r) {
      Tripartition t = annulus_tripartition(h.graph(), Region{center}, r);
      worst_quantum = std::max(worst_quantum, std::abs(quantum_cmi(rho, t)));
    }
  }
  c.require(worst_quantum <= 1e-8, "quantum worst " + fmt(worst_quantum));
  c.note("classical max " + fmt(worst_classical) + ", quantum max " + fmt(worst_quantum));
}

void criterion_2_pinning_lemma() {
  Criterion c("criterion 2: pinning lemma posterior identity, all post-selections");
  GibbsModel m = ising_chain(6, 1.0);
  DiscreteDistribution clean = exact_distribution(m);
  double worst = 0.0;
  for (double eps : {0.05, 0.2}) {
    for (std::size_t radius : {std::size_t{1}, std::size_t{2}}) {
      Tripartition t = annulus_tripartition(m.graph(), Region{2}, radius);
      std::vector<LocalChannel> chans;
      for (Vertex v : t.b) chans.push_back(bit_flip_channel(v, eps));
      MixedRadix brad(std::vector<std::uint32_t>(t.b.size(), 2));
      std::vector<int> obs;
      for (std::size_t i = 0; i < brad.size(); ++i) {
        brad.decode(i, obs);
        PinnedModel pm = pin_single_site(m, t.b, chans, obs);
        DiscreteDistribution post = pm.exact_distribution();
        DiscreteDistribution oracle = oracles::bayes_posterior(clean, t.b.verts(), chans, obs);
        worst = std::max(worst, total_variation(post, oracle));
      }
    }
  }
  c.require(worst <= 1e-10, "worst posterior TV " + fmt(worst));
  c.note("worst TV " + fmt(worst));
}

void criterion_3_spacetime_blocking() {
  Criterion c("criterion 3: spacetime + blocking identities and gap bounds");
  GibbsModel m = ising_chain(4, 0.9);
  const Hypergraph& g = m.graph();
  const double eps = 0.1;
  LayeredProcess proc(g, {
                             {{two_site_mix(0, 1, eps), bit_flip_channel(3, eps)}},
                             {{two_site_mix(1, 2, eps)}},
                         });
  Region b{1, 2};
  double worst_tv = 0.0;
  bool gaps_ok = true;
  bool relabel_ok = true;
  for (int b1 = 0; b1 < 2; ++b1) {
    for (int b2 = 0; b2 < 2; ++b2) {
      SpacetimeModel st = spacetime_model(m, proc, b, {b1, b2});
      DiscreteDistribution post = exact_distribution(st.model);
      DiscreteDistribution joint = oracles::spacetime_joint(m, proc);
      std::vector<Vertex> cond;
      for (Vertex v : b) cond.push_back(static_cast<Vertex>(v * 3 + 2));
      DiscreteDistribution oracle = conditional(joint, Region(cond), {b1, b2});
      double tv = 0.0;
      for (std::size_t i = 0; i < post.size(); ++i) tv += std::abs(post.prob(i) - oracle.prob(i));
      worst_tv = std::max(worst_tv, 0.5 * tv);

      BlockedModel blocked = block_spins(st);
      if (blocked.gap_rows.empty()) gaps_ok = false;
      for (const auto& row : blocked.gap_rows) gaps_ok = gaps_ok && row.ok;
      DiscreteDistribution db = blocked.pinned.exact_distribution();
      relabel_ok = relabel_ok &&
                   std::abs(shannon_entropy(db) - shannon_entropy(post)) < 1e-10;
    }
  }
  c.require(worst_tv <= 1e-10, "posterior TV " + fmt(worst_tv));
  c.require(gaps_ok, "lemma-4 gap bounds violated");
  c.require(relabel_ok, "blocked relabeling changed the distribution");
  c.note("worst TV " + fmt(worst_tv));
}

void criterion_4_zd_machinery() {
  Criterion c("criterion 4: Z_D exponential bound and factorization, all D");
  Region b{1, 2, 3, 4, 5, 6, 7, 8};
  PinnedModel pm = pinned_chain(10, 0.3, 0.01, b);
  ZdReport rep = zd_exponential_bound_check(pm);
  c.require(rep.delta > 0.0, "delta <= 0");
  c.require(rep.ok, "bound violated, worst ratio " + fmt(rep.worst_ratio));
  c.require(rep.subsets_checked >= 255 * 4, "missing subsets");

  // Factorization for every disconnected component split of every D.
  double worst_gap = 0.0;
  const std::vector<Vertex> sites = b.verts();
  for (std::size_t mask = 1; mask < 256; ++mask) {
    // Components of the masked subset under chain adjacency.
    std::vector<std::vector<Vertex>> comps;
    std::vector<Vertex> cur;
    for (std::size_t k = 0; k < 8; ++k) {
      if (mask >> k & 1) {
        cur.push_back(sites[k]);
      } else if (!cur.empty()) {
        comps.push_back(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) comps.push_back(cur);
    if (comps.size() < 2) continue;
    for (std::size_t split = 1; split + 1 <= (std::size_t{1} << (comps.size() - 1)); ++split) {
      std::vector<Vertex> d1v, d2v;
      for (std::size_t k = 0; k < comps.size(); ++k) {
        auto& dst = (split >> k & 1) ? d1v : d2v;
        dst.insert(dst.end(), comps[k].begin(), comps[k].end());
      }
      if (d1v.empty() || d2v.empty()) continue;
      for (int xa = 0; xa < 2; ++xa) {
        for (int xc = 0; xc < 2; ++xc) {
          std::vector<int> x(10, 0);
          x[0] = xa;
          x[9] = xc;
          const double zu = subset_excitation_ratio(pm, Region(d1v).unite(Region(d2v)), x);
          const double z1 = subset_excitation_ratio(pm, Region(d1v), x);
          const double z2 = subset_excitation_ratio(pm, Region(d2v), x);
          worst_gap = std::max(worst_gap, std::abs(zu - z1 * z2));
        }
      }
    }
  }
  c.require(worst_gap <= 1e-12, "factorization gap " + fmt(worst_gap));
  c.note("delta " + fmt(rep.delta) + ", worst ratio " + fmt(rep.worst_ratio) + ", worst split gap " +
         fmt(worst_gap));
}

void criterion_5_cluster_convergence() {
  Criterion c("criterion 5: cluster expansion converges with a passing KP certificate");
  Region b{1, 2, 3, 4};
  PinnedModel pm = pinned_chain(6, 0.3, 5e-4, b);
  Tripartition t{Region{0}, b, Region{5}};
  const double p_min_c = critical_pinning(2, pm.h_max(), 2);
  c.require(pm.p_min() > p_min_c, "instance not below threshold");

  std::vector<double> residual(4, 0.0);
  for (int xa = 0; xa < 2; ++xa) {
    for (int xc = 0; xc < 2; ++xc) {
      std::vector<int> x(6, 0);
      x[0] = xa;
      x[5] = xc;
      ExpansionReport rep = truncated_log_expansion(pm, t, x, 4);
      for (std::size_t w = 0; w < 4; ++w) residual[w] = std::max(residual[w], rep.residual[w]);
    }
  }
  for (std::size_t w = 1; w < 4; ++w) {
    c.require(residual[w] <= residual[w - 1] + 1e-15, "residual not monotone at w=" + std::to_string(w + 1));
  }
  c.require(residual.back() < 1e-8, "final residual " + fmt(residual.back()));

  KpCertificate cert = kp_certificate(pm, 1.0, pm.p_min() - p_min_c, b.size());
  c.require(cert.satisfied, "KP certificate violated, margin " + fmt(cert.worst_margin));
  c.note("final residual " + fmt(residual.back()) + ", KP margin " + fmt(cert.worst_margin));
}

void criterion_6_fac_bound() {
  Criterion c("criterion 6: F_AC bound and weight floor");
  struct Inst {
    std::size_t n;
    double beta, eps;
  };
  double worst_rel = 0.0;
  for (const Inst& inst : {Inst{6, 0.3, 5e-4}, Inst{7, 0.25, 1e-3}}) {
    Region b;
    {
      std::vector<Vertex> bs;
      for (Vertex v = 1; v + 1 < inst.n; ++v) bs.push_back(v);
      b = Region(bs);
    }
    PinnedModel pm = pinned_chain(inst.n, inst.beta, inst.eps, b);
    Tripartition t{Region{0}, b, Region{static_cast<Vertex>(inst.n - 1)}};
    FacReport rep = f_ac_bound_check(pm, t, b.size());
    c.require(rep.decay_b > 0.0, "not below threshold");
    c.require(rep.max_abs_fac_exact <= rep.bound_graph,
              "exact F_AC " + fmt(rep.max_abs_fac_exact) + " above bound " + fmt(rep.bound_graph));
    c.require(rep.floor_ok, "cluster below the separation width");
    c.require(rep.bound_ok, "bound check failed");
    // Truncation strictly below the width leaves F_AC identically zero.
    if (rep.width >= 2) {
      for (int xa = 0; xa < 2; ++xa) {
        for (int xc = 0; xc < 2; ++xc) {
          std::vector<int> x(inst.n, 0);
          x[0] = xa;
          x[inst.n - 1] = xc;
          ExpansionReport er = truncated_log_expansion(pm, t, x, rep.width - 1);
          c.require(er.f_ac_partial.back() == 0.0, "truncated F_AC nonzero below the width");
        }
      }
    }
    if (rep.bound_graph > 0.0) worst_rel = std::max(worst_rel, rep.max_abs_fac_exact / rep.bound_graph);
  }
  c.note("worst exact/bound ratio " + fmt(worst_rel));
}

void criterion_7_markov_length() {
  Criterion c("criterion 7: CMI decay and Markov-length fit (n=12 chain)");
  GibbsModel m = ising_chain(12, 0.5);
  const Hypergraph& g = m.graph();
  const double eps = 0.05;
  DiscreteDistribution noisy = apply_process(exact_distribution(m), flips_everywhere(12, eps));
  std::vector<std::pair<double, double>> samples;
  for (std::size_t r = 1; r <= 4; ++r) {
    Tripartition t = annulus_tripartition(g, Region{5}, r);
    samples.emplace_back(static_cast<double>(graph_distance(g, t.a, t.c)), cmi(noisy, t));
  }
  MarkovLengthFit fit = fit_markov_length(samples);
  c.require(fit.decaying && std::isfinite(fit.xi) && fit.xi > 0.0, "fit not decaying");
  for (const auto& [d, v] : samples) {
    c.require(v <= fit.prefactor * std::exp(-d / fit.xi) * (1.0 + 1e-9),
              "sample above the fitted bound at d=" + fmt(d));
  }
  // The closed-form threshold is far more conservative than the observed
  // decay; both are reported for transparency.
  const double eps_c = critical_epsilon(2, 0.5, 2, 1);
  c.note("xi " + fmt(fit.xi) + ", c " + fmt(fit.prefactor) + ", rms residual " + fmt(fit.residual) +
         ", analytic eps_c " + fmt(eps_c) + " vs eps " + fmt(eps));
}

void criterion_8_quantum_reduction() {
  Criterion c("criterion 8: quantum reduction on the 8-qubit cluster chain");
  StabilizerHamiltonian h = StabilizerHamiltonian::cluster_chain(8);
  std::vector<QuantumChannel> process;
  for (Vertex v = 0; v < 8; ++v) process.push_back(depolarizing_channel(v, 0.1));
  Tripartition t = annulus_tripartition(h.graph(), Region{2, 3}, 1);
  StabilizerCheckReport rep = stabilizer_check(h, 0.8, process, t);
  c.require(rep.commuting && rep.projectors_resolve_identity && rep.ranks_equal, "projector structure broken");
  c.require(rep.reconstruction_error <= 1e-10, "reconstruction " + fmt(rep.reconstruction_error));
  c.require(rep.distribution_error <= 1e-10, "distribution " + fmt(rep.distribution_error));
  c.require(rep.channel_error <= 1e-10, "channel " + fmt(rep.channel_error));
  c.require(rep.cmi_gap <= 1e-8, "cmi gap " + fmt(rep.cmi_gap));
  c.note("recon " + fmt(rep.reconstruction_error) + ", dist " + fmt(rep.distribution_error) +
         ", chan " + fmt(rep.channel_error) + ", cmi gap " + fmt(rep.cmi_gap));
}

void criterion_9_recovery() {
  Criterion c("criterion 9: patch recovery error decreases with radius");
  GibbsModel m = ising_chain(8, 0.5);
  DiscreteDistribution clean = exact_distribution(m);
  NoiseProcess proc = flips_everywhere(8, 0.05);
  const double tv0 = total_variation(clean, apply_process(clean, proc));
  double prev = std::numeric_limits<double>::infinity();
  std::string errs;
  for (std::size_t r : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
    const double err = recovery_error(clean, proc, build_sweep_recoveries(clean, proc, m.graph(), r));
    c.require(err < prev, "error not strictly decreasing at r=" + std::to_string(r));
    c.require(err <= tv0 + 1e-15, "error above the no-recovery TV");
    errs += (errs.empty() ? "" : ", ") + fmt(err);
    prev = err;
  }
  c.note("tv0 " + fmt(tv0) + ", errors " + errs);
}

void criterion_10_thresholds() {
  Criterion c("criterion 10: threshold table residual and monotonicity");
  ExperimentConfig cfg = ExperimentConfig::parse(R"({
    "experiment": "thresholds",
    "model": {"kind": "none"},
    "thresholds": {"degrees": [1, 2, 3, 4, 6], "betas": [0.0, 0.5], "qs": [2], "depths": [1, 2]}
  })");
  CsvDocument doc = run_thresholds(cfg);
  c.require(doc.rows.size() == 20, "expected 20 rows");
  // Residuals.
  double worst = 0.0;
  std::vector<std::array<double, 6>> rows;
  for (const auto& line : doc.rows) {
    std::array<double, 6> r{};
    std::istringstream ss(line);
    std::string cellv;
    for (double& v : r) {
      std::getline(ss, cellv, ',');
      v = std::stod(cellv);
    }
    const double lhs = r[3] * std::log1p(-r[5]) - std::log(r[5]);
    const double rhs = r[0] * (1.0 + std::log(1.0 + r[0]) + r[0] * r[1] + r[3] * std::log(r[2]));
    worst = std::max(worst, std::abs(lhs - rhs));
    rows.push_back(r);
  }
  c.require(worst < 1e-10, "worst residual " + fmt(worst));
  // Monotone decreasing in beta, depth, degree at matched other parameters.
  for (const auto& a : rows) {
    for (const auto& b2 : rows) {
      auto lt = [](double x, double y) { return x < y - 1e-15; };
      if (a[0] == b2[0] && a[2] == b2[2] && a[3] == b2[3] && lt(a[1], b2[1])) {
        c.require(b2[5] < a[5], "eps_c not decreasing in beta");
      }
      if (a[0] == b2[0] && a[1] == b2[1] && a[2] == b2[2] && lt(a[3], b2[3])) {
        c.require(b2[5] < a[5], "eps_c not decreasing in depth");
      }
      if (a[1] == b2[1] && a[2] == b2[2] && a[3] == b2[3] && lt(a[0], b2[0])) {
        c.require(b2[5] < a[5], "eps_c not decreasing in degree");
      }
    }
  }
  c.require(critical_epsilon(2, 0.5, 3, 1) < critical_epsilon(2, 0.5, 2, 1), "eps_c not decreasing in log q");
  c.note("worst residual " + fmt(worst));
}

}  // namespace

int main() {
  criterion_1_hammersley_clifford();
  criterion_2_pinning_lemma();
  criterion_3_spacetime_blocking();
  criterion_4_zd_machinery();
  criterion_5_cluster_convergence();
  criterion_6_fac_bound();
  criterion_7_markov_length();
  criterion_8_quantum_reduction();
  criterion_9_recovery();
  criterion_10_thresholds();
  if (g_failures != 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
