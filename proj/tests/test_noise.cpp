#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "markovlab/noise.hpp"
#include "oracles.hpp"

using namespace mklab;

namespace {

LocalChannel two_site_mix(Vertex a, Vertex b, double eps) {
  // (1-eps) I + eps * uniform replacement on the pair.
  std::vector<double> t(16, eps / 4.0);
  for (std::size_t i = 0; i < 4; ++i) t[i * 4 + i] += 1.0 - eps;
  return LocalChannel(Region{a, b}, {2, 2}, std::move(t));
}

// TV distance by table order (ignores variable ids; shapes must agree).
double tv_by_order(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  REQUIRE(p.size() == q.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.prob(i) - q.prob(i));
  return 0.5 * s;
}

// Conditional of the spacetime joint on the final-slice values of B.
DiscreteDistribution oracle_posterior(const GibbsModel& m, const LayeredProcess& proc, const Region& b,
                                      const std::vector<int>& b_final) {
  DiscreteDistribution joint = oracles::spacetime_joint(m, proc);
  const std::size_t slices = proc.depth() + 1;
  std::vector<Vertex> cond_sites;
  for (Vertex v : b) cond_sites.push_back(static_cast<Vertex>(v * slices + proc.depth()));
  return conditional(joint, Region(cond_sites), b_final);
}

}  // namespace

TEST_CASE("epsilon_decomposition") {
  auto [e0, n0] = epsilon_decomposition({1, 0, 0, 1});
  CHECK(e0 == 0.0);
  CHECK(n0 == std::vector<double>{1, 0, 0, 1});

  auto [e1, n1] = epsilon_decomposition({0.9, 0.1, 0.1, 0.9});
  CHECK(e1 == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(n1[1] == doctest::Approx(1.0));
  CHECK(n1[0] == doctest::Approx(0.0));

  auto [e2, n2] = epsilon_decomposition({0.75, 0.25, 0.25, 0.75});
  // uniform replacement with eps=0.5 has diagonal 0.75
  CHECK(e2 == doctest::Approx(0.25).epsilon(1e-14));
  (void)n2;

  LocalChannel u = uniform_replacement_channel(0, 2, 0.5);
  CHECK(u.epsilon() == doctest::Approx(0.25));
  // The minimal decomposition of the q=2 uniform replacement is the flip.
  CHECK(u.residual()[1] == doctest::Approx(1.0));
  CHECK(u.residual()[0] == doctest::Approx(0.0));

  CHECK_THROWS_AS(epsilon_decomposition({0.5, 0.2, 0.6, 0.8}), std::invalid_argument);
}

TEST_CASE("channel reconstruction invariant") {
  LocalChannel ch = bit_flip_channel(0, 0.2);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 2; ++i) {
      const double expect = (1 - ch.epsilon()) * (o == i ? 1.0 : 0.0) + ch.epsilon() * ch.residual()[o * 2 + i];
      CHECK(ch.entry(o, i) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer validity") {
  Hypergraph g = Hypergraph::path(4);
  // Adjacent supports share the {1,2} hyperedge.
  CHECK_THROWS_AS(LayeredProcess(g, {{{bit_flip_channel(1, 0.1), bit_flip_channel(2, 0.1)}}}),
                  std::invalid_argument);
  // Overlapping supports.
  CHECK_THROWS_AS(LayeredProcess(g, {{{two_site_mix(0, 1, 0.1), bit_flip_channel(1, 0.1)}}}),
                  std::invalid_argument);
  // Disconnected pair is fine.
  LayeredProcess ok(g, {{{bit_flip_channel(0, 0.1), bit_flip_channel(3, 0.1)}}});
  CHECK(ok.depth() == 1);
  CHECK(ok.max_epsilon() == doctest::Approx(0.1));
}

TEST_CASE("apply_process") {
  GibbsModel m = ising_chain(4, 1.0);
  DiscreteDistribution p = exact_distribution(m);
  Hypergraph g = m.graph();

  LayeredProcess ident(g, {{{identity_channel(0, 2), identity_channel(3, 2)}}});
  CHECK(total_variation(apply_process(p, ident), p) < 1e-15);

  // Uniform is stationary under flips.
  DiscreteDistribution u = exact_distribution(ising_chain(4, 0.0));
  SiteProduct flips;
  for (Vertex v = 0; v < 4; ++v) flips.channels.push_back(bit_flip_channel(v, 0.3));
  CHECK(total_variation(apply_process(u, flips), u) < 1e-14);

  // One layer of per-site flips against direct convolution.
  SiteProduct one;
  for (Vertex v = 0; v < 4; ++v) one.channels.push_back(bit_flip_channel(v, 0.2));
  DiscreteDistribution noisy = apply_process(p, one);
  std::vector<double> direct(16, 0.0);
  for (std::size_t x = 0; x < 16; ++x) {
    for (std::size_t y = 0; y < 16; ++y) {
      double t = 1.0;
      for (std::size_t s = 0; s < 4; ++s) {
        const bool same = ((x >> s) & 1) == ((y >> s) & 1);
        t *= same ? 0.8 : 0.2;
      }
      direct[y] += t * p.prob(x);
    }
  }
  DiscreteDistribution oracle(p.variables(), p.dims(), direct, true);
  CHECK(total_variation(noisy, oracle) < 1e-14);
}

TEST_CASE("pin_single_site: hard pin in the noiseless limit") {
  GibbsModel m = ising_chain(4, 0.7);
  Region b{1, 2};
  std::vector<LocalChannel> chans{identity_channel(1, 2), identity_channel(2, 2)};
  PinnedModel pm = pin_single_site(m, b, chans, {1, 0});
  CHECK(pm.p_min() == std::numeric_limits<double>::infinity());
  DiscreteDistribution post = pm.exact_distribution();
  DiscreteDistribution clean = exact_distribution(m);
  DiscreteDistribution cond = conditional(clean, b, {1, 0});
  // Pinned distribution keeps B variables; its conditional slice matches.
  DiscreteDistribution freed = conditional(post, b, {1, 0});
  CHECK(total_variation(freed, cond) < 1e-12);
  // All mass sits on the pinned values.
  DiscreteDistribution bm = marginal(post, b);
  CHECK(bm.prob(2) == doctest::Approx(1.0));  // (1,0) in mixed radix
}

TEST_CASE("pin_single_site: gap formula") {
  GibbsModel m = ising_chain(4, 0.5);
  Region b{1, 2};
  std::vector<LocalChannel> chans{bit_flip_channel(1, 0.1), bit_flip_channel(2, 0.1)};
  PinnedModel pm = pin_single_site(m, b, chans, {0, 0});
  CHECK(pm.p_min() == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  CHECK(pm.favored_value(1) == 0);
  // h_max is the shifted coupling range 2*beta.
  CHECK(pm.h_max() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pin_single_site: posterior identity for every observation") {
  GibbsModel m = ising_chain(4, 1.0);
  Region b{1, 2};
  DiscreteDistribution clean = exact_distribution(m);
  for (double eps : {0.1, 0.3}) {
    std::vector<LocalChannel> chans{bit_flip_channel(1, eps), bit_flip_channel(2, eps)};
    for (int b1 = 0; b1 < 2; ++b1) {
      for (int b2 = 0; b2 < 2; ++b2) {
        PinnedModel pm = pin_single_site(m, b, chans, {b1, b2});
        DiscreteDistribution post = pm.exact_distribution();
        DiscreteDistribution oracle = oracles::bayes_posterior(clean, {1, 2}, chans, {b1, b2});
        CHECK(total_variation(post, oracle) < 1e-12);
      }
    }
  }
}

TEST_CASE("post-selection decomposition and data processing chain") {
  // Noise on B only; the CMI of the noisy joint marginal decomposes into the
  // posterior MI average, and restriction to clean AC never lowers the MI.
  GibbsModel m = ising_chain(4, 0.8);
  DiscreteDistribution clean = exact_distribution(m);
  Region a{0}, b{1, 2}, c{3};
  const double eps = 0.15;
  std::vector<LocalChannel> chans{bit_flip_channel(1, eps), bit_flip_channel(2, eps)};

  // Joint over (x, b') built directly: variables 0..3 clean, 4..5 noisy B.
  std::vector<std::uint32_t> dims(6, 2);
  std::vector<double> w(64, 0.0);
  MixedRadix radix(dims);
  for (std::size_t i = 0; i < 64; ++i) {
    std::vector<int> xs;
    radix.decode(i, xs);
    std::size_t x = 0;
    for (int k = 0; k < 4; ++k) x = x * 2 + static_cast<std::size_t>(xs[k]);
    double t = chans[0].entry(static_cast<std::size_t>(xs[4]), static_cast<std::size_t>(xs[1])) *
               chans[1].entry(static_cast<std::size_t>(xs[5]), static_cast<std::size_t>(xs[2]));
    w[i] = clean.prob(x) * t;
  }
  DiscreteDistribution joint(Region::full(6), dims, w, true);

  // CMI of the noisy marginal P(A, C, B') with B' as conditioning region.
  Tripartition noisy_t{a, Region{4, 5}, c};
  const double cmi_noisy = cmi(joint, noisy_t);

  DiscreteDistribution pb = marginal(joint, Region{4, 5});
  double acc = 0.0, acc_clean = 0.0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    if (pb.prob(i) <= 0.0) continue;
    std::vector<int> bv;
    pb.radix().decode(i, bv);
    DiscreteDistribution post = conditional(joint, Region{4, 5}, bv);
    acc += pb.prob(i) * mutual_information(post, a, c);
    PinnedModel pm = pin_single_site(m, b, chans, bv);
    DiscreteDistribution pinned = pm.exact_distribution();
    const double mi_pinned = mutual_information(pinned, a, c);
    acc_clean += pb.prob(i) * mi_pinned;
    // Data processing: the pinned (clean AC) MI dominates the noisy-AC MI.
    CHECK(mutual_information(post, a, c) <= mi_pinned + 1e-12);
    // The pinned model's AC marginal equals the posterior's AC marginal here
    // because the noise acts on B only.
    CHECK(total_variation(marginal(pinned, a.unite(c)), marginal(post, a.unite(c))) < 1e-12);
  }
  CHECK(cmi_noisy == doctest::Approx(acc).epsilon(1e-10));
  CHECK(acc_clean >= acc - 1e-12);
}

TEST_CASE("spacetime_model: identity channels give a hard pin") {
  GibbsModel m = ising_chain(3, 0.6);
  Hypergraph g = m.graph();
  LayeredProcess proc(g, {{{identity_channel(0, 2), identity_channel(2, 2)}}, {{identity_channel(1, 2)}}});
  Region b{1};
  SpacetimeModel st = spacetime_model(m, proc, b, {1});
  DiscreteDistribution post = st.model.beta() == 1.0 ? exact_distribution(st.model) : exact_distribution(st.model);
  // Slice-0 marginal equals the clean conditional on x_1 = 1.
  std::vector<Vertex> slice0;
  for (std::size_t v = 0; v < 3; ++v) slice0.push_back(static_cast<Vertex>(st.var_of[v][0]));
  DiscreteDistribution m0 = marginal(post, Region(slice0));
  DiscreteDistribution clean = exact_distribution(m);
  // Conditioning the clean chain on x_1 = 1 and re-attaching the pinned value.
  DiscreteDistribution cond = conditional(clean, b, {1});
  DiscreteDistribution m0_cond = conditional(m0, Region{static_cast<Vertex>(st.var_of[1][0])}, {1});
  CHECK(tv_by_order(m0_cond, cond) < 1e-12);
}

TEST_CASE("spacetime_model: depth-2 posterior matches the joint-enumeration oracle") {
  GibbsModel m = ising_chain(4, 0.9);
  Hypergraph g = m.graph();
  LayeredProcess proc(g, {
                             {{two_site_mix(0, 1, 0.1), bit_flip_channel(3, 0.1)}},
                             {{two_site_mix(1, 2, 0.1)}},
                         });
  Region b{1, 2};
  for (int b1 = 0; b1 < 2; ++b1) {
    for (int b2 = 0; b2 < 2; ++b2) {
      SpacetimeModel st = spacetime_model(m, proc, b, {b1, b2});
      DiscreteDistribution post = exact_distribution(st.model);
      DiscreteDistribution oracle = oracle_posterior(m, proc, b, {b1, b2});
      REQUIRE(post.size() == oracle.size());
      double tv = 0.0;
      for (std::size_t i = 0; i < post.size(); ++i) tv += std::abs(post.prob(i) - oracle.prob(i));
      CHECK(0.5 * tv < 1e-10);
    }
  }
}

TEST_CASE("spacetime_model: depth-1 single-site reduces to pin_single_site") {
  GibbsModel m = ising_chain(5, 0.7);
  Hypergraph g = m.graph();
  Region b{1, 3};
  LayeredProcess proc(g, {{{bit_flip_channel(1, 0.2), bit_flip_channel(3, 0.2)}}});
  std::vector<LocalChannel> chans{bit_flip_channel(1, 0.2), bit_flip_channel(3, 0.2)};
  SpacetimeModel st = spacetime_model(m, proc, b, {0, 1});
  PinnedModel pm = pin_single_site(m, b, chans, {0, 1});

  // The slice-0 marginal of the spacetime posterior equals the pinned model's
  // distribution marginalized over nothing (no extra slices on B at d=1, and
  // the A/C slice-1 copies marginalize away).
  DiscreteDistribution post = exact_distribution(st.model);
  std::vector<Vertex> slice0;
  for (std::size_t v = 0; v < 5; ++v) slice0.push_back(static_cast<Vertex>(st.var_of[v][0]));
  CHECK(tv_by_order(marginal(post, Region(slice0)), pm.exact_distribution()) < 1e-12);
}

TEST_CASE("block_spins: identity channels pin hard, distributions relabel") {
  GibbsModel m = ising_chain(4, 0.5);
  Hypergraph g = m.graph();
  LayeredProcess proc(g, {{{identity_channel(1, 2)}}, {{identity_channel(2, 2)}}});
  Region b{1, 2};
  SpacetimeModel st = spacetime_model(m, proc, b, {1, 1});
  BlockedModel blocked = block_spins(st);
  for (const auto& row : blocked.gap_rows) {
    CHECK(row.favored_cost == doctest::Approx(0.0));
    CHECK(row.excited_min == std::numeric_limits<double>::infinity());
    CHECK(row.ok);
  }
  // Blocked distribution is a relabeling of the spacetime one: equal entropy.
  DiscreteDistribution ds = exact_distribution(st.model);
  DiscreteDistribution db = blocked.pinned.exact_distribution();
  CHECK(shannon_entropy(ds) == doctest::Approx(shannon_entropy(db)).epsilon(1e-10));
}

TEST_CASE("block_spins: lemma-4 gap bounds at depth 2") {
  GibbsModel m = ising_chain(4, 0.9);
  Hypergraph g = m.graph();
  const double eps = 0.1;
  LayeredProcess proc(g, {
                             {{two_site_mix(0, 1, eps), bit_flip_channel(3, eps)}},
                             {{two_site_mix(1, 2, eps)}},
                         });
  Region b{1, 2};
  SpacetimeModel st = spacetime_model(m, proc, b, {0, 0});
  BlockedModel blocked = block_spins(st);
  REQUIRE(!blocked.gap_rows.empty());
  const double eps_meas = proc.max_epsilon();
  for (const auto& row : blocked.gap_rows) {
    CHECK(row.ok);
    CHECK(row.favored_cost <= -2.0 * std::log1p(-eps_meas) + 1e-12);
    CHECK(row.excited_min >= -std::log(eps_meas) - 1e-12);
    // Lemma-4 gap at eps_meas.
    CHECK(row.excited_min - row.favored_cost >=
          -std::log(eps_meas) + 2.0 * std::log1p(-eps_meas) - 1e-12);
  }

  // Blocked distribution is the spacetime distribution up to relabeling:
  // compare entropies and the blocked CMI against the spacetime CMI of the
  // corresponding variable groups.
  DiscreteDistribution ds = exact_distribution(st.model);
  DiscreteDistribution db = blocked.pinned.exact_distribution();
  CHECK(shannon_entropy(ds) == doctest::Approx(shannon_entropy(db)).epsilon(1e-10));

  Tripartition bt{Region{0}, b, Region{3}};
  auto spacetime_region = [&](const Region& sites) {
    std::vector<Vertex> vars;
    for (Vertex v : sites) {
      for (int var : blocked.slice_vars[v]) vars.push_back(static_cast<Vertex>(var));
    }
    return Region(vars);
  };
  Tripartition st_t{spacetime_region(bt.a), spacetime_region(bt.b), spacetime_region(bt.c)};
  CHECK(cmi(db, bt) == doctest::Approx(cmi(ds, st_t)).epsilon(1e-10));
}

TEST_CASE("block_spins: d=1 equals pin_single_site up to relabeling") {
  GibbsModel m = ising_chain(5, 0.7);
  Hypergraph g = m.graph();
  Region b{1, 3};
  const double eps = 0.2;
  LayeredProcess proc(g, {{{bit_flip_channel(1, eps), bit_flip_channel(3, eps)}}});
  std::vector<LocalChannel> chans{bit_flip_channel(1, eps), bit_flip_channel(3, eps)};
  const std::vector<int> obs{1, 0};
  SpacetimeModel st = spacetime_model(m, proc, b, obs);
  BlockedModel blocked = block_spins(st);
  PinnedModel direct = pin_single_site(m, b, chans, obs);

  CHECK(blocked.pinned.p_min() == doctest::Approx(direct.p_min()).epsilon(1e-12));

  // Marginal of the blocked distribution on slice-0 components equals the
  // directly pinned distribution after undoing the favored relabeling.
  DiscreteDistribution db = blocked.pinned.exact_distribution();
  DiscreteDistribution dp = direct.exact_distribution();
  // Blocked B-superspins have one slice at d=1, relabeled favored -> 0.
  // Map: blocked value y at B site v corresponds to clean value value_map[v][y].
  std::vector<double> unrelabeled(dp.size(), 0.0);
  MixedRadix brad(db.dims());
  std::vector<int> ys;
  for (std::size_t i = 0; i < db.size(); ++i) {
    brad.decode(i, ys);
    // site-major blocked dims: A/C sites have q^2 values (two slices), B have q.
    // Project A/C superspins to slice 0 and undo the B relabeling.
    std::size_t idx = 0;
    for (std::size_t v = 0; v < 5; ++v) {
      int val;
      if (b.contains(static_cast<Vertex>(v))) {
        int raw = blocked.value_map[v][static_cast<std::size_t>(ys[v])];
        val = raw;  // single slice
      } else {
        // two slices: slice 0 is the high digit
        val = ys[v] / 2;
      }
      idx = idx * 2 + static_cast<std::size_t>(val);
    }
    unrelabeled[idx] += db.prob(i);
  }
  DiscreteDistribution projected(dp.variables(), dp.dims(), unrelabeled, true);
  CHECK(total_variation(projected, dp) < 1e-12);
}
