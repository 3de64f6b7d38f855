#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <oqw/monitoring.hpp>

#include "example_models.hpp"

#include <random>

using namespace oqwalk;
using namespace testmodels;
using V = Vec<D>;

namespace {

std::mt19937_64 rng(2024);

M random_density(int n) {
  std::normal_distribution<double> g;
  M a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = C(g(rng), g(rng));
  M rho = a * a.adjoint();
  return rho / rho.trace();
}

// ---- oracles --------------------------------------------------------------

// Explicit depth-first enumeration of chain paths j -> i whose first visit
// to i happens at step r.  Exponential in the horizon; used to validate the
// linear-in-horizon mass iteration below.
double classical_first_visit_dfs(const RMat<D>& p, int target, int state, int steps_left,
                                 double weight) {
  if (steps_left == 0) return 0.0;
  double total = 0.0;
  for (int next = 0; next < p.rows(); ++next) {
    const double w = weight * p(next, state);
    if (w == 0.0) continue;
    if (next == target)
      total += (steps_left == 1) ? w : 0.0;
    else
      total += classical_first_visit_dfs(p, target, next, steps_left - 1, w);
  }
  return total;
}

// First-visit mass sequence b_r for a classical chain: propagate the mass
// over non-target states and harvest what flows into the target.
std::vector<double> classical_first_visit_masses(const RMat<D>& p, int target, int from,
                                                 int horizon) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(p.rows());
  mass[from] = 1.0;
  std::vector<double> b;
  for (int r = 1; r <= horizon; ++r) {
    Eigen::VectorXd next = p * mass;
    b.push_back(next[target]);
    next[target] = 0.0;
    mass = next;
  }
  return b;
}

// Geometric tail bound on sum_{r>N} b_r and sum_{r>N} r b_r from the decay
// ratio of the last masses.
struct TailBound {
  double prob_lo, prob_hi, mean_lo, mean_hi;
};

TailBound classical_bracket(const std::vector<double>& b) {
  const int n = int(b.size());
  double p = 0, m = 0;
  for (int r = 1; r <= n; ++r) {
    p += b[r - 1];
    m += r * b[r - 1];
  }
  double ratio = 0.0;
  for (int r = n / 2; r < n - 1; ++r)
    if (b[r - 1] > 1e-300) ratio = std::max(ratio, b[r] / b[r - 1]);
  ratio = std::min(ratio * 1.05 + 1e-12, 0.999999);
  const double tail_mass = b[n - 1] * ratio / (1 - ratio);
  // sum_{r>n} r b_r <= b_n * sum_{s>=1} (n+s) ratio^s
  const double tail_mean = b[n - 1] * (n * ratio / (1 - ratio) + ratio / ((1 - ratio) * (1 - ratio)));
  return {p, p + tail_mass, m, m + tail_mean};
}

// ---------------------------------------------------------------------------

}  // namespace

TEST_CASE("classical mass iteration matches explicit path enumeration") {
  RMat<D> p(3, 3);
  p << 0.2, 0.5, 0.1,
       0.3, 0.2, 0.6,
       0.5, 0.3, 0.3;
  auto b = classical_first_visit_masses(p, 0, 2, 12);
  for (int r = 1; r <= 12; ++r) {
    double dfs = classical_first_visit_dfs(p, 0, 2, r, 1.0);
    CHECK(std::abs(b[r - 1] - dfs) < 1e-13);
  }
}

TEST_CASE("hitting statistics agree with the classical oracle brackets") {
  RMat<D> p(3, 3);
  p << 0.2, 0.5, 0.1,
       0.3, 0.2, 0.6,
       0.5, 0.3, 0.3;
  auto w = embed_classical<D>(p);
  SiteSpace<D> sp(3, 1);
  M phi = block_superoperator<D>(w);
  M one = M::Identity(1, 1);
  for (int to = 0; to < 3; ++to)
    for (int from = 0; from < 3; ++from) {
      if (to == from) continue;
      auto stats = hit_statistics<D>(phi, sp, to, from, one);
      auto tb = classical_bracket(classical_first_visit_masses(p, to, from, 40));
      CHECK(stats.probability >= tb.prob_lo - 1e-10);
      CHECK(stats.probability <= tb.prob_hi + 1e-10);
      CHECK(stats.mean >= tb.mean_lo - 1e-6);
      CHECK(stats.mean <= tb.mean_hi + 1e-6);
    }
}

TEST_CASE("resolvent form equals truncated monitored power series") {
  auto w = two_site_coin();
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(w);
  for (double z : {0.5, 0.9}) {
    M qphi = z * (sp.complement(1) * phi);
    M series = M::Zero(8, 8);
    M pow = M::Identity(8, 8);
    for (int n = 0; n < 400; ++n) {
      series += pow;
      pow = (qphi * pow).eval();
    }
    M direct = (sp.projector(1) * phi * series * sp.projector(0)).block(4, 0, 4, 4);
    M gf = first_visit_gf<D>(phi, sp, 1, 0, C(z));
    CHECK((direct - gf).cwiseAbs().maxCoeff() < 1e-8);
  }
}

// Hand derivation: f21(z) = [B21](I - z[B11])^{-1}; only the last row is
// nonzero, (1, z-1, z-1, 1)/(2-z).  Sanity anchors: at z=0 this is the
// one-step block of B21, and the z=1 derivative reproduces the
// 2(1+Re rho12) mean return row checked below.
TEST_CASE("two-site coin walk first-visit function has the closed 1/(2-z) form") {
  auto w = two_site_coin();
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(w);
  for (double z : {0.0, 0.5, 0.99}) {
    M f = first_visit_gf<D>(phi, sp, 1, 0, C(z));
    M expect = M::Zero(4, 4);
    expect.row(3) << 1.0, z - 1.0, z - 1.0, 1.0;
    expect /= (2.0 - z);
    CHECK((f - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
  // z = 0 reduces the full function to the one-step block
  M onestep = (sp.projector(1) * phi * sp.projector(0)).block(4, 0, 4, 4);
  M f0 = first_visit_gf<D>(phi, sp, 1, 0, C(0));
  CHECK((f0 - onestep).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-site coin walk: certain visit, mean 2(1+Re rho12)") {
  auto w = two_site_coin();
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(w);
  for (int rep = 0; rep < 10; ++rep) {
    M rho = random_density(2);
    auto st = hit_statistics<D>(phi, sp, 1, 0, rho);
    CHECK(st.probability == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(st.mean == doctest::Approx(2.0 * (1.0 + rho(0, 1).real())).epsilon(1e-10));
    CHECK(st.mean_finite);
  }
}

TEST_CASE("two-site coin walk mean-return generating functions, closed forms") {
  auto w = two_site_coin();
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(w);
  for (double z : {0.5, 0.9}) {
    M g11 = mean_hitting_gf<D>(phi, sp, 0, 0, C(z));
    M e11(4, 4);
    const double a = 2 * z * z - 12 * z + 9, b = -z * (z - 6);
    e11 << 9, a, a, 9,
           b, -b, -b, b,
           b, -b, -b, b,
           b, -b, -b, b;
    e11 /= 2 * (z - 3) * (z - 3);
    CHECK((g11 - e11).cwiseAbs().maxCoeff() < 1e-10);

    M g22 = mean_hitting_gf<D>(phi, sp, 1, 1, C(z));
    const double d = (z - 2) * (z - 2);
    const double c2 = (-2 * z * z * z + 5 * z * z + 4 * z - 4) / d;
    const double c4 = (-4 * z * z * z + 13 * z * z - 4 * z + 4) / d;
    M e22(4, 4);
    e22 << 1, 0, 0, 0,
          -1, 1, 0, 0,
          -1, 0, 1, 0,
           4 / d, c2, c2, c4;
    e22 /= 3;
    CHECK((g22 - e22).cwiseAbs().maxCoeff() < 1e-10);
  }
  // limits: k11 exact; k22 follows the generating function (its displayed
  // (4,2),(4,3) entries evaluate to 1, not 1/3)
  M k11 = return_time_operator<D>(phi, sp, 0);
  M e11(4, 4);
  e11 << 9, -1, -1, 9, 5, -5, -5, 5, 5, -5, -5, 5, 5, -5, -5, 5;
  CHECK((k11 - e11 / 8).cwiseAbs().maxCoeff() < 1e-10);
  M k22 = return_time_operator<D>(phi, sp, 1);
  M e22(4, 4);
  e22 << 1, 0, 0, 0, -1, 1, 0, 0, -1, 0, 1, 0, 4, 3, 3, 9;
  CHECK((k22 - e22 / 3).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("two-site coin walk first-visit limits match the closed blocks") {
  auto w = two_site_coin();
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(w);
  auto ops = assemble_hitting_operators<D>(phi, sp);
  M h11(4, 4), h12(4, 4), h21(4, 4), h22(4, 4);
  h11 << 3, 1, 1, 3, 1, -1, -1, 1, 1, -1, -1, 1, 1, -1, -1, 1;
  h12 << 2, 1, 1, 2, 1, 1, -1, 2, 1, -1, 1, 2, 2, -1, -1, 2;
  h21 << 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1;
  h22 << 1, 0, 0, 0, -1, 1, 0, 0, -1, 0, 1, 0, 2, 0, 0, 3;
  CHECK((ops.h_block(0, 0) - h11 / 4).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.h_block(0, 1) - h12 / 4).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.h_block(1, 0) - h21).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.h_block(1, 1) - h22 / 3).cwiseAbs().maxCoeff() < 1e-10);

  // mean hitting 1 <- 2 on random densities
  for (int rep = 0; rep < 5; ++rep) {
    M rho = random_density(2);
    auto st = hit_statistics<D>(phi, sp, 0, 1, rho);
    const double expect =
        3.0 * (rho(0, 0).real() + 0.5 * rho(1, 1).real() - 0.5 * rho(0, 1).real());
    CHECK(st.mean == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("visit probability is monotone in z and bounded") {
  for (const auto& w : {two_site_coin(), three_cycle_unital()}) {
    SiteSpace<D> sp(w.sites, w.dim);
    M phi = block_superoperator<D>(w);
    M rho = random_density(w.dim);
    double prev = -1.0;
    for (double z = 0.1; z < 0.95; z += 0.2) {
      M f = first_visit_gf<D>(phi, sp, w.sites - 1, 0, C(z));
      double v = std::real(trace_vec<D>(V(f * vec<D>(rho))));
      CHECK(v >= prev - 1e-12);
      CHECK(v <= 1.0 + 1e-8);
      prev = v;
    }
  }
}

TEST_CASE("hitting operator grids stay within probability bounds") {
  for (const auto& w : {two_site_coin(), three_cycle_unital(),
                        random_primitive_model<D>(3, 2, 5)}) {
    SiteSpace<D> sp(w.sites, w.dim);
    auto ops = assemble_hitting_operators<D>(block_superoperator<D>(w), sp);
    for (int i = 0; i < w.sites; ++i)
      for (int j = 0; j < w.sites; ++j) {
        CHECK_FALSE(ops.entry_diverged(i, j));
        for (int rep = 0; rep < 3; ++rep) {
          M rho = random_density(w.dim);
          double h = std::real(trace_vec<D>(V(ops.h_block(i, j) * vec<D>(rho))));
          double k = std::real(trace_vec<D>(V(ops.k_block(i, j) * vec<D>(rho))));
          CHECK(h >= -1e-10);
          CHECK(h <= 1.0 + 1e-8);
          CHECK(k >= -1e-10);
        }
      }
  }
}

TEST_CASE("identity walk never moves: zero probability, infinite mean") {
  WalkModel<D> id(2, 2);
  id.block(0, 0) = M::Identity(2, 2);
  id.block(1, 1) = M::Identity(2, 2);
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(id);
  auto st = hit_statistics<D>(phi, sp, 1, 0, random_density(2));
  CHECK(st.probability == doctest::Approx(0.0));
  CHECK_FALSE(st.mean_finite);
  CHECK(std::isinf(st.mean));
  CHECK(st.abel);  // spectral radius of the monitored map is 1
}

TEST_CASE("absorbing chain: unreachable site flagged, reachable one summed") {
  RMat<D> p(2, 2);
  p << 1.0, 0.3, 0.0, 0.7;  // site 1 absorbing, site 2 leaks into it
  auto w = embed_classical<D>(p);
  SiteSpace<D> sp(2, 1);
  M phi = block_superoperator<D>(w);
  M one = M::Identity(1, 1);
  auto to2 = hit_statistics<D>(phi, sp, 1, 0, one);
  CHECK(to2.probability == doctest::Approx(0.0));
  CHECK_FALSE(to2.mean_finite);
  auto to1 = hit_statistics<D>(phi, sp, 0, 1, one);
  CHECK(to1.probability == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(to1.mean == doctest::Approx(10.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("classical 2-state flip chain returns in exactly two steps") {
  auto w = embed_classical<D>(two_state_flip());
  SiteSpace<D> sp(2, 1);
  M phi = block_superoperator<D>(w);
  M one = M::Identity(1, 1);
  CHECK(hitting_probability<D>(phi, sp, 1, 0, one) == doctest::Approx(1.0));
  M k11 = return_time_operator<D>(phi, sp, 0);
  CHECK(std::abs(k11(0, 0) - C(2.0)) < 1e-9);
}

TEST_CASE("first-step conditioning identity") {
  auto w = two_site_coin();
  SiteSpace<D> sp(2, 2);
  M phi = block_superoperator<D>(w);
  M e11 = M::Zero(2, 2);
  e11(0, 0) = 1;
  auto r = conditioning_check<D>(w, phi, sp, 1, 0, e11);
  CHECK_FALSE(r.skipped);
  CHECK(r.residual < 1e-8);
  for (int rep = 0; rep < 3; ++rep) {
    auto rr = conditioning_check<D>(w, phi, sp, 0, 1, random_density(2));
    CHECK_FALSE(rr.skipped);
    CHECK(rr.residual < 1e-8);
  }

  // classical 4-state jump chain of the rate matrix
  RMat<D> q = four_state_rates();
  RMat<D> jump = RMat<D>::Zero(4, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i)
      if (i != j) jump(i, j) = q(i, j) / -q(j, j);
  auto wc = embed_classical<D>(jump);
  SiteSpace<D> spc(4, 1);
  M phic = block_superoperator<D>(wc);
  M one = M::Identity(1, 1);
  for (int j = 1; j < 4; ++j) {
    auto rc = conditioning_check<D>(wc, phic, spc, 0, j, one);
    CHECK_FALSE(rc.skipped);
    CHECK(rc.residual < 1e-10);
  }

  // identity walk: both sides infinite, skipped
  WalkModel<D> id(2, 2);
  id.block(0, 0) = M::Identity(2, 2);
  id.block(1, 1) = M::Identity(2, 2);
  auto ri = conditioning_check<D>(id, block_superoperator<D>(id), sp, 1, 0, e11);
  CHECK(ri.skipped);
}

TEST_CASE("three-site unital walk: displayed first-visit blocks") {
  auto w = three_cycle_unital();
  SiteSpace<D> sp(3, 2);
  M phi = block_superoperator<D>(w);
  auto ops = assemble_hitting_operators<D>(phi, sp);
  M h11(4, 4), h12(4, 4), h21(4, 4);
  h11 << 1.0 / 2, 1.0 / 8, 1.0 / 8, 1.0 / 2,
        -1.0 / 8, 29.0 / 112, -27.0 / 112, 1.0 / 8,
        -1.0 / 8, -27.0 / 112, 29.0 / 112, 1.0 / 8,
         1.0 / 2, -1.0 / 8, -1.0 / 8, 1.0 / 2;
  h12 << 1.0 / 2, 1.0 / 4, 1.0 / 4, 1.0 / 2,
        -11.0 / 28, 23.0 / 56, -5.0 / 56, 5.0 / 28,
        -11.0 / 28, -5.0 / 56, 23.0 / 56, 5.0 / 28,
         1.0 / 2, -1.0 / 4, -1.0 / 4, 1.0 / 2;
  h21 << 1.0 / 2, 1.0 / 4, 1.0 / 4, 1.0 / 2,
        -5.0 / 28, 23.0 / 56, -5.0 / 56, 11.0 / 28,
        -5.0 / 28, -5.0 / 56, 23.0 / 56, 11.0 / 28,
         1.0 / 2, -1.0 / 4, -1.0 / 4, 1.0 / 2;
  CHECK((ops.h_block(0, 0) - h11).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.h_block(1, 1) - h11).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.h_block(0, 1) - h12).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((ops.h_block(1, 0) - h21).cwiseAbs().maxCoeff() < 1e-10);
}
