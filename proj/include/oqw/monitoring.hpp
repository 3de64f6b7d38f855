#ifndef OQWALK_MONITORING_HPP
#define OQWALK_MONITORING_HPP

// Site monitoring: first-visit and mean-hitting generating functions built
// from resolvents of the projected one-step map, their z -> 1 limits, and
// the hitting/return operator grids.

#include <oqw/walk.hpp>

#include <limits>
#include <optional>

namespace oqwalk {

// Block (target, from) of  P_target * Phi * (I - z * Q_monitor * Phi)^{-1} * P_from.
// For the first-visit function F_ij use target = monitor = i, from = j.
// For the stationary-reconstruction function (hitting j while avoiding x)
// use monitor = from = x and target = j.
template <class S>
Mat<S> visit_block(const Mat<S>& phi, const SiteSpace<S>& sp, int target, int monitor,
                   int from, Cx<S> z, int power = 1) {
  const auto m = sp.block_size();
  Mat<S> a = Mat<S>::Identity(sp.total_size(), sp.total_size()) -
             z * (sp.complement(monitor) * phi);
  Eigen::FullPivLU<Mat<S>> lu(a);
  if (!lu.isInvertible()) throw std::runtime_error("visit_block: singular resolvent");
  Mat<S> rhs = Mat<S>::Zero(sp.total_size(), m);
  rhs.block(from * m, 0, m, m).setIdentity();
  Mat<S> x = lu.solve(rhs);
  if (power == 2) x = lu.solve(x);
  return (phi * x).block(target * m, 0, m, m);
}

template <class S>
Mat<S> first_visit_gf(const Mat<S>& phi, const SiteSpace<S>& sp, int i, int j, Cx<S> z) {
  return visit_block<S>(phi, sp, i, i, j, z, 1);
}

template <class S>
Mat<S> mean_hitting_gf(const Mat<S>& phi, const SiteSpace<S>& sp, int i, int j, Cx<S> z) {
  return visit_block<S>(phi, sp, i, i, j, z, 2);
}

// z -> 1 limit of a matrix-valued function of z, by Abel summation along
// z_m = 1 - 2^{-m} with one Richardson step.  Used when the resolvent is
// singular (or nearly so) at z = 1.
template <class S>
struct AbelLimit {
  Mat<S> value;
  bool converged = false;
  bool diverged = false;
};

template <class S>
AbelLimit<S> abel_limit(const std::function<Mat<S>(S)>& f, S reltol = S(1e-9)) {
  AbelLimit<S> out;
  Mat<S> prev_r;
  Mat<S> v_prev = f(S(1) - std::pow(S(2), S(-10)));
  for (int m = 10; m < 30; ++m) {
    Mat<S> v_next = f(S(1) - std::pow(S(2), -S(m + 1)));
    if (v_next.cwiseAbs().maxCoeff() > S(1e8)) {
      out.diverged = true;
      out.value = v_next;
      return out;
    }
    Mat<S> r = S(2) * v_next - v_prev;  // cancels the O(1-z) term
    if (prev_r.size() > 0) {
      const S scale = std::max<S>(S(1), r.cwiseAbs().maxCoeff());
      if ((r - prev_r).cwiseAbs().maxCoeff() <= reltol * scale) {
        out.value = r;
        out.converged = true;
        return out;
      }
    }
    prev_r = r;
    v_prev = v_next;
  }
  out.value = prev_r;
  return out;
}

// The z -> 1 limit of a visit block; direct evaluation when Q_monitor * Phi
// has spectral radius safely below 1, Abel extrapolation otherwise.
template <class S>
struct LimitBlock {
  Mat<S> value;
  bool abel = false;
  bool diverged = false;
};

template <class S>
LimitBlock<S> visit_block_limit(const Mat<S>& phi, const SiteSpace<S>& sp, int target,
                                int monitor, int from, int power) {
  LimitBlock<S> out;
  const S sr = spectral_radius<S>((sp.complement(monitor) * phi).eval());
  if (sr < S(1) - S(1e-8)) {
    out.value = visit_block<S>(phi, sp, target, monitor, from, Cx<S>(1), power);
    return out;
  }
  auto f = [&](S z) { return visit_block<S>(phi, sp, target, monitor, from, Cx<S>(z), power); };
  auto lim = abel_limit<S>(f);
  out.value = lim.value;
  out.abel = true;
  out.diverged = lim.diverged || !lim.converged;
  return out;
}

template <class S>
LimitBlock<S> first_visit_limit(const Mat<S>& phi, const SiteSpace<S>& sp, int i, int j) {
  return visit_block_limit<S>(phi, sp, i, i, j, 1);
}

template <class S>
LimitBlock<S> mean_hitting_limit(const Mat<S>& phi, const SiteSpace<S>& sp, int i, int j) {
  return visit_block_limit<S>(phi, sp, i, i, j, 2);
}

// Scalar hitting statistics for a density rho placed at site `from`.
// probability: h_ij(rho), with h_jj := 1 by convention.
// mean: k_ij(rho) for i != j (+inf flagged when the visit is uncertain or
// the series diverges); the i == j entry reports the mean return time.
template <class S>
struct HitStatistics {
  S probability = S(0);
  S mean = S(0);
  bool mean_finite = true;
  bool abel = false;
};

template <class S>
HitStatistics<S> hit_statistics(const Mat<S>& phi, const SiteSpace<S>& sp, int to,
                                int from, const Mat<S>& rho) {
  HitStatistics<S> st;
  const Vec<S> r = vec<S>(rho);
  auto fv = first_visit_limit<S>(phi, sp, to, from);
  const S p = std::real(trace_vec<S>((fv.value * r).eval()));
  st.probability = (to == from) ? S(1) : p;
  st.abel = fv.abel;
  if (p < S(1) - S(1e-8)) {
    st.mean_finite = false;
    st.mean = std::numeric_limits<S>::infinity();
    return st;
  }
  auto mh = mean_hitting_limit<S>(phi, sp, to, from);
  st.abel = st.abel || mh.abel;
  if (mh.diverged) {
    st.mean_finite = false;
    st.mean = std::numeric_limits<S>::infinity();
    return st;
  }
  st.mean = std::real(trace_vec<S>((mh.value * r).eval()));
  return st;
}

template <class S>
S hitting_probability(const Mat<S>& phi, const SiteSpace<S>& sp, int i, int j,
                      const Mat<S>& rho) {
  if (i == j) return S(1);
  auto fv = first_visit_limit<S>(phi, sp, i, j);
  return std::real(trace_vec<S>((fv.value * vec<S>(rho)).eval()));
}

template <class S>
Mat<S> return_time_operator(const Mat<S>& phi, const SiteSpace<S>& sp, int i) {
  return mean_hitting_limit<S>(phi, sp, i, i).value;
}

// Full grids of first-visit and mean-hitting blocks with per-entry flags.
template <class S>
struct HittingOperators {
  int sites = 0;
  std::vector<Mat<S>> h;  // h[i * sites + j] = lim F_ij
  std::vector<Mat<S>> k;  // k[i * sites + j] = lim G_ij
  std::vector<char> diverged;
  const Mat<S>& h_block(int i, int j) const { return h[size_t(i) * sites + j]; }
  const Mat<S>& k_block(int i, int j) const { return k[size_t(i) * sites + j]; }
  bool entry_diverged(int i, int j) const { return diverged[size_t(i) * sites + j] != 0; }

  // Grid matrix of K-hat, D-hat (diagonal of return blocks) and N = K - D.
  Mat<S> k_matrix(const SiteSpace<S>& sp) const {
    const auto m = sp.block_size();
    Mat<S> out = Mat<S>::Zero(sp.total_size(), sp.total_size());
    for (int i = 0; i < sites; ++i)
      for (int j = 0; j < sites; ++j) out.block(i * m, j * m, m, m) = k_block(i, j);
    return out;
  }
  Mat<S> d_matrix(const SiteSpace<S>& sp) const {
    const auto m = sp.block_size();
    Mat<S> out = Mat<S>::Zero(sp.total_size(), sp.total_size());
    for (int i = 0; i < sites; ++i) out.block(i * m, i * m, m, m) = k_block(i, i);
    return out;
  }
  Mat<S> h_matrix(const SiteSpace<S>& sp) const {
    const auto m = sp.block_size();
    Mat<S> out = Mat<S>::Zero(sp.total_size(), sp.total_size());
    for (int i = 0; i < sites; ++i)
      for (int j = 0; j < sites; ++j) out.block(i * m, j * m, m, m) = h_block(i, j);
    return out;
  }
};

template <class S>
HittingOperators<S> assemble_hitting_operators(const Mat<S>& phi, const SiteSpace<S>& sp) {
  HittingOperators<S> ops;
  ops.sites = sp.sites();
  ops.h.resize(size_t(ops.sites) * ops.sites);
  ops.k.resize(ops.h.size());
  ops.diverged.assign(ops.h.size(), 0);
  for (int i = 0; i < ops.sites; ++i)
    for (int j = 0; j < ops.sites; ++j) {
      auto fv = first_visit_limit<S>(phi, sp, i, j);
      auto mh = mean_hitting_limit<S>(phi, sp, i, j);
      ops.h[size_t(i) * ops.sites + j] = fv.value;
      ops.k[size_t(i) * ops.sites + j] = mh.value;
      ops.diverged[size_t(i) * ops.sites + j] = (fv.diverged || mh.diverged) ? 1 : 0;
    }
  return ops;
}

// First-step conditioning residual:
//   k_ij(rho) = 1 + sum_{l != i} Tr(B_lj rho B_lj*) k_il(rho_l')
// with rho_l' the normalized one-step branch state.  Branches below the
// probability floor are skipped.
template <class S>
struct ConditioningCheck {
  S residual = S(0);
  bool skipped = false;  // some needed mean was infinite
};

template <class S>
ConditioningCheck<S> conditioning_check(const WalkModel<S>& w, const Mat<S>& phi,
                                        const SiteSpace<S>& sp, int i, int j,
                                        const Mat<S>& rho, S prob_floor = S(1e-14)) {
  ConditioningCheck<S> out;
  auto lhs_stats = hit_statistics<S>(phi, sp, i, j, rho);
  if (!lhs_stats.mean_finite) {
    out.skipped = true;
    return out;
  }
  S rhs = S(1);
  for (int l = 0; l < w.sites; ++l) {
    if (l == i) continue;
    Mat<S> branch = w.block(l, j) * rho * w.block(l, j).adjoint();
    const S p = std::real(branch.trace());
    if (p < prob_floor) continue;
    auto stats = hit_statistics<S>(phi, sp, i, l, (branch / p).eval());
    if (!stats.mean_finite) {
      out.skipped = true;
      return out;
    }
    rhs += p * stats.mean;
  }
  out.residual = std::abs(lhs_stats.mean - rhs);
  return out;
}

}  // namespace oqwalk

#endif
