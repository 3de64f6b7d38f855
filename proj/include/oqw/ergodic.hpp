#ifndef OQWALK_ERGODIC_HPP
#define OQWALK_ERGODIC_HPP

// Long-run structure of the one-step map: stationary states, the rank-one
// limit map, the fundamental matrix, both mean-hitting-time identities, the
// return-time/trace reciprocity, stationary reconstruction from first
// returns, and recurrence diagnostics.

#include <oqw/monitoring.hpp>

namespace oqwalk {

template <class S>
struct StationaryState {
  SiteState<S> density;   // per-site blocks, total trace 1
  S residual = S(0);      // max |Phi v - v| entry for the normalized state
  bool unique = false;    // unit eigenvalue has a one-dimensional eigenspace
  bool faithful = false;  // every site block strictly positive definite
};

namespace detail {

// Rotate the global phase so the trace is real positive, then take the
// Hermitian part.  Eigenvectors come with an arbitrary phase.
template <class S>
Mat<S> phase_fix_hermitize(const Mat<S>& x) {
  const Cx<S> t = x.trace();
  if (std::abs(t) > S(0)) return hermitize<S>((x * (std::conj(t) / std::abs(t))).eval());
  return hermitize<S>(x);
}

template <class S>
StationaryState<S> normalize_to_state(const Mat<S>& phi, const SiteSpace<S>& sp,
                                      SiteState<S> blocks, bool unique) {
  StationaryState<S> out;
  out.unique = unique;
  Vec<S> v = sp.stack(blocks);
  const Cx<S> t = sp.total_trace(v);
  if (std::abs(t) < S(1e-12))
    throw std::runtime_error("stationary_state: fixed point has zero trace");
  v /= t;
  out.density = sp.unstack(v);
  out.faithful = true;
  for (auto& b : out.density) {
    b = hermitize<S>(b);
    auto psd = check_psd<S>(b);
    if (!psd.psd) throw std::runtime_error("stationary_state: fixed point not positive");
    const S tr = std::real(b.trace());
    Eigen::SelfAdjointEigenSolver<Mat<S>> es(b);
    if (es.eigenvalues().minCoeff() <= S(1e-10) * tr) out.faithful = false;
  }
  v = sp.stack(out.density);
  out.residual = (phi * v - v).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace detail

template <class S>
StationaryState<S> stationary_state(const Mat<S>& phi, const SiteSpace<S>& sp) {
  Eigen::ComplexEigenSolver<Mat<S>> es(phi);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("stationary_state: eigensolver failed");
  Eigen::Index best = 0;
  int multiplicity = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const S d = std::abs(es.eigenvalues()(i) - Cx<S>(1));
    if (d < std::abs(es.eigenvalues()(best) - Cx<S>(1))) best = i;
    if (d < S(1e-8)) ++multiplicity;
  }
  if (std::abs(es.eigenvalues()(best) - Cx<S>(1)) > S(1e-6))
    throw std::runtime_error("stationary_state: no unit eigenvalue");
  Vec<S> v = es.eigenvectors().col(best);
  SiteState<S> blocks = sp.unstack(v);
  for (auto& b : blocks) b = detail::phase_fix_hermitize<S>(b);
  return detail::normalize_to_state<S>(phi, sp, std::move(blocks), multiplicity == 1);
}

// Rank-one-per-block limit of the iterated map: every block column equals
// the stacked stationary state times the trace functional.  Requires a
// mixing map (unit spectral radius, simple peripheral eigenvalue, gap).
template <class S>
struct LimitChannel {
  Mat<S> omega;
  S gap = S(0);
  StationaryState<S> stationary;
};

template <class S>
LimitChannel<S> limit_channel(const Mat<S>& phi, const SiteSpace<S>& sp) {
  auto mix = check_mixing<S>(phi);
  if (!mix.mixing)
    throw std::runtime_error("limit_channel: map is not mixing (peripheral count " +
                             std::to_string(mix.peripheral_count) + ", gap " +
                             std::to_string(static_cast<double>(mix.gap)) + ")");
  LimitChannel<S> out;
  out.gap = mix.gap;
  out.stationary = stationary_state<S>(phi, sp);
  out.omega = sp.stack(out.stationary.density) * sp.trace_covector().transpose();
  return out;
}

template <class S>
struct FundamentalMatrix {
  Mat<S> zmat;   // (I - Phi + Omega)^{-1}
  Mat<S> omega;
  S gap = S(0);
};

template <class S>
FundamentalMatrix<S> fundamental_matrix(const Mat<S>& phi, const SiteSpace<S>& sp) {
  auto lim = limit_channel<S>(phi, sp);
  FundamentalMatrix<S> out;
  out.omega = std::move(lim.omega);
  out.gap = lim.gap;
  const Mat<S> a =
      Mat<S>::Identity(phi.rows(), phi.cols()) - phi + out.omega;
  Eigen::FullPivLU<Mat<S>> lu(a);
  if (!lu.isInvertible())
    throw std::runtime_error("fundamental_matrix: I - Phi + Omega is singular");
  out.zmat = lu.inverse();
  return out;
}

// Everything the hitting-time identities need, computed once per model:
// stationary state, limit map, fundamental matrix, the hitting/return
// operator grid, and the diagonal-return-weighted fundamental matrix.
template <class S>
struct ErgodicData {
  SiteSpace<S> sp{1, 1};
  Mat<S> phi;
  StationaryState<S> stationary;
  Mat<S> omega;
  Mat<S> zmat;
  S gap = S(0);
  HittingOperators<S> hitting;
  Mat<S> dz;  // block-diagonal return grid times the fundamental matrix

  Mat<S> dz_block(int i, int j) const { return sp.block_of(dz, i, j); }

  // The mean of the first visit to i from j is finite only when the visit
  // is sure; probe the first-visit block on a spanning density family.
  bool sure_visit(int i, int j) const {
    if (hitting.entry_diverged(i, j)) return false;
    for (const auto& rho : density_basis<S>(sp.dim())) {
      const S p = std::real(trace_vec<S>((hitting.h_block(i, j) * vec<S>(rho)).eval()));
      if (p < S(1) - S(1e-6)) return false;
    }
    return true;
  }
};

template <class S>
ErgodicData<S> ergodic_data(const Mat<S>& phi, const SiteSpace<S>& sp) {
  ErgodicData<S> d;
  d.sp = sp;
  d.phi = phi;
  auto fm = fundamental_matrix<S>(phi, sp);
  d.omega = std::move(fm.omega);
  d.zmat = std::move(fm.zmat);
  d.gap = fm.gap;
  d.stationary = stationary_state<S>(phi, sp);
  d.hitting = assemble_hitting_operators<S>(phi, sp);
  d.dz = d.hitting.d_matrix(sp) * d.zmat;
  return d;
}

template <class S>
struct IdentityCheck {
  S lhs = S(0);
  S rhs = S(0);
  S residual = S(0);
  bool finite = true;
};

// First identity: the mean time to hit site i from j under rho equals the
// difference of diagonal-weighted fundamental blocks,
//   Tr(N_ij rho) = Tr([(DZ)_ii - (DZ)_ij] rho),  N = K - D (zero diagonal).
template <class S>
IdentityCheck<S> mhtf1_verify(const ErgodicData<S>& d, const Mat<S>& rho, int i, int j) {
  IdentityCheck<S> out;
  if (!d.sure_visit(i, j) || !d.sure_visit(i, i)) {
    out.finite = false;
    return out;
  }
  const Vec<S> r = vec<S>(rho);
  out.lhs = (i == j) ? S(0) : std::real(trace_vec<S>((d.hitting.k_block(i, j) * r).eval()));
  const Mat<S> diff = d.dz_block(i, i) - d.dz_block(i, j);
  out.rhs = std::real(trace_vec<S>((diff * r).eval()));
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

// Second identity: the stationary-average hitting time of site j, return
// term included, equals the diagonal-weighted fundamental block applied to
// the first-visit average of the stationary state,
//   sum_i Tr(k_ji pi_i) = Tr((DZ)_jj sum_i h_ji pi_i).
template <class S>
IdentityCheck<S> mhtf2_verify(const ErgodicData<S>& d, int j) {
  IdentityCheck<S> out;
  const auto m = d.sp.block_size();
  Vec<S> favg = Vec<S>::Zero(m);
  for (int i = 0; i < d.sp.sites(); ++i) {
    if (!d.sure_visit(j, i)) {
      out.finite = false;
      return out;
    }
    const Vec<S> pv = vec<S>(d.stationary.density[size_t(i)]);
    out.lhs += std::real(trace_vec<S>((d.hitting.k_block(j, i) * pv).eval()));
    favg += d.hitting.h_block(j, i) * pv;
  }
  out.rhs = std::real(trace_vec<S>((d.dz_block(j, j) * favg).eval()));
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

// Return-time/trace reciprocity: the mean return time to site x, starting
// from the normalized stationary block there, is the reciprocal of that
// block's trace.
template <class S>
struct ReturnTimeCheck {
  S expected_return = S(0);
  S inverse_trace = S(0);
  S residual = S(0);
  bool finite = true;
};

template <class S>
ReturnTimeCheck<S> kac_verify(const Mat<S>& phi, const SiteSpace<S>& sp, int x) {
  ReturnTimeCheck<S> out;
  auto st = stationary_state<S>(phi, sp);
  auto fv = first_visit_limit<S>(phi, sp, x, x);
  auto mh = mean_hitting_limit<S>(phi, sp, x, x);
  if (fv.diverged || mh.diverged) {
    out.finite = false;
    return out;
  }
  for (const auto& rho : density_basis<S>(sp.dim())) {
    const S p = std::real(trace_vec<S>((fv.value * vec<S>(rho)).eval()));
    if (p < S(1) - S(1e-6)) {
      out.finite = false;
      return out;
    }
  }
  const Mat<S>& px = st.density[size_t(x)];
  const S tr = std::real(px.trace());
  if (tr <= S(0)) throw std::runtime_error("kac_verify: stationary block has zero trace");
  out.expected_return =
      std::real(trace_vec<S>((mh.value * vec<S>((px / tr).eval())).eval()));
  out.inverse_trace = S(1) / tr;
  out.residual = std::abs(out.expected_return - out.inverse_trace);
  return out;
}

// Stationary state rebuilt from first returns to a chosen site x: the
// unnormalized block at x is the fixed point of the return map at z = 1,
// the block at j is the first-visit map j <- x applied to it, and the
// whole family is normalized to unit trace.
template <class S>
struct ReturnReconstruction {
  Mat<S> fixed_point;  // Hermitian fixed point of the return map, unnormalized
  StationaryState<S> state;
};

template <class S>
ReturnReconstruction<S> stationary_via_first_return(const Mat<S>& phi, const SiteSpace<S>& sp,
                                                    int x) {
  auto ret = visit_block_limit<S>(phi, sp, x, x, x, 1);
  if (ret.diverged)
    throw std::runtime_error("stationary_via_first_return: return map diverged");
  Eigen::ComplexEigenSolver<Mat<S>> es(ret.value);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("stationary_via_first_return: eigensolver failed");
  Eigen::Index best = 0;
  int multiplicity = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const S dist = std::abs(es.eigenvalues()(i) - Cx<S>(1));
    if (dist < std::abs(es.eigenvalues()(best) - Cx<S>(1))) best = i;
    if (dist < S(1e-8)) ++multiplicity;
  }
  if (std::abs(es.eigenvalues()(best) - Cx<S>(1)) > S(1e-6))
    throw std::runtime_error("stationary_via_first_return: return map has no fixed point");
  if (multiplicity != 1)
    throw std::runtime_error("stationary_via_first_return: fixed point not unique");

  ReturnReconstruction<S> out;
  out.fixed_point =
      detail::phase_fix_hermitize<S>(unvec_square<S>(Vec<S>(es.eigenvectors().col(best))));
  auto psd = check_psd<S>(out.fixed_point);
  if (!psd.psd)
    throw std::runtime_error("stationary_via_first_return: fixed point not positive");

  SiteState<S> blocks(size_t(sp.sites()));
  const Vec<S> fp = vec<S>(out.fixed_point);
  for (int j = 0; j < sp.sites(); ++j) {
    if (j == x) {
      blocks[size_t(j)] = out.fixed_point;
      continue;
    }
    auto vb = visit_block_limit<S>(phi, sp, j, x, x, 1);
    if (vb.diverged)
      throw std::runtime_error("stationary_via_first_return: visit map diverged");
    blocks[size_t(j)] = hermitize<S>(unvec_square<S>(Vec<S>(vb.value * fp)));
  }
  out.state = detail::normalize_to_state<S>(phi, sp, std::move(blocks), true);
  return out;
}

// Irreducibility in the state sense: unique fixed point whose site blocks
// are all strictly positive definite.  The site digraph of nonzero
// one-step blocks is reported alongside for structural diagnostics.
template <class S>
struct IrreducibilityReport {
  bool irreducible = false;
  bool unique = false;
  bool faithful = false;
  Eigen::MatrixXi adjacency;  // adjacency(i, j) = 1 when the block j -> i is nonzero
};

template <class S>
IrreducibilityReport<S> irreducibility_check(const Mat<S>& phi, const SiteSpace<S>& sp) {
  IrreducibilityReport<S> out;
  try {
    auto st = stationary_state<S>(phi, sp);
    out.unique = st.unique;
    out.faithful = st.faithful;
  } catch (const std::exception&) {
    // no usable fixed point: reducible with both flags down
  }
  out.irreducible = out.unique && out.faithful;
  out.adjacency = Eigen::MatrixXi::Zero(sp.sites(), sp.sites());
  for (int i = 0; i < sp.sites(); ++i)
    for (int j = 0; j < sp.sites(); ++j)
      out.adjacency(i, j) = sp.block_of(phi, i, j).cwiseAbs().maxCoeff() > S(1e-14) ? 1 : 0;
  return out;
}

// Per-site recurrence diagnostics.  Monitored recurrence asks for return
// probability 1 on a spanning family of densities; the unmonitored
// occupation sums grow linearly with slope Tr(pi_i) for mixing maps.
template <class S>
struct SiteRecurrence {
  bool monitored_recurrent = false;
  S min_return_probability = S(0);  // over the density basis
  S partial_sum = S(0);             // occupation sum at the horizon, mixed state
  S slope_estimate = S(0);          // growth rate over the second half
  S stationary_mass = S(0);         // Tr(pi_i) when a unique stationary state exists
};

template <class S>
struct RecurrenceReport {
  std::vector<SiteRecurrence<S>> site;
  bool all_monitored_recurrent = false;
};

template <class S>
RecurrenceReport<S> recurrence_report(const Mat<S>& phi, const SiteSpace<S>& sp,
                                      int horizon = 400) {
  RecurrenceReport<S> out;
  out.site.resize(size_t(sp.sites()));
  std::vector<S> masses(size_t(sp.sites()), S(0));
  try {
    auto st = stationary_state<S>(phi, sp);
    if (st.unique)
      for (int i = 0; i < sp.sites(); ++i)
        masses[size_t(i)] = std::real(st.density[size_t(i)].trace());
  } catch (const std::exception&) {
  }
  const auto basis = density_basis<S>(sp.dim());
  out.all_monitored_recurrent = true;
  for (int i = 0; i < sp.sites(); ++i) {
    auto& rec = out.site[size_t(i)];
    rec.stationary_mass = masses[size_t(i)];

    auto ret = visit_block_limit<S>(phi, sp, i, i, i, 1);
    rec.min_return_probability = S(1);
    for (const auto& rho : basis) {
      const S p = std::real(trace_vec<S>((ret.value * vec<S>(rho)).eval()));
      rec.min_return_probability = std::min(rec.min_return_probability, p);
    }
    rec.monitored_recurrent = !ret.diverged && rec.min_return_probability >= S(1) - S(1e-6);
    if (!rec.monitored_recurrent) out.all_monitored_recurrent = false;

    SiteState<S> start(size_t(sp.sites()), Mat<S>::Zero(sp.dim(), sp.dim()));
    start[size_t(i)] = Mat<S>::Identity(sp.dim(), sp.dim()) / S(sp.dim());
    Vec<S> v = sp.stack(start);
    S half_sum = S(0);
    for (int n = 1; n <= horizon; ++n) {
      v = phi * v;
      rec.partial_sum += sp.site_probability(v, i);
      if (n == horizon / 2) half_sum = rec.partial_sum;
    }
    rec.slope_estimate = (rec.partial_sum - half_sum) / S(horizon - horizon / 2);
  }
  return out;
}

}  // namespace oqwalk

#endif
