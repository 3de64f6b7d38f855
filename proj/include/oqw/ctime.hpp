#ifndef OQW_CTIME_HPP
#define OQW_CTIME_HPP

// Continuous-time dynamics: generator construction (from a walk, a classical
// rate matrix, a simple graph, or a raw superoperator), semigroup evaluation,
// local jump rates and holding times, Poisson-monitored hitting statistics,
// large-rate hitting limits, the continuous-time fundamental matrix, vertex
// Kac identities, and delta-skeleton recurrence diagnostics.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "linalg.hpp"
#include "monitoring.hpp"
#include "walk.hpp"

namespace oqwalk {

// Thrown when the spectral preconditions of the Poisson-monitored hitting
// formulas fail; the CLI maps this to its own exit code.
class hypothesis_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GeneratorKind { phi_minus_identity, graph_induced, classical_q, raw };

// A generator together with the geometry of the space it acts on.  Walk-built
// and raw generators act on stacked site blocks (k sites of internal dimension
// n); classical rate matrices act on n sites of dimension 1; graph-induced
// generators act on a single order-n density whose diagonal entries are the
// vertex occupations.
template <class S>
class GeneratorModel {
 public:
  GeneratorModel(GeneratorKind kind, SiteSpace<S> sp, int vertices, Mat<S> lhat)
      : kind_(kind),
        sp_(sp),
        vertices_(vertices),
        lhat_(std::move(lhat)),
        prop_(std::make_shared<Propagator<S>>(lhat_)) {}

  GeneratorKind kind() const { return kind_; }
  const SiteSpace<S>& space() const { return sp_; }
  int vertices() const { return vertices_; }
  const Mat<S>& lhat() const { return lhat_; }
  const Propagator<S>& propagator() const { return *prop_; }

  // True when positions are diagonal entries of one density rather than blocks.
  bool vertex_diagonal() const {
    return kind_ == GeneratorKind::graph_induced || kind_ == GeneratorKind::classical_q;
  }

  Eigen::Index vertex_coord(int v) const {
    return kind_ == GeneratorKind::graph_induced
               ? Eigen::Index(v) * sp_.dim() + v
               : Eigen::Index(v) * sp_.block_size();
  }

  Mat<S> vertex_projector(int f) const {
    if (!vertex_diagonal()) return sp_.projector(f);
    Mat<S> p = Mat<S>::Zero(sp_.total_size(), sp_.total_size());
    p(vertex_coord(f), vertex_coord(f)) = Cx<S>(1);
    return p;
  }

  // The complement used while a vertex is avoided.  For vertex-diagonal models
  // this keeps only the other vertices' diagonal coordinates (positions are
  // re-read at every monitoring event); for block models it is the complement
  // block projector, and the two notions coincide there.
  Mat<S> avoid_projector(int f) const {
    if (!vertex_diagonal()) return sp_.complement(f);
    Mat<S> q = Mat<S>::Zero(sp_.total_size(), sp_.total_size());
    for (int i = 0; i < vertices_; ++i)
      if (i != f) q(vertex_coord(i), vertex_coord(i)) = Cx<S>(1);
    return q;
  }

  // Vertex-diagonal models carry no internal state: the start is E_vv.
  Vec<S> start_vector(int v) const {
    Vec<S> x = Vec<S>::Zero(sp_.total_size());
    if (vertex_diagonal()) {
      x[vertex_coord(v)] = Cx<S>(1);
    } else {
      Mat<S> rho = Mat<S>::Identity(sp_.dim(), sp_.dim()) / S(sp_.dim());
      x.segment(v * sp_.block_size(), sp_.block_size()) = vec<S>(rho);
    }
    return x;
  }

  Vec<S> start_vector(int v, const Mat<S>& rho) const {
    if (vertex_diagonal()) return start_vector(v);
    Vec<S> x = Vec<S>::Zero(sp_.total_size());
    x.segment(v * sp_.block_size(), sp_.block_size()) = vec<S>(rho);
    return x;
  }

  S vertex_mass(const Vec<S>& x, int v) const {
    if (vertex_diagonal()) return std::real(x[vertex_coord(v)]);
    return sp_.site_probability(x, v);
  }

  S total_mass(const Vec<S>& x) const {
    S sum = 0;
    for (int v = 0; v < vertices_; ++v) sum += vertex_mass(x, v);
    return sum;
  }

 private:
  GeneratorKind kind_;
  SiteSpace<S> sp_;
  int vertices_;
  Mat<S> lhat_;
  std::shared_ptr<const Propagator<S>> prop_;
};

template <class S>
GeneratorModel<S> generator_from_walk(const WalkModel<S>& w) {
  auto report = validate<S>(w);
  if (!report.trace_preserving)
    throw std::invalid_argument("generator_from_walk: walk is not trace preserving");
  const Mat<S> phi = block_superoperator<S>(w);
  const SiteSpace<S> sp(w.sites, w.dim);
  Mat<S> lhat = phi - Mat<S>::Identity(phi.rows(), phi.cols());
  return GeneratorModel<S>(GeneratorKind::phi_minus_identity, sp, w.sites,
                           std::move(lhat));
}

template <class S>
GeneratorModel<S> generator_from_qmatrix(const RMat<S>& q) {
  const Eigen::Index n = q.rows();
  if (n == 0 || q.cols() != n)
    throw std::invalid_argument("generator_from_qmatrix: matrix must be square");
  const S scale = std::max<S>(S(1), q.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::abs(q.col(j).sum()) > S(1e-9) * scale)
      throw std::invalid_argument("generator_from_qmatrix: column " + std::to_string(j) +
                                  " does not sum to zero");
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != j && q(i, j) < -S(1e-12) * scale)
        throw std::invalid_argument("generator_from_qmatrix: negative off-diagonal rate");
  }
  return GeneratorModel<S>(GeneratorKind::classical_q, SiteSpace<S>(int(n), 1), int(n),
                           q.template cast<Cx<S>>());
}

// Laplacian plus hopping generator of a simple undirected graph.  Hop rates are
// column normalized, M(j,k) = A(j,k)/deg(k); the coherent part vectorizes as
// i(I kron L^T - L kron I) under row-stacking.
template <class S>
GeneratorModel<S> generator_from_graph(const Eigen::MatrixXi& adj) {
  const Eigen::Index n = adj.rows();
  if (n < 2 || adj.cols() != n)
    throw std::invalid_argument("generator_from_graph: need a square graph, order >= 2");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adj(i, i) != 0)
      throw std::invalid_argument("generator_from_graph: self loops are not allowed");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (adj(i, j) != adj(j, i))
        throw std::invalid_argument("generator_from_graph: adjacency must be symmetric");
      if (adj(i, j) != 0 && adj(i, j) != 1)
        throw std::invalid_argument("generator_from_graph: adjacency entries must be 0/1");
    }
  }
  RVec<S> deg(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    deg[i] = S(adj.row(i).sum());
    if (deg[i] <= S(0))
      throw std::invalid_argument("generator_from_graph: isolated vertex");
  }
  Mat<S> lap = Mat<S>::Zero(n, n);
  RMat<S> hop(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k) {
      lap(j, k) = (j == k) ? Cx<S>(deg[j]) : Cx<S>(-S(adj(j, k)));
      hop(j, k) = S(adj(j, k)) / deg[k];
    }
  const Mat<S> eye = Mat<S>::Identity(n, n);
  Mat<S> lhat = Cx<S>(0, 1) * (kron<S>(eye, lap.transpose()) - kron<S>(lap, eye));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = 0; k < n; ++k)
      if (hop(j, k) != S(0)) lhat(j * n + j, k * n + k) += hop(j, k);
  const RVec<S> out = hop.colwise().sum();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      lhat(a * n + b, a * n + b) -= Cx<S>((out[a] + out[b]) / S(2));
  return GeneratorModel<S>(GeneratorKind::graph_induced, SiteSpace<S>(1, int(n)), int(n),
                           std::move(lhat));
}

template <class S>
GeneratorModel<S> generator_raw(const SiteSpace<S>& sp, Mat<S> lhat) {
  if (lhat.rows() != sp.total_size() || lhat.cols() != sp.total_size())
    throw std::invalid_argument("generator_raw: size mismatch");
  const Vec<S> t = sp.trace_covector();
  const S scale = std::max<S>(S(1), lhat.cwiseAbs().maxCoeff());
  if ((lhat.transpose() * t).cwiseAbs().maxCoeff() > S(1e-8) * scale)
    throw std::invalid_argument("generator_raw: generator does not annihilate the trace");
  return GeneratorModel<S>(GeneratorKind::raw, sp, sp.sites(), std::move(lhat));
}

// ---------------------------------------------------------------------------
// block completeness

template <class S>
struct CompletenessReport {
  bool complete = true;
  RMat<S> condition;  // per-block condition numbers; infinity marks a singular block
};

template <class S>
CompletenessReport<S> completeness_check(const GeneratorModel<S>& g) {
  const int k = g.vertices();
  CompletenessReport<S> out;
  out.condition = RMat<S>::Zero(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      S cond;
      if (g.vertex_diagonal()) {
        const S a = std::abs(g.lhat()(g.vertex_coord(i), g.vertex_coord(j)));
        cond = a > S(0) ? S(1) : std::numeric_limits<S>::infinity();
      } else {
        const Mat<S> blk = g.space().block_of(g.lhat(), i, j);
        Eigen::JacobiSVD<Mat<S>> svd(blk);
        const S smax = svd.singularValues()(0);
        const S smin = svd.singularValues()(svd.singularValues().size() - 1);
        cond = (smin > smax * S(1e-12) && smax > S(0))
                   ? smax / smin
                   : std::numeric_limits<S>::infinity();
      }
      out.condition(i, j) = cond;
      if (!std::isfinite(cond)) out.complete = false;
    }
  return out;
}

// ---------------------------------------------------------------------------
// semigroup evaluation

template <class S>
Vec<S> semigroup_apply(const GeneratorModel<S>& g, S t, const Vec<S>& x) {
  return g.propagator().apply(t, x);
}

template <class S>
SiteState<S> semigroup_apply(const GeneratorModel<S>& g, S t, const SiteState<S>& st) {
  return g.space().unstack(g.propagator().apply(t, g.space().stack(st)));
}

template <class S>
S transition_prob(const GeneratorModel<S>& g, int i, int j, const Mat<S>& rho, S t) {
  return g.vertex_mass(g.propagator().apply(t, g.start_vector(j, rho)), i);
}

template <class S>
S transition_prob(const GeneratorModel<S>& g, int i, int j, S t) {
  return g.vertex_mass(g.propagator().apply(t, g.start_vector(j)), i);
}

// ---------------------------------------------------------------------------
// local rates

template <class S>
struct RateProfile {
  int vertex = 0;
  S exit_rate = 0;     // rate of leaving the vertex given the supplied state
  RVec<S> jump_rate;   // jump_rate[l]: rate into vertex l; zero at the vertex itself
  S small_t_dev = 0;   // |(1 - p_vv(t))/t - exit_rate| probed at t = 1e-6
};

template <class S>
RateProfile<S> rates(const GeneratorModel<S>& g, int v, const Vec<S>& start) {
  RateProfile<S> out;
  out.vertex = v;
  const Vec<S> flow = g.lhat() * start;
  out.exit_rate = -g.vertex_mass(flow, v);
  out.jump_rate = RVec<S>::Zero(g.vertices());
  for (int l = 0; l < g.vertices(); ++l)
    if (l != v) out.jump_rate[l] = g.vertex_mass(flow, l);
  const S t = S(1e-6);
  const S p = g.vertex_mass(g.propagator().apply(t, start), v);
  out.small_t_dev = std::abs((S(1) - p) / t - out.exit_rate);
  return out;
}

template <class S>
RateProfile<S> rates(const GeneratorModel<S>& g, int v, const Mat<S>& rho) {
  return rates<S>(g, v, g.start_vector(v, rho));
}

template <class S>
RateProfile<S> rates(const GeneratorModel<S>& g, int v) {
  return rates<S>(g, v, g.start_vector(v));
}

// Survival probability at the vertex compared against exp(-exit_rate * t); the
// survival is the limit of interleaved short evolutions and projections, taken
// by doubling the number of panels up to 2^10 with one Richardson step.
template <class S>
S holding_time_check(const GeneratorModel<S>& g, int v, const Mat<S>& rho,
                     const std::vector<S>& t_grid) {
  const Mat<S> proj = g.vertex_projector(v);
  const Vec<S> x0 = g.start_vector(v, rho);
  const S q = rates<S>(g, v, rho).exit_rate;
  S worst = 0;
  for (S t : t_grid) {
    S prev = 0, curr = 0;
    for (int m = 9; m <= 10; ++m) {
      Mat<S> step = proj * g.propagator().at(t / S(1 << m)) * proj;
      for (int s = 0; s < m; ++s) step = step * step;
      const S val = g.vertex_mass(Vec<S>(step * x0), v);
      prev = curr;
      curr = val;
    }
    const S extrapolated = S(2) * curr - prev;
    worst = std::max(worst, std::abs(extrapolated - std::exp(-q * t)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Poisson-monitored hitting

template <class S>
struct HypothesisRecord {
  bool m_invertible = false;
  S spectral_radius = 0;       // largest |alpha| of Q_f M^{-1}
  Cx<S> det_m{};               // determinant of M = I - lhat/lambda
  std::vector<Cx<S>> alphas;   // nonzero eigenvalues of Q_f M^{-1}, decreasing modulus
  bool holds() const { return m_invertible && spectral_radius < S(1); }
};

template <class S>
struct PoissonHittingProblem {
  int target = 0;
  S lambda = 1;
  Mat<S> m, n;
  HypothesisRecord<S> record;
};

template <class S>
PoissonHittingProblem<S> poisson_problem(const GeneratorModel<S>& g, int f, S lambda) {
  if (lambda <= S(0)) throw std::invalid_argument("poisson_problem: lambda must be > 0");
  PoissonHittingProblem<S> pr;
  pr.target = f;
  pr.lambda = lambda;
  const Eigen::Index n = g.lhat().rows();
  pr.m = Mat<S>::Identity(n, n) - g.lhat() / Cx<S>(lambda);
  pr.n = pr.m - g.avoid_projector(f);
  Eigen::FullPivLU<Mat<S>> lu(pr.m);
  pr.record.m_invertible = lu.isInvertible();
  if (pr.record.m_invertible) {
    pr.record.det_m = lu.determinant();
    const Mat<S> qminv = g.avoid_projector(f) * lu.inverse();
    Eigen::ComplexEigenSolver<Mat<S>> es(qminv);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const Cx<S> a = es.eigenvalues()[i];
      if (std::abs(a) > S(1e-12)) pr.record.alphas.push_back(a);
    }
    std::sort(pr.record.alphas.begin(), pr.record.alphas.end(),
              [](const Cx<S>& a, const Cx<S>& b) { return std::abs(a) > std::abs(b); });
    pr.record.spectral_radius =
        pr.record.alphas.empty() ? S(0) : std::abs(pr.record.alphas.front());
  }
  return pr;
}

template <class S>
HypothesisRecord<S> hypothesis_report(const PoissonHittingProblem<S>& pr) {
  return pr.record;
}

template <class S>
struct PoissonHit {
  S probability = 0;
  S mean_time = 0;
};

template <class S>
PoissonHit<S> poisson_hitting(const GeneratorModel<S>& g,
                              const PoissonHittingProblem<S>& pr, const Vec<S>& start) {
  if (!pr.record.m_invertible)
    throw hypothesis_error("poisson_hitting: I - L/lambda is singular at lambda=" +
                           std::to_string(double(pr.lambda)));
  if (!(pr.record.spectral_radius < S(1) - S(1e-13)))
    throw hypothesis_error(
        "poisson_hitting: monitored resolvent eigenvalue has modulus " +
        std::to_string(double(pr.record.spectral_radius)) + " at lambda=" +
        std::to_string(double(pr.lambda)));
  Eigen::PartialPivLU<Mat<S>> lu(pr.n);
  const Vec<S> x1 = lu.solve(start);
  const Vec<S> x2 = lu.solve(x1);
  PoissonHit<S> out;
  out.probability = g.vertex_mass(x1, pr.target);
  out.mean_time = g.vertex_mass(x2, pr.target) / pr.lambda;
  return out;
}

template <class S>
PoissonHit<S> poisson_hitting(const GeneratorModel<S>& g, int f, S lambda, int from,
                              const Mat<S>& rho) {
  return poisson_hitting<S>(g, poisson_problem<S>(g, f, lambda),
                            g.start_vector(from, rho));
}

// ---------------------------------------------------------------------------
// large-rate limit of the mean hitting time

template <class S>
struct CtHitLimit {
  S limit = 0;         // extrapolated mean hitting time
  S slope = 0;         // coefficient of 1/lambda in the fit
  S fit_residual = 0;  // defect of the fit at the third ladder point
  S probability = 0;   // hitting probability at the largest rate
};

template <class S>
CtHitLimit<S> mean_hitting_ct(const GeneratorModel<S>& g, int f, const Vec<S>& start) {
  const S l1 = S(1e4), l2 = S(1e5), l3 = S(1e6);
  const S t1 = poisson_hitting<S>(g, poisson_problem<S>(g, f, l1), start).mean_time;
  const S t2 = poisson_hitting<S>(g, poisson_problem<S>(g, f, l2), start).mean_time;
  const PoissonHit<S> top = poisson_hitting<S>(g, poisson_problem<S>(g, f, l3), start);
  CtHitLimit<S> out;
  out.slope = (t2 - top.mean_time) / (S(1) / l2 - S(1) / l3);
  out.limit = top.mean_time - out.slope / l3;
  out.fit_residual = std::abs(t1 - (out.limit + out.slope / l1));
  out.probability = top.probability;
  if (!(out.fit_residual <= S(1e-6)))
    throw std::runtime_error("mean_hitting_ct: non-convergent ladder (residual " +
                             std::to_string(double(out.fit_residual)) + ")");
  return out;
}

template <class S>
CtHitLimit<S> mean_hitting_ct(const GeneratorModel<S>& g, int f, int from,
                              const Mat<S>& rho) {
  return mean_hitting_ct<S>(g, f, g.start_vector(from, rho));
}

template <class S>
CtHitLimit<S> mean_hitting_ct(const GeneratorModel<S>& g, int f, int from) {
  return mean_hitting_ct<S>(g, f, g.start_vector(from));
}

// ---------------------------------------------------------------------------
// continuous-time fundamental matrix

template <class S>
struct CtFundamental {
  Mat<S> omega;  // rank-one projection onto the kernel of the generator
  Mat<S> zmat;   // integral of the deviation semigroup
  S gap = 0;     // smallest decay rate among nonzero eigenvalues
};

template <class S>
CtFundamental<S> ct_fundamental_matrix(const GeneratorModel<S>& g, S abstol = S(1e-10)) {
  const Mat<S>& lhat = g.lhat();
  Eigen::ComplexEigenSolver<Mat<S>> es(lhat);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("ct_fundamental_matrix: eigensolver failed");
  const Vec<S>& mu = es.eigenvalues();
  S scale = S(1);
  for (Eigen::Index i = 0; i < mu.size(); ++i) scale = std::max(scale, std::abs(mu[i]));
  Eigen::Index zero_index = 0;
  for (Eigen::Index i = 1; i < mu.size(); ++i)
    if (std::abs(mu[i]) < std::abs(mu[zero_index])) zero_index = i;
  if (std::abs(mu[zero_index]) > S(1e-8) * scale)
    throw std::runtime_error("ct_fundamental_matrix: generator has no kernel");
  S gap = std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (i == zero_index) continue;
    if (std::abs(mu[i]) <= S(1e-8) * scale)
      throw std::runtime_error("ct_fundamental_matrix: kernel is not one-dimensional");
    gap = std::min(gap, -std::real(mu[i]));
  }
  if (!(gap > S(1e-10)))
    throw std::runtime_error("ct_fundamental_matrix: zero spectral gap");
  const Vec<S> kernel = es.eigenvectors().col(zero_index);
  const Vec<S> tcov = g.space().trace_covector();
  const Cx<S> overlap = (tcov.transpose() * kernel)(0, 0);
  if (std::abs(overlap) < S(1e-10))
    throw std::runtime_error("ct_fundamental_matrix: kernel state has zero trace");
  CtFundamental<S> out;
  out.gap = gap;
  out.omega = kernel * tcov.transpose() / overlap;
  const S horizon = std::min(S(50) / gap, S(1e4));
  const auto& prop = g.propagator();
  out.zmat = integrate_gk<S>(
      [&](S t) { return Mat<S>(prop.at(t) - out.omega); }, S(0), horizon, abstol);
  return out;
}

// Resolvent of the deviation at zero; agreement with the quadrature is checked
// in the tests rather than assumed.
template <class S>
Mat<S> ct_fundamental_closed_form(const Mat<S>& lhat, const Mat<S>& omega) {
  return (omega - lhat).fullPivLu().inverse() - omega;
}

// ---------------------------------------------------------------------------
// vertex-diagonal analysis: rate matrix, hitting systems, Kac identity

// Classical rate matrix read off the diagonal coordinates (columns generate).
template <class S>
RMat<S> vertex_rate_matrix(const GeneratorModel<S>& g) {
  if (!g.vertex_diagonal())
    throw std::invalid_argument("vertex_rate_matrix: needs a vertex-diagonal model");
  const int n = g.vertices();
  RMat<S> q(n, n);
  for (int l = 0; l < n; ++l)
    for (int v = 0; v < n; ++v)
      q(l, v) = std::real(g.lhat()(g.vertex_coord(l), g.vertex_coord(v)));
  return q;
}

// Mean hitting times E_j(time to reach target) of the embedded jump chain.
template <class S>
RVec<S> vertex_hitting_times(const GeneratorModel<S>& g, int target) {
  const RMat<S> q = vertex_rate_matrix<S>(g);
  const int n = g.vertices();
  std::vector<int> free;
  for (int v = 0; v < n; ++v)
    if (v != target) free.push_back(v);
  const int m = int(free.size());
  RMat<S> a = RMat<S>::Zero(m, m);
  RVec<S> b = RVec<S>::Ones(m);
  for (int r = 0; r < m; ++r) {
    const int j = free[r];
    const S qj = -q(j, j);
    if (!(qj > S(1e-14)))
      throw std::runtime_error("vertex_hitting_times: vertex " + std::to_string(j) +
                               " has zero exit rate");
    a(r, r) = qj;
    for (int c = 0; c < m; ++c) {
      const int l = free[c];
      if (l != j) a(r, c) -= q(l, j);
    }
  }
  const RVec<S> h = a.fullPivLu().solve(b);
  RVec<S> out = RVec<S>::Zero(n);
  for (int r = 0; r < m; ++r) out[free[r]] = h[r];
  return out;
}

// Stationary occupation of the vertex process (kernel of the rate matrix).
template <class S>
RVec<S> vertex_stationary(const GeneratorModel<S>& g) {
  const RMat<S> q = vertex_rate_matrix<S>(g);
  Eigen::FullPivLU<RMat<S>> lu(q);
  lu.setThreshold(S(1e-9));
  const RMat<S> kernel = lu.kernel();
  if (kernel.cols() != 1)
    throw std::runtime_error("vertex_stationary: rate matrix kernel is not simple");
  RVec<S> pi = kernel.col(0);
  pi /= pi.sum();
  for (Eigen::Index i = 0; i < pi.size(); ++i)
    if (pi[i] < -S(1e-10))
      throw std::runtime_error("vertex_stationary: negative stationary mass");
  return pi;
}

template <class S>
struct KacVertexCt {
  int vertex = 0;
  S conditional = 0;  // first-jump decomposition of the mean return time
  S reciprocal = 0;   // 1 / (exit rate * stationary mass)
  S residual = 0;
  S exit_rate = 0;
  S stationary_mass = 0;
};

template <class S>
std::vector<KacVertexCt<S>> ct_kac_mn(const GeneratorModel<S>& g) {
  if (!g.vertex_diagonal())
    throw std::invalid_argument("ct_kac_mn: needs a vertex-diagonal model");
  const RMat<S> q = vertex_rate_matrix<S>(g);
  const RVec<S> pi = vertex_stationary<S>(g);
  const int n = g.vertices();
  std::vector<KacVertexCt<S>> out;
  for (int i = 0; i < n; ++i) {
    KacVertexCt<S> row;
    row.vertex = i;
    row.exit_rate = -q(i, i);
    if (!(row.exit_rate > S(1e-14)))
      throw std::runtime_error("ct_kac_mn: vertex " + std::to_string(i) +
                               " has zero exit rate");
    row.stationary_mass = pi[i];
    const RVec<S> h = vertex_hitting_times<S>(g, i);
    S sum = S(1);
    for (int j = 0; j < n; ++j)
      if (j != i) sum += q(j, i) * h[j];
    row.conditional = sum / row.exit_rate;
    row.reciprocal = S(1) / (row.exit_rate * pi[i]);
    row.residual = std::abs(row.conditional - row.reciprocal);
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// delta-skeleton and recurrence diagnostics

template <class S>
Mat<S> skeleton(const GeneratorModel<S>& g, S delta) {
  if (!(delta > S(0))) throw std::invalid_argument("skeleton: delta must be > 0");
  return g.propagator().at(delta);
}

namespace detail {

// Return probability of a monitored discrete map with explicit projectors:
// trace of P phi (I - z Q phi)^{-1} start at z -> 1.
template <class S>
S monitored_return_probability(const Mat<S>& phi, const Mat<S>& proj, const Mat<S>& avoid,
                               const Vec<S>& start, const Vec<S>& tcov) {
  const Mat<S> qphi = avoid * phi;
  auto value_at = [&](S z) {
    const Mat<S> sys = Mat<S>::Identity(qphi.rows(), qphi.cols()) - Cx<S>(z) * qphi;
    const Vec<S> resolved = sys.fullPivLu().solve(start);
    Mat<S> cell(1, 1);
    cell(0, 0) = (tcov.transpose() * (proj * (phi * resolved)))(0, 0);
    return cell;
  };
  if (spectral_radius<S>(qphi) < S(1) - S(1e-8)) return std::real(value_at(S(1))(0, 0));
  const auto lim = abel_limit<S>(value_at);
  return std::real(lim.value(0, 0));
}

}  // namespace detail

template <class S>
struct CtVertexRecurrence {
  int vertex = 0;
  S integral_value = 0;     // truncated integral of the return probability
  S integral_slope = 0;     // growth rate of that integral near the horizon
  S skeleton_sum = 0;       // partial sums of the skeleton return series
  S skeleton_slope = 0;     // per-step growth of the series near the horizon
  S monitored_return = 0;   // worst-case monitored first-return probability
  bool integral_recurrent = false;
  bool skeleton_recurrent = false;
  bool monitored_recurrent = false;
  bool agree = false;
};

template <class S>
struct CtRecurrenceReport {
  S delta = 0;
  S horizon = 0;
  std::vector<CtVertexRecurrence<S>> vertex;
  bool all_agree = true;
};

template <class S>
CtRecurrenceReport<S> ct_recurrence_report(const GeneratorModel<S>& g, S delta,
                                           S horizon = S(200)) {
  CtRecurrenceReport<S> out;
  out.delta = delta;
  out.horizon = horizon;
  const Mat<S> phid = skeleton<S>(g, delta);
  const Vec<S> tcov = g.space().trace_covector();
  const auto& prop = g.propagator();
  std::vector<Mat<S>> basis;
  if (g.vertex_diagonal())
    basis.push_back(Mat<S>::Identity(1, 1));
  else
    basis = density_basis<S>(g.space().dim());
  for (int v = 0; v < g.vertices(); ++v) {
    CtVertexRecurrence<S> row;
    row.vertex = v;
    const Vec<S> x0 = g.start_vector(v);
    auto occupation = [&](S t) {
      Mat<S> cell(1, 1);
      cell(0, 0) = Cx<S>(g.vertex_mass(prop.apply(t, x0), v));
      return cell;
    };
    const S first =
        std::real(integrate_gk<S>(occupation, S(0), horizon / S(2), S(1e-8))(0, 0));
    const S second =
        std::real(integrate_gk<S>(occupation, horizon / S(2), horizon, S(1e-8))(0, 0));
    row.integral_value = first + second;
    row.integral_slope = second / (horizon / S(2));
    const int steps = std::max(8, int(horizon / delta));
    Vec<S> x = x0;
    S half_sum = 0;
    for (int s = 1; s <= steps; ++s) {
      x = phid * x;
      row.skeleton_sum += g.vertex_mass(x, v);
      if (s == steps / 2) half_sum = row.skeleton_sum;
    }
    row.skeleton_slope = (row.skeleton_sum - half_sum) / S(steps - steps / 2);
    const Mat<S> proj = g.vertex_projector(v);
    const Mat<S> avoid = g.avoid_projector(v);
    row.monitored_return = S(1);
    for (const Mat<S>& rho : basis) {
      const Vec<S> start = g.vertex_diagonal() ? x0 : g.start_vector(v, rho);
      row.monitored_return =
          std::min(row.monitored_return, detail::monitored_return_probability<S>(
                                             phid, proj, avoid, start, tcov));
    }
    row.integral_recurrent = row.integral_slope > S(1e-6);
    row.skeleton_recurrent = row.skeleton_slope > S(1e-6);
    row.monitored_recurrent = row.monitored_return >= S(1) - S(1e-6);
    row.agree = row.integral_recurrent == row.skeleton_recurrent &&
                row.skeleton_recurrent == row.monitored_recurrent;
    out.all_agree = out.all_agree && row.agree;
    out.vertex.push_back(row);
  }
  return out;
}

}  // namespace oqwalk

#endif
