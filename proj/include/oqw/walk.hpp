#ifndef OQWALK_WALK_HPP
#define OQWALK_WALK_HPP

// Open quantum walk on a finite set of sites.  The model stores one n x n
// transition block per ordered site pair; block(to, from) moves internal
// state from `from` to `to`.  Trace preservation means each column of
// blocks satisfies sum_to block(to,from)^dagger block(to,from) = I.

#include <oqw/linalg.hpp>

#include <random>
#include <vector>

namespace oqwalk {

template <class S>
struct WalkModel {
  int sites = 0;
  int dim = 1;
  std::vector<Mat<S>> blocks;  // row-major: blocks[to * sites + from]

  WalkModel() = default;
  WalkModel(int k, int n)
      : sites(k), dim(n), blocks(static_cast<size_t>(k) * k, Mat<S>::Zero(n, n)) {}

  Mat<S>& block(int to, int from) { return blocks[size_t(to) * sites + from]; }
  const Mat<S>& block(int to, int from) const { return blocks[size_t(to) * sites + from]; }
};

template <class S>
struct ValidationReport {
  bool trace_preserving = false;
  bool unital = false;
  S trace_defect = S(0);    // max over columns of ||sum B^dag B - I||_max
  S unital_defect = S(0);   // max over rows of ||sum B B^dag - I||_max
  S shape_ok = true;
};

template <class S>
ValidationReport<S> validate(const WalkModel<S>& w, S tol = S(1e-10)) {
  ValidationReport<S> r;
  const int k = w.sites, n = w.dim;
  for (int j = 0; j < k; ++j) {
    Mat<S> col = Mat<S>::Zero(n, n);
    for (int i = 0; i < k; ++i) col += w.block(i, j).adjoint() * w.block(i, j);
    r.trace_defect = std::max(r.trace_defect,
                              (col - Mat<S>::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  for (int i = 0; i < k; ++i) {
    Mat<S> row = Mat<S>::Zero(n, n);
    for (int j = 0; j < k; ++j) row += w.block(i, j) * w.block(i, j).adjoint();
    r.unital_defect = std::max(r.unital_defect,
                               (row - Mat<S>::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  r.trace_preserving = r.trace_defect <= tol;
  r.unital = r.unital_defect <= tol;
  return r;
}

// State of the walk: one (unnormalized) density block per site.  The joint
// state is block-diagonal; total trace is the sum of block traces.
template <class S>
using SiteState = std::vector<Mat<S>>;

template <class S>
SiteState<S> localized_state(const WalkModel<S>& w, int site, const Mat<S>& rho) {
  SiteState<S> st(w.sites, Mat<S>::Zero(w.dim, w.dim));
  st[site] = rho;
  return st;
}

// One step of the walk applied directly as a Kraus sum; this is the slow
// reference path the superoperator representation is checked against.
template <class S>
SiteState<S> apply_walk(const WalkModel<S>& w, const SiteState<S>& st) {
  SiteState<S> out(w.sites, Mat<S>::Zero(w.dim, w.dim));
  for (int i = 0; i < w.sites; ++i)
    for (int j = 0; j < w.sites; ++j)
      out[i] += w.block(i, j) * st[j] * w.block(i, j).adjoint();
  return out;
}

// Geometry of the stacked representation: the full state lives in C^{k n^2},
// site i occupying coordinates [i*n^2, (i+1)*n^2) as vec of its block.
template <class S>
class SiteSpace {
 public:
  SiteSpace(int sites, int dim) : k_(sites), n_(dim) {}

  int sites() const { return k_; }
  int dim() const { return n_; }
  Eigen::Index block_size() const { return Eigen::Index(n_) * n_; }
  Eigen::Index total_size() const { return Eigen::Index(k_) * n_ * n_; }

  Vec<S> stack(const SiteState<S>& st) const {
    Vec<S> v(total_size());
    for (int i = 0; i < k_; ++i) v.segment(i * block_size(), block_size()) = vec<S>(st[i]);
    return v;
  }

  SiteState<S> unstack(const Vec<S>& v) const {
    SiteState<S> st(k_);
    for (int i = 0; i < k_; ++i)
      st[i] = unvec<S>(v.segment(i * block_size(), block_size()).eval(), n_, n_);
    return st;
  }

  // Projector onto the coordinates of one site.
  Mat<S> projector(int site) const {
    Mat<S> p = Mat<S>::Zero(total_size(), total_size());
    p.block(site * block_size(), site * block_size(), block_size(), block_size())
        .setIdentity();
    return p;
  }

  // Projector onto everything except `site`.
  Mat<S> complement(int site) const {
    Mat<S> q = Mat<S>::Identity(total_size(), total_size());
    q.block(site * block_size(), site * block_size(), block_size(), block_size())
        .setZero();
    return q;
  }

  Mat<S> block_of(const Vec<S>& v, int site) const {
    return unvec<S>(v.segment(site * block_size(), block_size()).eval(), n_, n_);
  }

  Mat<S> block_of(const Mat<S>& op, int to, int from) const {
    return op.block(to * block_size(), from * block_size(), block_size(), block_size());
  }

  S site_probability(const Vec<S>& v, int site) const {
    return std::real(trace_vec<S>(v.segment(site * block_size(), block_size()).eval()));
  }

  Cx<S> total_trace(const Vec<S>& v) const {
    Cx<S> t{};
    for (int i = 0; i < k_; ++i)
      t += trace_vec<S>(v.segment(i * block_size(), block_size()).eval());
    return t;
  }

  // vec of the block-diagonal identity; the trace functional as a covector.
  Vec<S> trace_covector() const {
    Vec<S> v = Vec<S>::Zero(total_size());
    for (int i = 0; i < k_; ++i)
      for (int d = 0; d < n_; ++d) v[i * block_size() + d * n_ + d] = Cx<S>(1);
    return v;
  }

 private:
  int k_, n_;
};

// Matrix of the one-step map on the stacked representation: a k x k grid of
// n^2 x n^2 conjugation blocks.
template <class S>
Mat<S> block_superoperator(const WalkModel<S>& w) {
  SiteSpace<S> sp(w.sites, w.dim);
  const auto m = sp.block_size();
  Mat<S> phi = Mat<S>::Zero(sp.total_size(), sp.total_size());
  for (int i = 0; i < w.sites; ++i)
    for (int j = 0; j < w.sites; ++j)
      phi.block(i * m, j * m, m, m) = conjugation_rep<S>(w.block(i, j));
  return phi;
}

// Classical column-stochastic chain embedded with internal dimension 1.
template <class S>
WalkModel<S> embed_classical(const RMat<S>& p, S tol = S(1e-10)) {
  const int k = int(p.rows());
  if (p.cols() != k) throw std::invalid_argument("embed_classical: matrix not square");
  for (int j = 0; j < k; ++j) {
    S col = p.col(j).sum();
    if (std::abs(col - S(1)) > tol)
      throw std::invalid_argument(
          "embed_classical: columns must sum to 1 (entry (i,j) is the "
          "probability of moving j -> i; transpose a row-stochastic input)");
  }
  WalkModel<S> w(k, 1);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) w.block(i, j)(0, 0) = std::sqrt(p(i, j));
  return w;
}

// Mixing test: spectral radius 1, the peripheral eigenvalue simple, and a
// gap below it.  For trace-preserving maps radius 1 always holds.
template <class S>
struct MixingReport {
  bool mixing = false;
  S gap = S(0);
  int peripheral_count = 0;
};

template <class S>
MixingReport<S> check_mixing(const Mat<S>& phi, S gap_tol = S(1e-8)) {
  auto s = spectrum_summary<S>(phi, gap_tol);
  MixingReport<S> r;
  r.gap = s.gap;
  r.peripheral_count = s.peripheral_count;
  r.mixing = (std::abs(s.radius - S(1)) < S(1e-8)) && s.peripheral_count == 1 &&
             s.gap > gap_tol;
  return r;
}

// Random trace-preserving model with a mixing one-step map.  Each column
// stack of blocks is drawn Ginibre with an identity admixture on the
// diagonal block, then orthonormalized by thin QR so trace preservation is
// exact.  Deterministic in the seed; retries with shifted seeds until the
// mixing check passes.
template <class S>
WalkModel<S> random_primitive_model(int sites, int dim, uint64_t seed) {
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 rng(seed + attempt * 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> g;
    WalkModel<S> w(sites, dim);
    bool ok = true;
    for (int j = 0; j < sites; ++j) {
      Mat<S> col(sites * dim, dim);
      for (int i = 0; i < sites; ++i) {
        Mat<S> b(dim, dim);
        for (int r = 0; r < dim; ++r)
          for (int c = 0; c < dim; ++c) b(r, c) = Cx<S>(S(g(rng)), S(g(rng)));
        if (i == j) b += S(2) * Mat<S>::Identity(dim, dim);
        col.block(i * dim, 0, dim, dim) = b;
      }
      Eigen::HouseholderQR<Mat<S>> qr(col);
      Mat<S> q = qr.householderQ() * Mat<S>::Identity(sites * dim, dim);
      // Q^dag Q = I exactly up to roundoff, so the column condition holds.
      for (int i = 0; i < sites; ++i) w.block(i, j) = q.block(i * dim, 0, dim, dim);
      if (!q.allFinite()) ok = false;
    }
    if (!ok) continue;
    if (check_mixing<S>(block_superoperator<S>(w)).mixing) return w;
  }
  throw std::runtime_error("random_primitive_model: no mixing model found");
}

}  // namespace oqwalk

#endif
