#ifndef OQWALK_LINALG_HPP
#define OQWALK_LINALG_HPP

// Dense complex linear algebra helpers shared by the walk, monitoring and
// continuous-time layers.  Everything is templated on the real scalar and
// uses Eigen as the only math dependency.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oqwalk {

template <class S> using Cx = std::complex<S>;
template <class S> using Mat = Eigen::Matrix<Cx<S>, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using Vec = Eigen::Matrix<Cx<S>, Eigen::Dynamic, 1>;
template <class S> using RMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using RVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Row-stacking vectorization: vec(X)[i*cols + j] = X(i, j).
template <class S>
Vec<S> vec(const Mat<S>& x) {
  Vec<S> v(x.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) v[i * x.cols() + j] = x(i, j);
  return v;
}

template <class S>
Mat<S> unvec(const Vec<S>& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw std::invalid_argument("unvec: size mismatch");
  Mat<S> x(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = v[i * cols + j];
  return x;
}

// Square devectorization for states of dimension n*n.
template <class S>
Mat<S> unvec_square(const Vec<S>& v) {
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(double(v.size()))));
  if (n * n != v.size()) throw std::invalid_argument("unvec_square: not a square length");
  return unvec<S>(v, n, n);
}

template <class S>
Mat<S> kron(const Mat<S>& a, const Mat<S>& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

// Matrix representation of X -> A X A^dagger under row-stacking vec.
template <class S>
Mat<S> conjugation_rep(const Mat<S>& a) {
  return kron<S>(a, a.conjugate());
}

// Trace of the devectorized square matrix, without materializing it.
template <class S>
Cx<S> trace_vec(const Vec<S>& v) {
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(double(v.size()))));
  if (n * n != v.size()) throw std::invalid_argument("trace_vec: not a square length");
  Cx<S> t{};
  for (Eigen::Index i = 0; i < n; ++i) t += v[i * n + i];
  return t;
}

template <class S>
Mat<S> hermitize(const Mat<S>& a) {
  return ((a + a.adjoint()) / S(2)).eval();
}

// Positive semidefinite within tolerance -1e-10 * ||A||; also reports the
// Hermiticity defect so callers can flag non-physical states.
template <class S>
struct PsdReport {
  bool psd = false;
  S min_eigenvalue = S(0);
  S hermiticity_defect = S(0);
};

template <class S>
PsdReport<S> check_psd(const Mat<S>& a) {
  PsdReport<S> r;
  r.hermiticity_defect = (a - a.adjoint()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(hermitize<S>(a));
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  const S scale = std::max<S>(a.cwiseAbs().maxCoeff(), S(1));
  r.psd = r.min_eigenvalue >= -S(1e-10) * scale;
  return r;
}

// Scaling-and-squaring Pade exponential (Eigen's implementation).
template <class S>
Mat<S> expm(const Mat<S>& a) {
  return a.exp();
}

template <class S>
S spectral_radius(const Mat<S>& a) {
  Eigen::ComplexEigenSolver<Mat<S>> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Gap below the unit circle for a power-bounded map: 1 - (largest modulus
// among eigenvalues that are not within `peripheral_tol` of the maximum).
template <class S>
struct SpectrumSummary {
  S radius = S(0);
  int peripheral_count = 0;  // eigenvalues within peripheral_tol of the radius
  S gap = S(0);              // radius minus next modulus below the peripheral shell
};

template <class S>
SpectrumSummary<S> spectrum_summary(const Mat<S>& a, S peripheral_tol = S(1e-8)) {
  Eigen::ComplexEigenSolver<Mat<S>> es(a, false);
  const auto mods = es.eigenvalues().cwiseAbs().eval();
  SpectrumSummary<S> s;
  s.radius = mods.maxCoeff();
  S next = S(0);
  for (Eigen::Index i = 0; i < mods.size(); ++i) {
    if (mods[i] >= s.radius - peripheral_tol)
      ++s.peripheral_count;
    else
      next = std::max(next, mods[i]);
  }
  s.gap = s.radius - next;
  return s;
}

// Eigen-decomposition wrapper used to evaluate matrix semigroups fast.
// Falls back to expm when the eigenvector basis is ill conditioned.
template <class S>
class Propagator {
 public:
  explicit Propagator(Mat<S> gen) : gen_(std::move(gen)) {
    Eigen::ComplexEigenSolver<Mat<S>> es(gen_);
    if (es.info() == Eigen::Success) {
      v_ = es.eigenvectors();
      mu_ = es.eigenvalues();
      Eigen::FullPivLU<Mat<S>> lu(v_);
      if (lu.isInvertible()) {
        vinv_ = lu.inverse();
        const S cond = v_.norm() * vinv_.norm();
        diagonalizable_ = cond < S(1e8);
      }
    }
  }

  const Mat<S>& generator() const { return gen_; }
  bool diagonalizable() const { return diagonalizable_; }

  Mat<S> at(S t) const {
    if (diagonalizable_) {
      Vec<S> e(mu_.size());
      for (Eigen::Index i = 0; i < mu_.size(); ++i) e[i] = std::exp(mu_[i] * Cx<S>(t));
      return v_ * e.asDiagonal() * vinv_;
    }
    return expm<S>((gen_ * Cx<S>(t)).eval());
  }

  // Applies exp(t * gen) to a vector in O(n^2) when diagonalizable.
  Vec<S> apply(S t, const Vec<S>& x) const {
    if (!diagonalizable_) return at(t) * x;
    Vec<S> y = vinv_ * x;
    for (Eigen::Index i = 0; i < mu_.size(); ++i) y[i] *= std::exp(mu_[i] * Cx<S>(t));
    return v_ * y;
  }

  const Vec<S>& eigenvalues() const { return mu_; }

 private:
  Mat<S> gen_;
  Mat<S> v_, vinv_;
  Vec<S> mu_;
  bool diagonalizable_ = false;
};

namespace detail {

// 15-point Gauss-Kronrod nodes/weights on [-1, 1] (7-point Gauss embedded).
template <class S>
struct Gk15 {
  static constexpr double xk[15] = {
      -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
      -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
      -0.586087235467691130294144838258730, -0.405845151377397166906606412076961,
      -0.207784955007898467600689403773245, 0.0,
      0.207784955007898467600689403773245,  0.405845151377397166906606412076961,
      0.586087235467691130294144838258730,  0.741531185599394439863864773280788,
      0.864864423359769072789712788640926,  0.949107912342758524526189684047851,
      0.991455371120812639206854697526329};
  static constexpr double wk[15] = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
      0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
      0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
      0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
      0.022935322010529224963732008058970};
  static constexpr double wg[7] = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
      0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
      0.129484966168869693270611432679082};
};

}  // namespace detail

// Adaptive Gauss-Kronrod quadrature for matrix-valued integrands.
template <class S>
Mat<S> integrate_gk(const std::function<Mat<S>(S)>& f, S a, S b, S abstol,
                    int max_depth = 28) {
  using G = detail::Gk15<S>;
  struct Seg {
    S a, b;
    int depth;
  };
  Mat<S> probe = f((a + b) / S(2));
  Mat<S> total = Mat<S>::Zero(probe.rows(), probe.cols());
  std::vector<Seg> stack{{a, b, 0}};
  while (!stack.empty()) {
    const Seg seg = stack.back();
    stack.pop_back();
    const S h = (seg.b - seg.a) / S(2);
    const S c = (seg.a + seg.b) / S(2);
    Mat<S> ik = Mat<S>::Zero(probe.rows(), probe.cols());
    Mat<S> ig = Mat<S>::Zero(probe.rows(), probe.cols());
    for (int i = 0; i < 15; ++i) {
      const Mat<S> fx = f(c + h * S(G::xk[i]));
      ik += S(G::wk[i]) * fx;
      if (i % 2 == 1) ig += S(G::wg[i / 2]) * fx;
    }
    ik *= h;
    ig *= h;
    const S err = (ik - ig).cwiseAbs().maxCoeff();
    if (err <= abstol || seg.depth >= max_depth) {
      total += ik;
    } else {
      stack.push_back({seg.a, c, seg.depth + 1});
      stack.push_back({c, seg.b, seg.depth + 1});
    }
  }
  return total;
}

// "re+imi" rendering used by the CSV layer; pure reals drop the imaginary part.
// Family of n^2 density matrices spanning the Hermitian matrices over the
// reals: E_jj, then for each pair j < k the two rank-one mixtures
// (E_jj + E_kk +- (E_jk + E_kj))/2 averaged and the imaginary-phase variant.
// A real-linear functional taking the same value on all of them is that
// multiple of the trace.
template <class S>
std::vector<Mat<S>> density_basis(Eigen::Index n) {
  std::vector<Mat<S>> out;
  out.reserve(size_t(n) * size_t(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Mat<S> d = Mat<S>::Zero(n, n);
    d(j, j) = S(1);
    out.push_back(d);
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index k = j + 1; k < n; ++k) {
      Mat<S> re = Mat<S>::Zero(n, n);
      re(j, j) = re(k, k) = S(0.5);
      re(j, k) = re(k, j) = S(0.5);
      out.push_back(re);
      Mat<S> im = Mat<S>::Zero(n, n);
      im(j, j) = im(k, k) = S(0.5);
      im(j, k) = Cx<S>(S(0), S(0.5));
      im(k, j) = Cx<S>(S(0), -S(0.5));
      out.push_back(im);
    }
  return out;
}

template <class S>
std::string format_complex(const Cx<S>& z, int precision = 12) {
  char buf[64];
  const double re = static_cast<double>(z.real());
  const double im = static_cast<double>(z.imag());
  if (std::abs(im) < 1e-14) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, re);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%.*g%+.*gi", precision, re, precision, im);
  return buf;
}

}  // namespace oqwalk

#endif
