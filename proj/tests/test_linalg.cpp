#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <oqw/linalg.hpp>

#include <random>

using namespace oqwalk;
using D = double;
using M = Mat<D>;
using V = Vec<D>;
using C = Cx<D>;

namespace {

std::mt19937_64 rng(12345);

M random_matrix(Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> g;
  M a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = C(g(rng), g(rng));
  return a;
}

}  // namespace

TEST_CASE("vec/unvec round trip, row stacking order") {
  M x = random_matrix(3, 4);
  V v = vec<D>(x);
  CHECK(v[0 * 4 + 2] == x(0, 2));
  CHECK(v[2 * 4 + 1] == x(2, 1));
  M y = unvec<D>(v, 3, 4);
  CHECK((x - y).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("vec(A X B^T) equals (A kron B) vec(X)") {
  for (int rep = 0; rep < 5; ++rep) {
    M a = random_matrix(3, 3), b = random_matrix(4, 4), x = random_matrix(3, 4);
    V lhs = vec<D>((a * x * b.transpose()).eval());
    V rhs = kron<D>(a, b) * vec<D>(x);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conjugation_rep implements X -> A X A^dagger") {
  for (int rep = 0; rep < 5; ++rep) {
    M a = random_matrix(3, 3), x = random_matrix(3, 3);
    V lhs = conjugation_rep<D>(a) * vec<D>(x);
    V rhs = vec<D>((a * x * a.adjoint()).eval());
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("trace_vec matches trace of devectorized matrix") {
  M x = random_matrix(5, 5);
  CHECK(std::abs(trace_vec<D>(vec<D>(x)) - x.trace()) < 1e-13);
}

TEST_CASE("psd check accepts Gram matrices, rejects indefinite ones") {
  M a = random_matrix(4, 4);
  M gram = a * a.adjoint();
  auto ok = check_psd<D>(gram);
  CHECK(ok.psd);
  CHECK(ok.hermiticity_defect < 1e-13);

  M indef = M::Zero(2, 2);
  indef(0, 0) = 1.0;
  indef(1, 1) = -0.5;
  CHECK_FALSE(check_psd<D>(indef).psd);
}

TEST_CASE("expm agrees with the power series on a small matrix") {
  M a = 0.3 * random_matrix(4, 4);
  M series = M::Identity(4, 4);
  M term = M::Identity(4, 4);
  for (int k = 1; k <= 40; ++k) {
    term = (term * a / double(k)).eval();
    series += term;
  }
  CHECK((expm<D>(a) - series).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spectrum summary on a stochastic-like matrix") {
  M p(2, 2);
  p << 0.9, 0.2, 0.1, 0.8;
  auto s = spectrum_summary<D>(p);
  CHECK(s.radius == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.peripheral_count == 1);
  CHECK(s.gap == doctest::Approx(0.3).epsilon(1e-10));  // eigenvalues 1, 0.7
}

TEST_CASE("propagator matches expm and applies to vectors") {
  M a = random_matrix(5, 5);
  a = (a - a.adjoint()).eval();  // skew-Hermitian, cleanly diagonalizable
  Propagator<D> prop(a);
  CHECK(prop.diagonalizable());
  const double t = 0.7;
  M direct = expm<D>((a * C(t)).eval());
  CHECK((prop.at(t) - direct).cwiseAbs().maxCoeff() < 1e-11);
  V x = random_matrix(5, 1);
  CHECK((prop.apply(t, x) - direct * x).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("gauss-kronrod integrates polynomials and matrix exponentials") {
  // scalar check: int_0^2 t^3 dt = 4
  auto cubic = [](D t) {
    M m(1, 1);
    m(0, 0) = t * t * t;
    return m;
  };
  M i1 = integrate_gk<D>(cubic, 0.0, 2.0, 1e-12);
  CHECK(std::abs(i1(0, 0) - C(4.0)) < 1e-10);

  // matrix check: int_0^T exp(tA) dt = A^{-1}(exp(TA) - I)
  M a = random_matrix(3, 3);
  a -= (spectral_radius<D>(a) + 0.5) * M::Identity(3, 3);  // push spectrum left
  const double T = 2.0;
  auto f = [&](D t) { return expm<D>((a * C(t)).eval()); };
  M quad = integrate_gk<D>(f, 0.0, T, 1e-11);
  M exact = a.partialPivLu().solve((expm<D>((a * C(T)).eval()) - M::Identity(3, 3)).eval());
  CHECK((quad - exact).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("complex formatting") {
  CHECK(format_complex<D>(C(1.5, 0.0)) == "1.5");
  CHECK(format_complex<D>(C(0.25, -0.5)) == "0.25-0.5i");
  CHECK(format_complex<D>(C(0.0, 1.0)) == "0+1i");
}

TEST_CASE("long double instantiation compiles and runs") {
  using LD = long double;
  Mat<LD> x(2, 2);
  x << Cx<LD>(1, 0), Cx<LD>(0, 1), Cx<LD>(0, -1), Cx<LD>(2, 0);
  CHECK(std::abs(trace_vec<LD>(vec<LD>(x)) - Cx<LD>(3, 0)) < 1e-18L);
  CHECK(check_psd<LD>(x).psd);
}
