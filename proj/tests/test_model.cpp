#include "doctest.h"
#include "support.hpp"

#include "mptp/errors.hpp"
#include "mptp/pmp.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

using namespace mptp;
using mptp::testing::vec;

namespace {

std::vector<DriftKernel> all_kernels() {
  return {DriftKernel::zero(),
          DriftKernel::attract(1.3),
          DriftKernel::local_plus_attract(LocalPotential::kLinear, 0.7, 0.4),
          DriftKernel::local_plus_attract(LocalPotential::kDoubleWell, 0.0, 0.9),
          DriftKernel::factored_affine(0.3, -0.8)};
}

Vector random_vec(std::uint64_t seed, int stream, int d) {
  Vector v(d);
  for (int c = 0; c < d; ++c) v[c] = rng::normal(seed, rng::Purpose::kProbe, stream, c, 0);
  return v;
}

template <typename F>
Matrix fd_jacobian(F&& f, const Vector& at, double h = 1e-6) {
  const Vector f0 = f(at);
  Matrix J(f0.size(), at.size());
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    Vector up = at, dn = at;
    up[j] += h;
    dn[j] -= h;
    J.col(j) = (f(up) - f(dn)) / (2.0 * h);
  }
  return J;
}

template <typename F>
Vector fd_grad(F&& f, const Vector& at, double h = 1e-6) {
  Vector g(at.size());
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    Vector up = at, dn = at;
    up[j] += h;
    dn[j] -= h;
    g[j] = (f(up) - f(dn)) / (2.0 * h);
  }
  return g;
}

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace

TEST_CASE("kernel evaluations from the registry") {
  CHECK(eval_kernel(DriftKernel::zero(), vec({1.0}), vec({2.0}))[0] == 0.0);
  CHECK(eval_kernel(DriftKernel::attract(1.0), vec({0.0}), vec({2.0}))[0] == 2.0);
  CHECK(eval_kernel(DriftKernel::factored_affine(0.0, 1.0), vec({3.0}), vec({2.0}))[0] == 6.0);

  const auto k = DriftKernel::from_name("local_plus_attract", {0.5, 2.0, 0, 0, LocalPotential::kLinear});
  CHECK(k.family() == KernelFamily::kLocalPlusAttract);
  CHECK(kernel_family_from_string(to_string(KernelFamily::kFactoredAffine)) == KernelFamily::kFactoredAffine);
  CHECK_THROWS_AS(DriftKernel::from_name("repel", {}), UnimplementedKernel);
  CHECK_THROWS_AS(local_potential_from_string("quartic"), InvalidArgument);
}

TEST_CASE("factored kernel is h(x) times y componentwise") {
  const auto k = DriftKernel::factored_affine(0.4, -1.5);
  const Vector x = vec({0.3, -2.0}), y = vec({1.7, 0.25});
  const Vector b = k.eval(x, y);
  for (int c = 0; c < 2; ++c) CHECK(b[c] == (0.4 - 1.5 * x[c]) * y[c]);
}

TEST_CASE("kernel derivatives agree with finite differences") {
  for (const auto& k : all_kernels()) {
    CAPTURE(to_string(k.family()));
    for (int trial = 0; trial < 20; ++trial) {
      const Vector x = random_vec(17, 2 * trial, 2), y = random_vec(17, 2 * trial + 1, 2);
      const auto fx = [&](const Vector& v) { return k.eval(v, y); };
      const auto fy = [&](const Vector& v) { return k.eval(x, v); };
      CHECK(rel(k.jac1(x, y), fd_jacobian(fx, x)) < 1e-6);
      CHECK(rel(k.jac2(x, y), fd_jacobian(fy, y)) < 1e-6);
      CHECK(k.div1(x, y) == doctest::Approx(k.jac1(x, y).trace()).epsilon(1e-12));
      CHECK(k.div2(x, y) == doctest::Approx(k.jac2(x, y).trace()).epsilon(1e-12));

      const auto d1x = [&](const Vector& v) { return k.div1(v, y); };
      const auto d1y = [&](const Vector& v) { return k.div1(x, v); };
      const auto d2x = [&](const Vector& v) { return k.div2(v, y); };
      CHECK(rel(k.grad_x_div1(x, y), fd_grad(d1x, x)) < 1e-6);
      CHECK(rel(k.grad_y_div1(x, y), fd_grad(d1y, y)) < 1e-6);
      CHECK(rel(k.grad_x_div2(x, y), fd_grad(d2x, x)) < 1e-6);
      CHECK(k.eval(x, y).allFinite());
    }
  }
}

TEST_CASE("mean-field drift and divergence") {
  const auto mu_d = [](double a) { return EmpiricalMeasure::dirac(vec({a})); };
  CHECK(meanfield_drift(DriftKernel::attract(1.0), vec({0.0}), mu_d(0.0))[0] == 0.0);
  CHECK(meanfield_drift(DriftKernel::attract(2.0), vec({1.0}), mu_d(3.0))[0] == 4.0);

  Matrix s(2, 1);
  s << 1.0, 3.0;
  const auto half = EmpiricalMeasure::uniform(s);
  CHECK(meanfield_drift(DriftKernel::factored_affine(0.0, 1.0), vec({2.0}), half)[0] == 4.0);

  CHECK(meanfield_divergence(DriftKernel::zero(), vec({0.4}), half) == 0.0);
  CHECK(meanfield_divergence(DriftKernel::attract(1.0), vec({-3.0}), half) == -1.0);
  const auto dw = DriftKernel::local_plus_attract(LocalPotential::kDoubleWell, 0.0, 0.0);
  CHECK(meanfield_divergence(dw, vec({0.0}), mu_d(0.0)) == 1.0);

  // Affine in y: the mean-field drift is the weighted average of pairwise drifts.
  Matrix cloud(5, 2);
  for (int i = 0; i < 5; ++i) cloud.row(i) = random_vec(3, i, 2).transpose();
  const auto mu = EmpiricalMeasure::uniform(cloud);
  const Vector x = vec({0.2, -0.7});
  for (const auto& k : all_kernels()) {
    Vector avg = Vector::Zero(2);
    for (int i = 0; i < 5; ++i) avg += k.eval(x, cloud.row(i).transpose()) / 5.0;
    CHECK((meanfield_drift(k, x, mu) - avg).norm() < 1e-14);
  }
}

TEST_CASE("particle drift and exact divergence") {
  const auto att = DriftKernel::attract(1.0);
  Matrix one(1, 1);
  one << 0.7;
  CHECK(particle_drift(att, one)(0, 0) == 0.0);

  Matrix two(2, 1);
  two << 0.0, 2.0;
  const Matrix F = particle_drift(att, two);
  CHECK(F(0, 0) == 1.0);
  CHECK(F(1, 0) == -1.0);
  CHECK(particle_divergence(att, two) == doctest::Approx(-1.0));
  CHECK(particle_divergence(DriftKernel::zero(), two) == 0.0);

  Matrix same(3, 1);
  same << 0.4, 0.4, 0.4;
  const auto fac = DriftKernel::factored_affine(0.3, -0.8);
  const Matrix Fs = particle_drift(fac, same);
  for (int i = 0; i < 3; ++i) CHECK(Fs(i, 0) == doctest::Approx(fac.eval(vec({0.4}), vec({0.4}))[0]));

  for (const auto& k : all_kernels()) {
    const int N = 4, d = 2;
    Matrix X(N, d);
    for (int i = 0; i < N; ++i) X.row(i) = random_vec(9, i, d).transpose();
    const auto flat_drift = [&](const Vector& v) {
      const Matrix Y = unflatten(v, N, d);
      return flatten(particle_drift(k, Y));
    };
    const Matrix J = fd_jacobian(flat_drift, flatten(X));
    CHECK(particle_divergence(k, X) == doctest::Approx(J.trace()).epsilon(1e-6));
  }
}

TEST_CASE("empirical measures") {
  CHECK(measure_mean(EmpiricalMeasure::dirac(vec({2.5})))[0] == 2.5);
  Matrix s(2, 1);
  s << 0.0, 2.0;
  CHECK(measure_mean(EmpiricalMeasure::uniform(s))[0] == 1.0);
  Matrix t(3, 1);
  t << 1.0, 2.0, 3.0;
  CHECK(measure_mean(EmpiricalMeasure::uniform(t))[0] == doctest::Approx(2.0));

  CHECK_THROWS_AS(EmpiricalMeasure(s, vec({0.5, 0.6})), InvalidArgument);
  CHECK_THROWS_AS(EmpiricalMeasure(s, vec({1.0})), InvalidArgument);
  CHECK_THROWS_AS(EmpiricalMeasure(Matrix(0, 1), Vector(0)), InvalidArgument);
}

TEST_CASE("wasserstein distance in one dimension") {
  const auto pts = [](std::initializer_list<double> xs) {
    Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
    Eigen::Index i = 0;
    for (double x : xs) m(i++, 0) = x;
    return EmpiricalMeasure::uniform(m);
  };
  const auto a = pts({0.3, -1.2, 4.0});
  CHECK(wasserstein2_1d(a, a) == 0.0);
  CHECK(wasserstein2_1d(pts({0.0}), pts({2.0})) == 2.0);
  CHECK(wasserstein2_1d(pts({0.0, 1.0}), pts({-0.4, 0.6})) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(wasserstein2_bruteforce(a, a) == 0.0);

  Matrix p(1, 2), q(1, 2);
  p << 0.0, 0.0;
  q << 3.0, 4.0;
  CHECK(wasserstein2_bruteforce(EmpiricalMeasure::uniform(p), EmpiricalMeasure::uniform(q)) ==
        doctest::Approx(5.0));

  // Unequal sizes: {0, 1} vs the single atom 0.5 is 0.5.
  CHECK(wasserstein2_1d(pts({0.0, 1.0}), pts({0.5})) == doctest::Approx(0.5));

  Matrix two_d(2, 2);
  two_d << 0, 1, 2, 3;
  CHECK_THROWS_AS(wasserstein2_1d(EmpiricalMeasure::uniform(two_d), EmpiricalMeasure::uniform(two_d)),
                  UnsupportedDimension);
}

TEST_CASE("model validation names the field") {
  ModelSpec m = mptp::testing::flat();
  CHECK_NOTHROW(m.validate());
  m.sigma = -1.0;
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("model.sigma"), InvalidArgument);
  m = mptp::testing::flat();
  m.xT[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("model.xT"), InvalidArgument);
  m = mptp::testing::flat();
  m.x0 = vec({0.0, 1.0});
  CHECK_THROWS_AS(m.validate(), InvalidArgument);
}
