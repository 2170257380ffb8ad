#include "doctest.h"
#include "support.hpp"

#include "mptp/errors.hpp"
#include "mptp/pmp.hpp"
#include "mptp/solve.hpp"

#include <Eigen/SVD>

using namespace mptp;
using namespace mptp::testing;

namespace {

EmpiricalMeasure dirac(double a) { return EmpiricalMeasure::dirac(vec({a})); }

ControlSignal constant(double T, int M, double v) { return ControlSignal::constant(T, M, vec({v})); }

}  // namespace

TEST_CASE("hamiltonian by substitution") {
  CHECK(hamiltonian(flat(), vec({0.3}), dirac(0.3), vec({2.0}), vec({0.0})) == 0.0);
  CHECK(hamiltonian(flat(), vec({0.0}), dirac(0.0), vec({1.0}), vec({1.0})) == 0.5);
  CHECK(hamiltonian(model(DriftKernel::attract(1.0)), vec({0.0}), dirac(2.0), vec({1.0}), vec({0.0})) == 2.5);

  CHECK(hamiltonian_grad_theta(flat(), vec({0.0}), vec({0.0}))[0] == 0.0);
  CHECK(hamiltonian_grad_theta(flat(), vec({3.0}), vec({3.0}))[0] == 0.0);
  CHECK(hamiltonian_grad_theta(model(DriftKernel::zero(), 2.0), vec({1.0}), vec({0.0}))[0] == 2.0);
}

TEST_CASE("hamiltonian gradient matches finite differences in theta") {
  const ModelSpec spec = in_2d(factored(), vec({0.1, 0.4}), vec({1.0, -1.0}));
  Matrix cloud(3, 2);
  cloud << 0.1, 0.2, -0.5, 0.9, 1.2, -0.3;
  const auto mu = EmpiricalMeasure::uniform(cloud);
  const Vector x = vec({0.4, -0.2}), p = vec({0.7, -1.1}), th = vec({0.3, 0.5});
  const double h = 1e-6;
  for (int c = 0; c < 2; ++c) {
    Vector up = th, dn = th;
    up[c] += h;
    dn[c] -= h;
    const double fd = (hamiltonian(spec, x, mu, p, up) - hamiltonian(spec, x, mu, p, dn)) / (2 * h);
    CHECK(hamiltonian_grad_theta(spec, p, th)[c] == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("costate right-hand side") {
  CHECK(costate_rhs(flat(), vec({0.4}), dirac(0.4), vec({3.0}), vec({0.0}))[0] == 0.0);

  const ModelSpec att = model(DriftKernel::attract(1.0));
  const Matrix p1 = Matrix::Constant(1, 1, 2.5);
  const Vector avg = costate_population_average(att.kernel, dirac(0.7), p1);
  CHECK(costate_rhs(att, vec({0.7}), dirac(0.7), vec({2.5}), avg)[0] == doctest::Approx(0.0));

  // h(x) = -x at x = m = p = 1: -d_x f p = 1, measure term -h p = 1, and the
  // divergence penalty's measure derivative contributes -1/2.
  const ModelSpec fac = model(DriftKernel::factored_affine(0.0, -1.0));
  const Vector favg = costate_population_average(fac.kernel, dirac(1.0), Matrix::Constant(1, 1, 1.0));
  CHECK(favg[0] == -1.0);
  CHECK(costate_rhs(fac, vec({1.0}), dirac(1.0), vec({1.0}), favg)[0] == doctest::Approx(1.5));
}

TEST_CASE("lifted finite-difference oracle for the costate equation") {
  // For the particle Hamiltonian H_N(X, P) = sum_i H(x^i, mu_X, p^i), the
  // conjugate equation is pdot^i = -dH_N/dx^i, which the mean-field rhs with
  // the empirical measure must reproduce.
  for (const auto& spec : {factored(), doublewell(0.6), model(DriftKernel::attract(0.9))}) {
    const int N = 4;
    Matrix X(N, 1), P(N, 1);
    X << 0.1, -0.6, 0.8, 0.35;
    P << 0.5, -1.2, 0.3, 0.9;
    const Vector th = vec({0.2});
    const auto HN = [&](const Matrix& Y) {
      const auto mu = EmpiricalMeasure::uniform(Y);
      double s = 0.0;
      for (int i = 0; i < N; ++i) s += hamiltonian(spec, Y.row(i).transpose(), mu, P.row(i).transpose(), th);
      return s;
    };
    const auto mu = EmpiricalMeasure::uniform(X);
    const Vector avg = costate_population_average(spec.kernel, mu, P);
    for (int i = 0; i < N; ++i) {
      Matrix up = X, dn = X;
      up(i, 0) += 1e-6;
      dn(i, 0) -= 1e-6;
      const double fd = -(HN(up) - HN(dn)) / 2e-6;
      CHECK(costate_rhs(spec, X.row(i).transpose(), mu, P.row(i).transpose(), avg)[0] ==
            doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("mean-field residual on closed-form controls") {
  const ModelSpec spec = flat();
  const double rho = 1e6;
  SUBCASE("penalty optimum of the flat problem") {
    const auto q = residual_meanfield(spec, constant(1.0, 50, rho / (1.0 + rho)), PenaltyTerminal{rho});
    CHECK(q.norm < 1e-3);
    const auto q1 = residual_meanfield(spec, constant(1.0, 50, 1.0), PenaltyTerminal{rho});
    CHECK(q1.norm == doctest::Approx(std::sqrt(51.0 / 50.0)).epsilon(1e-9));  // every node has |Q| = 1
  }
  SUBCASE("suboptimal control") {
    CHECK(residual_meanfield(spec, constant(1.0, 50, 0.0), PenaltyTerminal{rho}).norm > 1.0);
  }
  SUBCASE("shooting control is stationary") {
    const auto sol = shooting_mptp(ou(), 200, std::nullopt, SolverOptions{});
    const Vector pT = sol.costate->values.bottomRows(1).transpose();
    CHECK(residual_meanfield(ou(), *sol.node_control, PinnedTerminal{pT}).norm < 1e-8);
  }
  SUBCASE("the OU closed-form control is stationary up to discretisation error") {
    ControlSignal th = constant(1.0, 200, 0.0);
    for (int k = 0; k <= 200; ++k) th.values(k, 0) = std::exp(k / 200.0) / std::sinh(1.0);
    const auto q = residual_meanfield(ou(), th, PinnedTerminal{vec({std::exp(1.0) / std::sinh(1.0)})});
    CHECK(q.norm < 1e-8);
  }
}

TEST_CASE("particle residual") {
  const ModelSpec spec = doublewell(0.6);
  ControlSignal th = constant(5.0, 60, 0.0);
  for (int k = 0; k <= 60; ++k) th.values(k, 0) = 0.4 * std::sin(0.1 * k);
  const TerminalCondition pen = PenaltyTerminal{50.0};

  SUBCASE("one noiseless particle collapses to the mean field") {
    const auto q = residual_meanfield(spec, th, pen);
    const auto q1 = residual_particles(spec, th, 1, 3, NoiseMode::kOdeRandomInit, pen);
    CHECK((q1.values - q.values).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("identical noiseless particles stay collapsed") {
    const auto q = residual_meanfield(spec, th, pen);
    const auto q8 = residual_particles(spec, th, 8, 3, NoiseMode::kOdeRandomInit, pen);
    CHECK((q8.values - q.values).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("small noise is a small perturbation") {
    ModelSpec quiet = spec;
    quiet.sigma = 1e-4;
    const TerminalCondition pin = PinnedTerminal{vec({1.0})};
    const auto q = residual_meanfield(quiet, th, pin);
    const auto qn = residual_particles(quiet, th, 16, 4, NoiseMode::kSde, pin);
    CHECK(ResidualCurve::from_values(q.T, qn.values - q.values).norm < 1e-3 * std::max(1.0, q.norm));
  }
  SUBCASE("seeded and reproducible") {
    const auto a = residual_particles(spec, th, 16, 4, NoiseMode::kSde, pen);
    const auto b = residual_particles(spec, th, 16, 4, NoiseMode::kSde, pen);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("residual jacobian") {
  SUBCASE("flat model: -I plus a rank-one terminal coupling") {
    const ControlSignal th = constant(1.0, 20, 0.9);
    const Matrix dq = residual_jacobian(flat(), th, MeanfieldTarget{}, PenaltyTerminal{100.0});
    const Matrix coupling = dq + Matrix::Identity(21, 21);
    for (int r = 1; r < 21; ++r) CHECK((coupling.row(r) - coupling.row(0)).norm() < 1e-6);
    CHECK(coupling.norm() > 1.0);

    const Matrix pinned = residual_jacobian(flat(), th, MeanfieldTarget{}, PinnedTerminal{vec({1.0})});
    CHECK((pinned + Matrix::Identity(21, 21)).norm() < 1e-8);
  }
  SUBCASE("one noiseless particle matches the mean field") {
    const ModelSpec spec = doublewell(0.4);
    ControlSignal th = constant(5.0, 16, 0.2);
    const TerminalCondition pen = PenaltyTerminal{10.0};
    const Matrix dq = residual_jacobian(spec, th, MeanfieldTarget{}, pen);
    const Matrix dq1 = residual_jacobian(spec, th, ParticleTarget{1, 7, NoiseMode::kOdeRandomInit}, pen);
    CHECK((dq - dq1).norm() < 1e-4);
  }
  SUBCASE("linearisation predicts small perturbations") {
    const ModelSpec spec = doublewell(0.4);
    ControlSignal th = constant(5.0, 16, 0.2);
    const TerminalCondition pen = PenaltyTerminal{10.0};
    const Matrix dq = residual_jacobian(spec, th, MeanfieldTarget{}, pen);
    ControlSignal moved = th;
    Vector delta(17);
    for (int k = 0; k < 17; ++k) delta[k] = 1e-4 * std::cos(0.7 * k);
    moved.values.col(0) += delta;
    const Vector dQ = flatten(residual_meanfield(spec, moved, pen).values - residual_meanfield(spec, th, pen).values);
    CHECK((dQ - dq * delta).norm() < 1e-3 * dQ.norm());
  }
  SUBCASE("linear model is nonsingular") {
    const auto sol = shooting_mptp(ou(), 40, std::nullopt, SolverOptions{});
    const Matrix dq = residual_jacobian(ou(), *sol.node_control, MeanfieldTarget{}, PenaltyTerminal{1e6});
    Eigen::BDCSVD<Eigen::MatrixXd> svd(dq);
    CHECK(svd.singularValues().allFinite());
    CHECK(svd.singularValues().minCoeff() > 1e-8 * svd.singularValues().maxCoeff());
  }
}

TEST_CASE("residual input checks") {
  const ControlSignal th = constant(2.0, 10, 0.0);
  CHECK_THROWS_AS(residual_meanfield(flat(), th, PenaltyTerminal{1.0}), InvalidArgument);
  CHECK_THROWS_AS(residual_particles(flat(), constant(1.0, 10, 0.0), 0, 1, NoiseMode::kSde, PenaltyTerminal{}),
                  InvalidArgument);
  CHECK_THROWS_AS(residual_meanfield(flat(), constant(1.0, 10, 0.0), PinnedTerminal{vec({1.0, 2.0})}),
                  InvalidArgument);
}

TEST_CASE("residual curve norm") {
  Matrix v(3, 1);
  v << 1.0, 2.0, 2.0;
  CHECK(ResidualCurve::from_values(1.0, v).norm == doctest::Approx(std::sqrt(0.5 * 9.0)));
}
