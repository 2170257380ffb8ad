#include "mptp/pmp.hpp"

#include "empirical_system.hpp"
#include "mptp/errors.hpp"
#include "mptp/rng.hpp"
#include "mptp/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace mptp {

double hamiltonian(const ModelSpec& spec, const Vector& x, const EmpiricalMeasure& mu,
                   const Vector& p, const Vector& theta) {
  const Vector f = meanfield_drift(spec.kernel, x, mu);
  return (f + spec.sigma * theta).dot(p) - 0.5 * theta.squaredNorm() -
         0.5 * meanfield_divergence(spec.kernel, x, mu);
}

Vector hamiltonian_grad_theta(const ModelSpec& spec, const Vector& p, const Vector& theta) {
  if (p.size() != theta.size()) throw InvalidArgument("hamiltonian_grad_theta: dimension mismatch");
  return spec.sigma * p - theta;
}

Vector costate_population_average(const DriftKernel& kernel, const EmpiricalMeasure& mu,
                                  const Matrix& costates) {
  if (costates.rows() != mu.size() || costates.cols() != mu.dim()) {
    throw InvalidArgument("costate_population_average: one costate row per sample required");
  }
  const Eigen::Index d = mu.dim();
  Vector avg = Vector::Zero(d);
  switch (kernel.family()) {
    case KernelFamily::kZero:
      return avg;
    case KernelFamily::kAttract:
    case KernelFamily::kLocalPlusAttract:
      return (mu.weights().transpose() * costates).transpose();
    case KernelFamily::kFactoredAffine:
      for (Eigen::Index k = 0; k < mu.size(); ++k) {
        for (Eigen::Index c = 0; c < d; ++c) {
          avg[c] += mu.weights()[k] * kernel.coeffs(mu.samples()(k, c)).slope * costates(k, c);
        }
      }
      return avg;
  }
  throw UnimplementedKernel("costate_population_average: kernel family not in registry");
}

Vector costate_rhs(const ModelSpec& spec, const Vector& x, const EmpiricalMeasure& mu,
                   const Vector& p, const Vector& mean_costate) {
  const auto& kernel = spec.kernel;
  const Vector m = measure_mean(mu);
  const Matrix dfdx = kernel.jac1(x, m);
  const Vector div_grad = kernel.grad_x_div1(x, m);

  // E~[grad_y div1(X~, x)]
  Vector div_measure = Vector::Zero(x.size());
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    div_measure += mu.weights()[k] * kernel.grad_y_div1(mu.samples().row(k).transpose(), x);
  }

  Vector coupling;
  switch (kernel.family()) {
    case KernelFamily::kZero:
      coupling = Vector::Zero(x.size());
      break;
    case KernelFamily::kAttract:
    case KernelFamily::kLocalPlusAttract:
      coupling = kernel.params().kappa * mean_costate;
      break;
    case KernelFamily::kFactoredAffine:
      coupling = mean_costate;
      break;
    default:
      throw UnimplementedKernel("costate_rhs: kernel family not in registry");
  }
  const Vector measure_term = coupling - 0.5 * div_measure;
  return -dfdx.transpose() * p + 0.5 * div_grad - measure_term;
}

ResidualCurve ResidualCurve::from_values(double T, Matrix values) {
  ResidualCurve rc;
  rc.T = T;
  rc.values = std::move(values);
  const double dt = T / static_cast<double>(rc.values.rows() - 1);
  CompensatedSum s;
  for (Eigen::Index k = 0; k < rc.values.rows(); ++k) s.add(dt * rc.values.row(k).squaredNorm());
  rc.norm = std::sqrt(s.value());
  return rc;
}

Vector flatten(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

namespace {

void check_control(const ModelSpec& spec, const ControlSignal& theta) {
  if (theta.values.rows() < 2) throw InvalidArgument("control needs at least two nodes");
  if (theta.values.cols() != spec.d) throw InvalidArgument("control width must equal d");
  if (std::abs(theta.T - spec.T) > 1e-12 * std::max(1.0, spec.T)) {
    throw InvalidArgument("control horizon does not match model.T");
  }
  if (!theta.values.allFinite()) throw InvalidArgument("control has non-finite entries");
}

void check_terminal(const TerminalCondition& terminal, Eigen::Index width) {
  if (const auto* pen = std::get_if<PenaltyTerminal>(&terminal)) {
    if (!(pen->rho > 0.0)) throw InvalidArgument("penalty terminal: rho must be > 0");
  } else {
    const auto& pin = std::get<PinnedTerminal>(terminal);
    if (pin.costate.size() != width) throw InvalidArgument("pinned terminal costate has wrong size");
  }
}

Vector terminal_costate(const TerminalCondition& terminal, const Vector& x_end, const Vector& target) {
  if (const auto* pen = std::get_if<PenaltyTerminal>(&terminal)) return -pen->rho * (x_end - target);
  return std::get<PinnedTerminal>(terminal).costate;
}

// Value at t_k + dt/2 of the cubic through the four nodes nearest to it.
Eigen::RowVectorXd half_step_value(const Matrix& nodes, int k) {
  const int last = static_cast<int>(nodes.rows()) - 1;
  if (last < 3) return 0.5 * (nodes.row(k) + nodes.row(k + 1));
  const int start = std::clamp(k - 1, 0, last - 3);
  const double t = k + 0.5;
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(nodes.cols());
  for (int a = 0; a < 4; ++a) {
    double w = 1.0;
    for (int b = 0; b < 4; ++b) {
      if (b != a) w *= (t - (start + b)) / static_cast<double>(a - b);
    }
    out += w * nodes.row(start + a);
  }
  return out;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalFailure(std::string("non-finite values in ") + what);
}

// --- mean-field, RK4 --------------------------------------------------------

Vector dirac_drift(const ModelSpec& spec, const Vector& x) {
  return meanfield_drift(spec.kernel, x, EmpiricalMeasure::dirac(x));
}

Vector dirac_costate(const ModelSpec& spec, const Vector& x, const Vector& p) {
  const auto mu = EmpiricalMeasure::dirac(x);
  const Vector avg = costate_population_average(spec.kernel, mu, p.transpose());
  return costate_rhs(spec, x, mu, p, avg);
}

AdjointSolution meanfield_rk4(const ModelSpec& spec, const ControlSignal& theta,
                              const TerminalCondition& terminal) {
  const int M = theta.intervals();
  const double h = theta.dt();
  const double sigma = spec.sigma;
  AdjointSolution sol;
  sol.state.resize(M + 1, spec.d);
  sol.costate.resize(M + 1, spec.d);

  Vector x = spec.x0;
  sol.state.row(0) = x.transpose();
  for (int k = 0; k < M; ++k) {
    const Vector ua = sigma * theta.values.row(k).transpose();
    const Vector um = sigma * half_step_value(theta.values, k).transpose();
    const Vector ub = sigma * theta.values.row(k + 1).transpose();
    const Vector k1 = dirac_drift(spec, x) + ua;
    const Vector k2 = dirac_drift(spec, x + 0.5 * h * k1) + um;
    const Vector k3 = dirac_drift(spec, x + 0.5 * h * k2) + um;
    const Vector k4 = dirac_drift(spec, x + h * k3) + ub;
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    sol.state.row(k + 1) = x.transpose();
  }
  require_finite(sol.state, "mean-field state");

  Matrix velocity(M + 1, spec.d);
  for (int k = 0; k <= M; ++k) {
    velocity.row(k) =
        (dirac_drift(spec, sol.state.row(k).transpose()) + sigma * theta.values.row(k).transpose())
            .transpose();
  }

  Vector p = terminal_costate(terminal, x, spec.xT);
  sol.costate.row(M) = p.transpose();
  for (int k = M - 1; k >= 0; --k) {
    const Vector xa = sol.state.row(k + 1).transpose();
    const Vector xb = sol.state.row(k).transpose();
    const Vector xm = 0.5 * (xa + xb) + h / 8.0 * (velocity.row(k) - velocity.row(k + 1)).transpose();
    const Vector k1 = dirac_costate(spec, xa, p);
    const Vector k2 = dirac_costate(spec, xm, p - 0.5 * h * k1);
    const Vector k3 = dirac_costate(spec, xm, p - 0.5 * h * k2);
    const Vector k4 = dirac_costate(spec, xb, p - h * k3);
    p -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    sol.costate.row(k) = p.transpose();
  }
  require_finite(sol.costate, "mean-field costate");

  sol.residual = ResidualCurve::from_values(theta.T, sigma * sol.costate - theta.values);
  return sol;
}

// --- mean-field, midpoint rule and its discrete adjoint -----------------------

Matrix total_drift_jacobian(const ModelSpec& spec, const Vector& m) {
  return spec.kernel.jac1(m, m) + spec.kernel.jac2(m, m);
}

Vector total_divergence_gradient(const ModelSpec& spec, const Vector& m) {
  return spec.kernel.grad_x_div1(m, m) + spec.kernel.grad_y_div1(m, m);
}

AdjointSolution meanfield_midpoint(const ModelSpec& spec, const ControlSignal& theta,
                                   const TerminalCondition& terminal) {
  const int M = theta.intervals();
  const double h = theta.dt();
  const double sigma = spec.sigma;
  const auto d = spec.d;
  const Matrix I = Matrix::Identity(d, d);
  AdjointSolution sol;
  sol.state.resize(M + 1, d);
  sol.costate.resize(M + 1, d);

  Vector x = spec.x0;
  sol.state.row(0) = x.transpose();
  for (int k = 0; k < M; ++k) {
    const Vector u = sigma * theta.values.row(k).transpose();
    Vector z = x + h * (spec.kernel.eval(x, x) + u);
    for (int it = 0; it < 60; ++it) {
      const Vector m = 0.5 * (x + z);
      const Vector g = z - x - h * (spec.kernel.eval(m, m) + u);
      const Matrix dg = I - 0.5 * h * total_drift_jacobian(spec, m);
      const Vector step = dg.partialPivLu().solve(g);
      z -= step;
      if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + z.lpNorm<Eigen::Infinity>())) break;
    }
    x = z;
    sol.state.row(k + 1) = x.transpose();
  }
  require_finite(sol.state, "mean-field state");

  std::vector<Matrix> jac(M);
  std::vector<Vector> div_grad(M);
  for (int k = 0; k < M; ++k) {
    const Vector m = 0.5 * (sol.state.row(k) + sol.state.row(k + 1)).transpose();
    jac[k] = total_drift_jacobian(spec, m);
    div_grad[k] = total_divergence_gradient(spec, m);
  }

  // Row k < M holds the cell costate p_{k+1/2}; row M holds p_T.
  const Vector pT = terminal_costate(terminal, x, spec.xT);
  sol.costate.row(M) = pT.transpose();
  Vector rhs = pT - 0.25 * h * div_grad[M - 1];
  Vector p = (I - 0.5 * h * jac[M - 1]).transpose().partialPivLu().solve(rhs);
  sol.costate.row(M - 1) = p.transpose();
  for (int j = M - 1; j >= 1; --j) {
    rhs = (I + 0.5 * h * jac[j]).transpose() * p - 0.25 * h * (div_grad[j - 1] + div_grad[j]);
    p = (I - 0.5 * h * jac[j - 1]).transpose().partialPivLu().solve(rhs);
    sol.costate.row(j - 1) = p.transpose();
  }
  require_finite(sol.costate, "mean-field costate");

  Matrix q(M + 1, d);
  for (int k = 0; k < M; ++k) q.row(k) = sigma * sol.costate.row(k) - theta.values.row(k);
  q.row(M) = q.row(M - 1);
  sol.residual = ResidualCurve::from_values(theta.T, std::move(q));
  return sol;
}

}  // namespace

AdjointSolution solve_adjoint_meanfield(const ModelSpec& spec, const ControlSignal& theta,
                                        const TerminalCondition& terminal, ResidualScheme scheme) {
  check_control(spec, theta);
  check_terminal(terminal, spec.d);
  switch (scheme) {
    case ResidualScheme::kRk4: return meanfield_rk4(spec, theta, terminal);
    case ResidualScheme::kMidpointAdjoint: return meanfield_midpoint(spec, theta, terminal);
  }
  throw InvalidArgument("unknown residual scheme");
}

ResidualCurve residual_meanfield(const ModelSpec& spec, const ControlSignal& theta,
                                 const TerminalCondition& terminal, ResidualScheme scheme) {
  return solve_adjoint_meanfield(spec, theta, terminal, scheme).residual;
}

namespace {

Matrix stack_rows(const std::vector<Matrix>& blocks) {
  const auto n = blocks.front().rows(), d = blocks.front().cols();
  Matrix out(static_cast<Eigen::Index>(blocks.size()), n * d);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::RowVectorXd>(blocks[k].data(), n * d);
  }
  return out;
}

}  // namespace

AdjointSolution solve_adjoint_particles(const ModelSpec& spec, const ControlSignal& theta,
                                        int n_particles, std::uint64_t seed, NoiseMode noise,
                                        const TerminalCondition& terminal) {
  check_control(spec, theta);
  check_terminal(terminal, spec.d);
  if (n_particles < 1) throw InvalidArgument("residual_particles: N must be >= 1");
  const int M = theta.intervals();
  const double h = theta.dt();
  const double sigma = spec.sigma;
  const auto& kernel = spec.kernel;

  std::vector<Matrix> X(M + 1);
  X[0] = sample_initial(spec, n_particles, seed);
  Matrix F, k1, k2, k3, k4;
  if (noise == NoiseMode::kOdeRandomInit) {
    for (int k = 0; k < M; ++k) {
      const Eigen::RowVectorXd ua = sigma * theta.values.row(k);
      const Eigen::RowVectorXd um = sigma * half_step_value(theta.values, k);
      const Eigen::RowVectorXd ub = sigma * theta.values.row(k + 1);
      const Matrix& x = X[k];
      detail::empirical_drift(kernel, x, k1);
      k1.rowwise() += ua;
      detail::empirical_drift(kernel, x + 0.5 * h * k1, k2);
      k2.rowwise() += um;
      detail::empirical_drift(kernel, x + 0.5 * h * k2, k3);
      k3.rowwise() += um;
      detail::empirical_drift(kernel, x + h * k3, k4);
      k4.rowwise() += ub;
      X[k + 1] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  } else {
    const double sqrt_h = std::sqrt(h);
    for (int k = 0; k < M; ++k) {
      detail::empirical_drift(kernel, X[k], F);
      F.rowwise() += sigma * theta.values.row(k);
      X[k + 1] = X[k] + h * F;
      for (int i = 0; i < n_particles; ++i) {
        for (int c = 0; c < spec.d; ++c) {
          X[k + 1](i, c) += sigma * sqrt_h * rng::normal(seed, rng::Purpose::kIncrement, i, k, c);
        }
      }
    }
  }
  for (const auto& x : X) require_finite(x, "particle state");

  // State at half steps for the backward sweep.
  std::vector<Matrix> mid(M);
  if (noise == NoiseMode::kOdeRandomInit) {
    std::vector<Matrix> vel(M + 1);
    for (int k = 0; k <= M; ++k) {
      detail::empirical_drift(kernel, X[k], vel[k]);
      vel[k].rowwise() += sigma * theta.values.row(k);
    }
    for (int k = 0; k < M; ++k) mid[k] = 0.5 * (X[k] + X[k + 1]) + h / 8.0 * (vel[k] - vel[k + 1]);
  } else {
    for (int k = 0; k < M; ++k) mid[k] = 0.5 * (X[k] + X[k + 1]);
  }

  std::vector<Matrix> P(M + 1);
  Matrix PT(n_particles, spec.d);
  for (int i = 0; i < n_particles; ++i) {
    PT.row(i) = terminal_costate(terminal, X[M].row(i).transpose(), spec.xT).transpose();
  }
  P[M] = PT;
  for (int k = M - 1; k >= 0; --k) {
    const Matrix& p = P[k + 1];
    detail::empirical_costate_field(kernel, X[k + 1], p, k1);
    detail::empirical_costate_field(kernel, mid[k], p - 0.5 * h * k1, k2);
    detail::empirical_costate_field(kernel, mid[k], p - 0.5 * h * k2, k3);
    detail::empirical_costate_field(kernel, X[k], p - h * k3, k4);
    P[k] = p - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  for (const auto& p : P) require_finite(p, "particle costate");

  Matrix q(M + 1, spec.d);
  for (int k = 0; k <= M; ++k) q.row(k) = sigma * P[k].colwise().mean() - theta.values.row(k);

  AdjointSolution sol;
  sol.state = stack_rows(X);
  sol.costate = stack_rows(P);
  sol.residual = ResidualCurve::from_values(theta.T, std::move(q));
  return sol;
}

ResidualCurve residual_particles(const ModelSpec& spec, const ControlSignal& theta, int n_particles,
                                 std::uint64_t seed, NoiseMode noise,
                                 const TerminalCondition& terminal) {
  return solve_adjoint_particles(spec, theta, n_particles, seed, noise, terminal).residual;
}

Matrix residual_jacobian(const ModelSpec& spec, const ControlSignal& theta,
                         const ResidualTarget& which, const TerminalCondition& terminal) {
  check_control(spec, theta);
  const auto evaluate = [&](const ControlSignal& th) -> Vector {
    if (std::holds_alternative<MeanfieldTarget>(which)) {
      return flatten(residual_meanfield(spec, th, terminal).values);
    }
    const auto& pt = std::get<ParticleTarget>(which);
    return flatten(residual_particles(spec, th, pt.n_particles, pt.seed, pt.noise, terminal).values);
  };
  const Eigen::Index n = theta.values.size();
  const double step = 1e-5 * (1.0 + theta.values.lpNorm<Eigen::Infinity>());
  Matrix J(n, n);
  ControlSignal probe = theta;
  for (Eigen::Index col = 0; col < n; ++col) {
    double* entry = probe.values.data() + col;
    const double saved = *entry;
    *entry = saved + step;
    const Vector plus = evaluate(probe);
    *entry = saved - step;
    const Vector minus = evaluate(probe);
    *entry = saved;
    J.col(col) = (plus - minus) / (2.0 * step);
  }
  return J;
}

}  // namespace mptp
