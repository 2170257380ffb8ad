#pragma once

#include "mptp/grid.hpp"
#include "mptp/model.hpp"

#include <cstdint>
#include <variant>

namespace mptp {

// H = (f(x, mu) + sigma theta).p - |theta|^2/2 - div_x f(x, mu)/2  (maximised).
double hamiltonian(const ModelSpec& spec, const Vector& x, const EmpiricalMeasure& mu,
                   const Vector& p, const Vector& theta);

// sigma^T p - theta
Vector hamiltonian_grad_theta(const ModelSpec& spec, const Vector& p, const Vector& theta);

/// Population average of costates that the measure term of the conjugate
/// equation needs: E[P~] for the attraction families, E[h(X~) o P~] for
/// factored_affine, zero for kernels without a measure coupling.
/// `costates` has one row per sample of `mu`.
Vector costate_population_average(const DriftKernel& kernel, const EmpiricalMeasure& mu,
                                  const Matrix& costates);

/// Right-hand side of the conjugate equation at (x, mu, p):
///   -[d_x f]^T p + grad_x div_x f / 2 - E~[d_mu H(X~, mu, P~)(x)]
/// where the last term is assembled from `mean_costate`
/// (see costate_population_average) and the measure derivative of the
/// divergence penalty, E~[grad_y div1(X~, x)] / 2.
Vector costate_rhs(const ModelSpec& spec, const Vector& x, const EmpiricalMeasure& mu,
                   const Vector& p, const Vector& mean_costate);

/// Q(theta) or Q_N(theta) on the control grid, with its discrete L2 norm
/// sqrt(sum_k dt |Q_k|^2) over all M+1 nodes.
struct ResidualCurve {
  double T = 1.0;
  Matrix values;
  double norm = 0.0;

  static ResidualCurve from_values(double T, Matrix values);
};

/// How the terminal costate is fixed.
struct PenaltyTerminal {
  double rho = 1e6;  // p_T = -rho (X_T - xT)
};
struct PinnedTerminal {
  Vector costate;  // p_T given, e.g. taken from a shooting solve
};
using TerminalCondition = std::variant<PenaltyTerminal, PinnedTerminal>;

enum class ResidualScheme {
  // Node controls; RK4 forward/backward with 4-point interpolation of theta
  // and Hermite interpolation of the state at half steps.
  kRk4,
  // Cell controls (row k acts on [t_k, t_{k+1}], last row repeats); implicit
  // midpoint state and its exact discrete adjoint. Q_k is then -1/dt times
  // the gradient of the midpoint-rule cost, matching om_action_meanfield.
  kMidpointAdjoint,
};

struct AdjointSolution {
  Matrix state;    // (M+1) x D
  Matrix costate;  // (M+1) x D
  ResidualCurve residual;
};

/// Mean-field residual along the Dirac law delta_{phi_t}: state from x0 under
/// phi' = f(phi, delta_phi) + sigma theta, costate backward from the terminal
/// condition, Q_t = sigma^T p_t - theta_t.
AdjointSolution solve_adjoint_meanfield(const ModelSpec& spec, const ControlSignal& theta,
                                        const TerminalCondition& terminal,
                                        ResidualScheme scheme = ResidualScheme::kRk4);

ResidualCurve residual_meanfield(const ModelSpec& spec, const ControlSignal& theta,
                                 const TerminalCondition& terminal,
                                 ResidualScheme scheme = ResidualScheme::kRk4);

enum class NoiseMode {
  kSde,            // Euler-Maruyama particle paths, costates integrated pathwise
  kOdeRandomInit,  // noiseless RK4 from mu0-sampled initial conditions
};

/// N particles under the shared control; per-particle terminal condition;
/// Q_N = (1/N) sum_i (sigma^T p^i - theta) = sigma^T mean(p) - theta.
AdjointSolution solve_adjoint_particles(const ModelSpec& spec, const ControlSignal& theta,
                                        int n_particles, std::uint64_t seed, NoiseMode noise,
                                        const TerminalCondition& terminal);

ResidualCurve residual_particles(const ModelSpec& spec, const ControlSignal& theta, int n_particles,
                                 std::uint64_t seed, NoiseMode noise,
                                 const TerminalCondition& terminal);

struct MeanfieldTarget {};
struct ParticleTarget {
  int n_particles = 1;
  std::uint64_t seed = 0;
  NoiseMode noise = NoiseMode::kSde;
};
using ResidualTarget = std::variant<MeanfieldTarget, ParticleTarget>;

/// Central finite-difference Jacobian of the flattened residual (node-major,
/// size (M+1)*d square) with step 1e-5 * (1 + max|theta|). For Q_N every
/// column pair reuses the same noise (common random numbers).
Matrix residual_jacobian(const ModelSpec& spec, const ControlSignal& theta,
                         const ResidualTarget& which, const TerminalCondition& terminal);

// Flattening helpers (node-major, component-minor).
Vector flatten(const Matrix& m);
Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace mptp
