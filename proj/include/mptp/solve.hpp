#pragma once

#include "mptp/action.hpp"
#include "mptp/errors.hpp"
#include "mptp/grid.hpp"
#include "mptp/model.hpp"
#include "mptp/pmp.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

namespace mptp {

enum class DescentMethod {
  kGradientDescent,    // H1-preconditioned steepest descent
  kConjugateGradient,  // Polak-Ribiere+ on the same preconditioned gradient
  kNewton,             // finite-difference block-tridiagonal Hessian, Levenberg shift
};

std::string_view to_string(DescentMethod method);
DescentMethod descent_method_from_string(std::string_view name);

struct SolverOptions {
  int max_iters = 20000;
  double grad_tol = 1e-8;  // on sqrt(sum_k |dS/dphi_k|^2 / dt)
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double initial_step = 1.0;
  DescentMethod method = DescentMethod::kNewton;

  // Shooting.
  double newton_tol = 1e-10;  // on the terminal miss
  int max_newton_iters = 50;
  double fd_step = 1e-6;  // central differences in p0

  void validate() const;
};

struct SolveDiagnostics {
  int iterations = 0;
  double grad_norm = 0.0;      // direct solver
  double terminal_miss = 0.0;  // shooting
  bool converged = false;
  std::vector<double> action_history;    // one entry per accepted iterate
  std::vector<double> residual_history;  // shooting: terminal miss per Newton step
};

struct MptpSolution {
  PathGrid path;
  // Cell controls recovered from the path (control_from_path), last row repeated.
  ControlSignal control;
  std::optional<CostateTrajectory> costate;
  // Shooting only: node controls sigma p_k, the zero of the RK4 residual.
  std::optional<ControlSignal> node_control;
  ActionReport action;
  SolveDiagnostics diagnostics;
};

// Thrown when an iteration cap is hit; `best` is the lowest-action (direct)
// or smallest-miss (shooting) iterate seen.
class SolverNonConvergence : public NonConvergence {
 public:
  SolverNonConvergence(const std::string& what, MptpSolution best)
      : NonConvergence(what), best_(std::make_shared<MptpSolution>(std::move(best))) {}
  const MptpSolution& best() const { return *best_; }

 private:
  std::shared_ptr<MptpSolution> best_;
};

struct MeanfieldPath {};
struct ParticlePaths {
  int n_particles = 1;
};
using PathTarget = std::variant<MeanfieldPath, ParticlePaths>;

/// Direct minimisation of the discretised action over interior nodes.
/// Without `init` the start is the straight line x0 -> xT (replicated per
/// particle). With `init` its first and last rows are the fixed endpoints, so
/// particles may start from different points.
MptpSolution minimize_action_direct(const ModelSpec& spec, int M,
                                    const std::optional<PathGrid>& init, const SolverOptions& opts,
                                    const PathTarget& target = MeanfieldPath{});

/// Local minima from `n_starts` perturbed straight lines (start 0 is the plain
/// line), deduplicated and sorted by ascending action.
std::vector<MptpSolution> multistart_direct(const ModelSpec& spec, int M, int n_starts,
                                            std::uint64_t seed, const SolverOptions& opts);

/// Newton shooting on p(0) for the coupled state/costate system with
/// theta = sigma p, RK4 on M steps. Default guess (xT - x0) / (sigma^2 T).
MptpSolution shooting_mptp(const ModelSpec& spec, int M, const std::optional<Vector>& p0_init,
                           const SolverOptions& opts,
                           const TerminalCondition& terminal = PinnedTerminal{});

struct CrossValidation {
  double path_gap = 0.0;     // sup norm
  double control_gap = 0.0;  // sup norm of the recovered cell controls
  double action_gap = 0.0;
  MptpSolution direct;
  MptpSolution shooting;
};

CrossValidation cross_validate(const ModelSpec& spec, int M, const SolverOptions& opts);

/// theta_k = ((phi_{k+1} - phi_k)/dt - f(m_k, delta_{m_k})) / sigma, last row repeated.
ControlSignal control_from_path(const ModelSpec& spec, const PathGrid& path);

/// Symmetrised particle control: per-particle cell controls averaged over i.
ControlSignal control_from_particle_paths(const ModelSpec& spec, int n_particles,
                                          const PathGrid& path);

/// Terminal costate that makes the last cell of the midpoint-adjoint residual
/// vanish for `control`; with it, Q of a stationary path is zero on every cell.
Vector stationary_terminal_costate(const ModelSpec& spec, const PathGrid& path,
                                   const ControlSignal& control);

// L2 norm of the functional derivative behind grad_tol.
double gradient_norm(const Matrix& grad, double dt);

}  // namespace mptp
