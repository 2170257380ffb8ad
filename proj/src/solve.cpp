#include "mptp/solve.hpp"

#include "empirical_system.hpp"
#include "mptp/rng.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <functional>
#include <cmath>
#include <numbers>

namespace mptp {

std::string_view to_string(DescentMethod method) {
  switch (method) {
    case DescentMethod::kGradientDescent: return "gd";
    case DescentMethod::kConjugateGradient: return "ncg";
    case DescentMethod::kNewton: return "newton";
  }
  return "unknown";
}

DescentMethod descent_method_from_string(std::string_view name) {
  if (name == "gd") return DescentMethod::kGradientDescent;
  if (name == "ncg") return DescentMethod::kConjugateGradient;
  if (name == "newton") return DescentMethod::kNewton;
  throw InvalidArgument("solver.method: expected 'gd', 'ncg' or 'newton', got '" + std::string(name) +
                        "'");
}

void SolverOptions::validate() const {
  if (max_iters < 1) throw InvalidArgument("solver.max_iters: must be >= 1");
  if (!(grad_tol > 0.0 && grad_tol < 1.0)) throw InvalidArgument("solver.grad_tol: must be in (0, 1)");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidArgument("solver.armijo_c: must be in (0, 1)");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw InvalidArgument("solver.backtrack: must be in (0, 1)");
  if (!(initial_step > 0.0) || !std::isfinite(initial_step)) {
    throw InvalidArgument("solver.initial_step: must be finite and > 0");
  }
  if (!(newton_tol > 0.0 && newton_tol < 1.0)) throw InvalidArgument("solver.newton_tol: must be in (0, 1)");
  if (max_newton_iters < 1) throw InvalidArgument("solver.max_newton_iters: must be >= 1");
  if (!(fd_step > 0.0 && fd_step < 1.0)) throw InvalidArgument("solver.fd_step: must be in (0, 1)");
}

double gradient_norm(const Matrix& grad, double dt) {
  return std::sqrt(grad.squaredNorm() / dt);
}

ControlSignal control_from_path(const ModelSpec& spec, const PathGrid& path) {
  const int M = path.intervals();
  if (M < 1 || path.width() != spec.d) throw InvalidArgument("control_from_path: path shape mismatch");
  const double dt = path.dt();
  ControlSignal c;
  c.T = path.T;
  c.values.resize(M + 1, spec.d);
  for (int k = 0; k < M; ++k) {
    const Vector a = path.node(k), b = path.node(k + 1);
    const Vector m = 0.5 * (a + b);
    c.values.row(k) = (((b - a) / dt - spec.kernel.eval(m, m)) / spec.sigma).transpose();
  }
  c.values.row(M) = c.values.row(M - 1);
  return c;
}

ControlSignal control_from_particle_paths(const ModelSpec& spec, int n_particles,
                                          const PathGrid& path) {
  const int M = path.intervals();
  if (n_particles < 1 || M < 1 || path.width() != n_particles * spec.d) {
    throw InvalidArgument("control_from_particle_paths: path shape mismatch");
  }
  const double dt = path.dt();
  ControlSignal c;
  c.T = path.T;
  c.values.resize(M + 1, spec.d);
  Matrix F;
  for (int k = 0; k < M; ++k) {
    const Matrix a = particle_block(path, k, n_particles);
    const Matrix b = particle_block(path, k + 1, n_particles);
    detail::empirical_drift(spec.kernel, 0.5 * (a + b), F);
    c.values.row(k) = (((b - a) / dt - F) / spec.sigma).colwise().mean();
  }
  c.values.row(M) = c.values.row(M - 1);
  return c;
}

Vector stationary_terminal_costate(const ModelSpec& spec, const PathGrid& path,
                                   const ControlSignal& control) {
  const int M = path.intervals();
  if (M < 1 || path.width() != spec.d || control.values.rows() != M + 1) {
    throw InvalidArgument("stationary_terminal_costate: path/control shape mismatch");
  }
  const double dt = path.dt();
  const Vector m = 0.5 * (path.node(M - 1) + path.node(M));
  const Matrix dF = spec.kernel.jac1(m, m) + spec.kernel.jac2(m, m);
  const Vector dD = spec.kernel.grad_x_div1(m, m) + spec.kernel.grad_y_div1(m, m);
  const Matrix A = Matrix::Identity(spec.d, spec.d) - 0.5 * dt * dF;
  return A.transpose() * (control.values.row(M - 1).transpose() / spec.sigma) + 0.25 * dt * dD;
}

namespace {

// Solves tridiag(-1, 2, -1) X = B column by column (Thomas algorithm).
Matrix second_difference_solve(const Matrix& B) {
  const Eigen::Index n = B.rows();
  Matrix X = B;
  std::vector<double> c(static_cast<std::size_t>(n));
  double denom = 2.0;
  c[0] = -1.0 / denom;
  X.row(0) /= denom;
  for (Eigen::Index i = 1; i < n; ++i) {
    denom = 2.0 + c[i - 1];
    c[i] = -1.0 / denom;
    X.row(i) = (X.row(i) + X.row(i - 1)) / denom;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) X.row(i) -= c[i] * X.row(i + 1);
  return X;
}

double dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

using GradientFn = std::function<Matrix(const PathGrid&)>;

// Hessian of the action in the interior nodes from central differences of the
// gradient. Cells couple only neighbouring nodes, so perturbing every third
// node at once recovers all blocks with 3 * width probe pairs.
Eigen::SparseMatrix<double> fd_hessian(const GradientFn& gradient, const PathGrid& path) {
  const int M = path.intervals();
  const int w = path.width();
  const int n_int = M - 1;
  const double h = 1e-5 * (1.0 + path.values.lpNorm<Eigen::Infinity>());
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(3 * n_int) * w * w);
  PathGrid probe = path;
  for (int color = 0; color < 3; ++color) {
    for (int c = 0; c < w; ++c) {
      for (int j = color; j < n_int; j += 3) probe.values(j + 1, c) = path.values(j + 1, c) + h;
      const Matrix plus = gradient(probe);
      for (int j = color; j < n_int; j += 3) probe.values(j + 1, c) = path.values(j + 1, c) - h;
      const Matrix minus = gradient(probe);
      for (int j = color; j < n_int; j += 3) probe.values(j + 1, c) = path.values(j + 1, c);
      for (int row = 0; row < n_int; ++row) {
        const int src = row + ((color - row) % 3 + 4) % 3 - 1;  // the colored node among row-1..row+1
        if (src < 0 || src >= n_int) continue;
        for (int cr = 0; cr < w; ++cr) {
          const double v = (plus(row, cr) - minus(row, cr)) / (2.0 * h);
          entries.emplace_back(row * w + cr, src * w + c, 0.5 * v);
          entries.emplace_back(src * w + c, row * w + cr, 0.5 * v);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> H(n_int * w, n_int * w);
  H.setFromTriplets(entries.begin(), entries.end());
  return H;
}

// Newton step on (H + mu K) d = -g with K the kinetic Hessian; mu grows from 0
// until the factorisation is positive definite.
Matrix newton_direction(const GradientFn& gradient, const PathGrid& path, const Matrix& g,
                        double kinetic_scale) {
  const int n_int = path.intervals() - 1;
  const int w = path.width();
  const Eigen::SparseMatrix<double> H = fd_hessian(gradient, path);
  std::vector<Eigen::Triplet<double>> kin;
  for (int j = 0; j < n_int; ++j) {
    for (int c = 0; c < w; ++c) {
      kin.emplace_back(j * w + c, j * w + c, 2.0 * kinetic_scale);
      if (j + 1 < n_int) {
        kin.emplace_back(j * w + c, (j + 1) * w + c, -kinetic_scale);
        kin.emplace_back((j + 1) * w + c, j * w + c, -kinetic_scale);
      }
    }
  }
  Eigen::SparseMatrix<double> K(n_int * w, n_int * w);
  K.setFromTriplets(kin.begin(), kin.end());
  const Vector rhs = -Eigen::Map<const Vector>(g.data(), g.size());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  for (double mu : {0.0, 1e-6, 1e-4, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e4}) {
    ldlt.compute(mu > 0.0 ? Eigen::SparseMatrix<double>(H + mu * K) : H);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) continue;
    const Vector d = ldlt.solve(rhs);
    if (d.allFinite() && d.dot(rhs) > 0.0) return Eigen::Map<const Matrix>(d.data(), n_int, w);
  }
  return kinetic_scale == 0.0 ? -g : Matrix(-second_difference_solve(g) / kinetic_scale);
}

PathGrid initial_path(const ModelSpec& spec, int M, const std::optional<PathGrid>& init, int width) {
  if (init) {
    if (init->intervals() != M || init->width() != width) {
      throw InvalidArgument("minimize_action_direct: initial path must be (M+1) x " +
                            std::to_string(width));
    }
    if (std::abs(init->T - spec.T) > 1e-12 * std::max(1.0, spec.T)) {
      throw InvalidArgument("minimize_action_direct: initial path horizon differs from model.T");
    }
    if (!init->values.allFinite()) throw InvalidArgument("minimize_action_direct: initial path not finite");
    return *init;
  }
  const PathGrid line = PathGrid::straight_line(spec.T, M, spec.x0, spec.xT);
  PathGrid p = line;
  p.values = line.values.replicate(1, width / spec.d);
  return p;
}

}  // namespace

MptpSolution minimize_action_direct(const ModelSpec& spec, int M,
                                    const std::optional<PathGrid>& init, const SolverOptions& opts,
                                    const PathTarget& target) {
  spec.validate();
  opts.validate();
  if (M < 8) throw InvalidArgument("minimize_action_direct: M must be >= 8");
  const auto* particles = std::get_if<ParticlePaths>(&target);
  const int n_particles = particles ? particles->n_particles : 0;
  if (particles && n_particles < 1) throw InvalidArgument("minimize_action_direct: N must be >= 1");
  const int width = particles ? n_particles * spec.d : spec.d;

  PathGrid path = initial_path(spec, M, init, width);
  const double dt = path.dt();
  const double precond_scale = spec.sigma * spec.sigma * dt;

  const auto action = [&](const PathGrid& p) {
    return particles ? om_action_particles(spec, n_particles, p) : om_action_meanfield(spec, p);
  };
  const auto gradient = [&](const PathGrid& p) {
    return particles ? om_gradient_particles(spec, n_particles, p) : om_gradient_meanfield(spec, p);
  };
  const auto finish = [&](const PathGrid& p, const ActionReport& rep, SolveDiagnostics diag) {
    MptpSolution sol;
    sol.path = p;
    sol.control = particles ? control_from_particle_paths(spec, n_particles, p) : control_from_path(spec, p);
    sol.action = rep;
    sol.diagnostics = std::move(diag);
    if (!particles) {
      const Vector pT = stationary_terminal_costate(spec, p, sol.control);
      CostateTrajectory ct;
      ct.T = p.T;
      ct.values = solve_adjoint_meanfield(spec, sol.control, PinnedTerminal{pT},
                                          ResidualScheme::kMidpointAdjoint)
                      .costate;
      sol.costate = std::move(ct);
    }
    return sol;
  };

  ActionReport S = action(path);
  if (!std::isfinite(S.total)) throw NumericalFailure("action is not finite at the initial path");
  Matrix g = gradient(path);
  SolveDiagnostics diag;
  diag.action_history.push_back(S.total);
  diag.grad_norm = gradient_norm(g, dt);

  Matrix dir, g_prev, z_prev;
  PathGrid trial = path;
  while (diag.grad_norm >= opts.grad_tol) {
    if (diag.iterations >= opts.max_iters) {
      throw SolverNonConvergence("direct minimizer: " + std::to_string(opts.max_iters) +
                                     " iterations, gradient norm " + std::to_string(diag.grad_norm),
                                 finish(path, S, diag));
    }
    const Matrix z = precond_scale * second_difference_solve(g);
    if (opts.method == DescentMethod::kNewton) {
      dir = newton_direction(gradient, path, g, 1.0 / precond_scale);
    } else if (opts.method == DescentMethod::kConjugateGradient && diag.iterations > 0) {
      const double beta = std::max(0.0, dot(g - g_prev, z) / dot(g_prev, z_prev));
      dir = -z + beta * dir;
      if (dot(dir, g) >= 0.0) dir = -z;
    } else {
      dir = -z;
    }
    const double slope = dot(g, dir);

    // Armijo backtracking. Near convergence the decrease drops below the
    // rounding noise of S; there a step is accepted when S does not rise
    // beyond that noise and the directional derivative has been reduced.
    const double noise = 1e-14 * (1.0 + std::abs(S.kinetic) + std::abs(S.divergence));
    double alpha = opts.initial_step;
    bool accepted = false;
    ActionReport S_new;
    Matrix g_new;
    for (int bt = 0; bt < 60; ++bt) {
      trial.values = path.values;
      trial.values.middleRows(1, M - 1) += alpha * dir;
      S_new = action(trial);
      if (std::isfinite(S_new.total)) {
        if (S_new.total <= S.total + opts.armijo_c * alpha * slope) {
          accepted = true;
        } else if (S_new.total <= S.total + noise) {
          g_new = gradient(trial);
          accepted = dot(g_new, dir) <= -0.8 * slope;
        }
      }
      if (accepted) break;
      alpha *= opts.backtrack;
    }
    if (!accepted) {
      throw SolverNonConvergence("direct minimizer: line search stalled at gradient norm " +
                                     std::to_string(diag.grad_norm),
                                 finish(path, S, diag));
    }
    if (g_new.size() == 0) g_new = gradient(trial);
    g_prev = std::move(g);
    z_prev = z;
    path.values.swap(trial.values);
    S = S_new;
    g = std::move(g_new);
    g_new.resize(0, 0);
    ++diag.iterations;
    diag.grad_norm = gradient_norm(g, dt);
    diag.action_history.push_back(S.total);
  }
  diag.converged = true;
  return finish(path, S, std::move(diag));
}

std::vector<MptpSolution> multistart_direct(const ModelSpec& spec, int M, int n_starts,
                                            std::uint64_t seed, const SolverOptions& opts) {
  if (n_starts < 1) throw InvalidArgument("multistart_direct: n_starts must be >= 1");
  const PathGrid line = PathGrid::straight_line(spec.T, M, spec.x0, spec.xT);
  const double scale = 0.5 * std::max(1.0, (spec.xT - spec.x0).lpNorm<Eigen::Infinity>());
  std::vector<MptpSolution> found;
  for (int s = 0; s < n_starts; ++s) {
    PathGrid init = line;
    if (s > 0) {
      // Low sine modes vanish at both ends, so endpoints stay fixed.
      for (int mode = 1; mode <= 3; ++mode) {
        for (int c = 0; c < spec.d; ++c) {
          const double amp = scale / mode * rng::normal(seed, rng::Purpose::kProbe, s, mode, c);
          for (int k = 1; k < M; ++k) {
            init.values(k, c) += amp * std::sin(std::numbers::pi * mode * k / M);
          }
        }
      }
    }
    try {
      MptpSolution sol = minimize_action_direct(spec, M, init, opts);
      const bool duplicate = std::any_of(found.begin(), found.end(), [&](const MptpSolution& f) {
        return (f.path.values - sol.path.values).lpNorm<Eigen::Infinity>() < 1e-5;
      });
      if (!duplicate) found.push_back(std::move(sol));
    } catch (const SolverNonConvergence&) {
      // Starts that do not settle are dropped; at least one must converge.
    }
  }
  if (found.empty()) throw NonConvergence("multistart_direct: no start converged");
  std::sort(found.begin(), found.end(), [](const MptpSolution& a, const MptpSolution& b) {
    return a.action.total < b.action.total;
  });
  return found;
}

namespace {

struct ShotResult {
  Matrix state;
  Matrix costate;
  bool finite = true;
};

ShotResult shoot(const ModelSpec& spec, int M, const Vector& p0) {
  const double h = spec.T / M;
  const double s2 = spec.sigma * spec.sigma;
  const auto& kernel = spec.kernel;
  const auto rhs = [&](const Vector& x, const Vector& p, Vector& dx, Vector& dp) {
    const auto mu = EmpiricalMeasure::dirac(x);
    dx = kernel.eval(x, x) + s2 * p;
    dp = costate_rhs(spec, x, mu, p, costate_population_average(kernel, mu, p.transpose()));
  };
  ShotResult r;
  r.state.resize(M + 1, spec.d);
  r.costate.resize(M + 1, spec.d);
  Vector x = spec.x0, p = p0;
  r.state.row(0) = x.transpose();
  r.costate.row(0) = p.transpose();
  Vector k1x, k1p, k2x, k2p, k3x, k3p, k4x, k4p;
  for (int k = 0; k < M; ++k) {
    rhs(x, p, k1x, k1p);
    rhs(x + 0.5 * h * k1x, p + 0.5 * h * k1p, k2x, k2p);
    rhs(x + 0.5 * h * k2x, p + 0.5 * h * k2p, k3x, k3p);
    rhs(x + h * k3x, p + h * k3p, k4x, k4p);
    x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    if (!x.allFinite() || !p.allFinite()) {
      r.finite = false;
      return r;
    }
    r.state.row(k + 1) = x.transpose();
    r.costate.row(k + 1) = p.transpose();
  }
  return r;
}

Vector shooting_miss(const ModelSpec& spec, const ShotResult& r, const TerminalCondition& terminal) {
  const Vector xT = r.state.bottomRows(1).transpose();
  const Vector pT = r.costate.bottomRows(1).transpose();
  if (const auto* pen = std::get_if<PenaltyTerminal>(&terminal)) {
    return xT - spec.xT + pT / pen->rho;
  }
  return xT - spec.xT;
}

}  // namespace

MptpSolution shooting_mptp(const ModelSpec& spec, int M, const std::optional<Vector>& p0_init,
                           const SolverOptions& opts, const TerminalCondition& terminal) {
  spec.validate();
  opts.validate();
  if (M < 1) throw InvalidArgument("shooting_mptp: M must be >= 1");
  if (const auto* pen = std::get_if<PenaltyTerminal>(&terminal); pen && !(pen->rho > 0.0)) {
    throw InvalidArgument("shooting_mptp: penalty rho must be > 0");
  }
  Vector p0 = p0_init.value_or((spec.xT - spec.x0) / (spec.sigma * spec.sigma * spec.T));
  if (p0.size() != spec.d) throw InvalidArgument("shooting_mptp: p0 must have length d");

  ShotResult shot = shoot(spec, M, p0);
  if (!shot.finite) throw NumericalFailure("shooting: trajectory blew up at the initial guess");
  Vector miss = shooting_miss(spec, shot, terminal);

  const auto make_solution = [&](const ShotResult& s, SolveDiagnostics diag) {
    MptpSolution sol;
    sol.path.T = spec.T;
    sol.path.values = s.state;
    sol.control = control_from_path(spec, sol.path);
    CostateTrajectory ct;
    ct.T = spec.T;
    ct.values = s.costate;
    ControlSignal nc;
    nc.T = spec.T;
    nc.values = spec.sigma * s.costate;
    sol.costate = std::move(ct);
    sol.node_control = std::move(nc);
    sol.action = om_action_meanfield(spec, sol.path);
    diag.terminal_miss = (s.state.bottomRows(1).transpose() - spec.xT).lpNorm<Eigen::Infinity>();
    sol.diagnostics = std::move(diag);
    return sol;
  };

  SolveDiagnostics diag;
  diag.residual_history.push_back(miss.lpNorm<Eigen::Infinity>());
  Matrix J(spec.d, spec.d);
  while (miss.lpNorm<Eigen::Infinity>() >= opts.newton_tol) {
    if (diag.iterations >= opts.max_newton_iters) {
      throw SolverNonConvergence("shooting: Newton did not converge, terminal miss " +
                                     std::to_string(miss.lpNorm<Eigen::Infinity>()),
                                 make_solution(shot, diag));
    }
    const double step = opts.fd_step * (1.0 + p0.lpNorm<Eigen::Infinity>());
    for (int c = 0; c < spec.d; ++c) {
      Vector plus = p0, minus = p0;
      plus[c] += step;
      minus[c] -= step;
      const ShotResult sp = shoot(spec, M, plus), sm = shoot(spec, M, minus);
      if (!sp.finite || !sm.finite) throw NumericalFailure("shooting: blow-up in Jacobian probe");
      J.col(c) = (shooting_miss(spec, sp, terminal) - shooting_miss(spec, sm, terminal)) / (2.0 * step);
    }
    const Vector delta = -J.fullPivLu().solve(miss);
    if (!delta.allFinite()) throw NumericalFailure("shooting: singular Newton system");

    // Damped step: halve until the miss decreases.
    double lambda = 1.0;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      const Vector cand = p0 + lambda * delta;
      ShotResult s = shoot(spec, M, cand);
      if (s.finite) {
        const Vector m = shooting_miss(spec, s, terminal);
        if (m.lpNorm<Eigen::Infinity>() < miss.lpNorm<Eigen::Infinity>()) {
          p0 = cand;
          shot = std::move(s);
          miss = m;
          improved = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    ++diag.iterations;
    diag.residual_history.push_back(miss.lpNorm<Eigen::Infinity>());
    if (!improved) {
      throw SolverNonConvergence("shooting: damped Newton step failed to reduce the terminal miss " +
                                     std::to_string(miss.lpNorm<Eigen::Infinity>()),
                                 make_solution(shot, diag));
    }
  }
  diag.converged = true;
  return make_solution(shot, std::move(diag));
}

namespace {

// p(0) estimate from a direct solution: theta = sigma p on the first cell.
Vector direct_costate_guess(const ModelSpec& spec, const MptpSolution& direct) {
  return direct.control.values.row(0).transpose() / spec.sigma;
}

}  // namespace

CrossValidation cross_validate(const ModelSpec& spec, int M, const SolverOptions& opts) {
  CrossValidation cv;
  cv.direct = minimize_action_direct(spec, M, std::nullopt, opts);
  try {
    cv.shooting = shooting_mptp(spec, M, std::nullopt, opts);
  } catch (const NonConvergence&) {
    cv.shooting = shooting_mptp(spec, M, direct_costate_guess(spec, cv.direct), opts);
  } catch (const NumericalFailure&) {
    cv.shooting = shooting_mptp(spec, M, direct_costate_guess(spec, cv.direct), opts);
  }
  cv.path_gap = (cv.direct.path.values - cv.shooting.path.values).lpNorm<Eigen::Infinity>();
  cv.control_gap = (cv.direct.control.values - cv.shooting.control.values).lpNorm<Eigen::Infinity>();
  cv.action_gap = std::abs(cv.direct.action.total - cv.shooting.action.total);
  return cv;
}

}  // namespace mptp
