#pragma once

#include "mptp/grid.hpp"
#include "mptp/model.hpp"
#include "mptp/pmp.hpp"
#include "mptp/solve.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mptp {

struct ConvergenceRow {
  int n = 0;
  int replicates = 0;
  double mean_gap = 0.0;
  double std_gap = 0.0;
  double tail_prob = 0.0;  // fraction of replicates with gap >= threshold
  std::vector<double> gaps;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  double threshold = 0.0;
  double slope = 0.0;  // log-log fit of mean gap vs N; 0 when some mean gap is 0
  double intercept = 0.0;
  int tail_increases = 0;
  bool tail_monotone = false;  // tail_increases <= 1

  // Recomputes tail probabilities and the monotone flag for a new threshold.
  void set_threshold(double s);
};

struct StudySetup {
  NoiseMode noise = NoiseMode::kSde;
  TerminalCondition terminal = PenaltyTerminal{};
};

/// For each N, R evaluations of ||Q_N(theta*) - Q(theta*)|| (discrete L2 in
/// time). Replicate r of size N uses seed derive_seed(seed, N, r); Q(theta*)
/// is recomputed per call.
ConvergenceTable residual_convergence_study(const ModelSpec& spec, const ControlSignal& theta_star,
                                            const std::vector<int>& n_list, int replicates,
                                            double threshold, std::uint64_t seed,
                                            const StudySetup& setup = {});

// Same protocol with Frobenius gaps ||DQ(theta*) - DQ_N(theta*)||.
ConvergenceTable jacobian_convergence_study(const ModelSpec& spec, const ControlSignal& theta_star,
                                            const std::vector<int>& n_list, int replicates,
                                            double threshold, std::uint64_t seed,
                                            const StudySetup& setup = {});

struct StabilityReport {
  std::vector<double> singular_values;  // descending
  double min_singular = 0.0;
  double max_singular = 0.0;
  bool nonsingular = false;  // min > 1e-10 * max
  double inv_norm = 0.0;     // ||DQ(theta*)^-1|| = 1 / min singular value
  double rho = 0.0;          // probe ball radius
  double rho0 = 0.0;
  double k_rho0 = 0.0;       // 4 ||DQ^-1||
  double k_lipschitz = 0.0;  // empirical lower bound on the Lipschitz constant of DQ_N
  double s0 = 0.0;           // ||DQ^-1||^-1 / 2
  int n_probe = 0;
};

struct StabilityOptions {
  std::optional<double> rho;  // default 0.5 ||theta*||
  int n_probe = 32;
  int n_particles = 16;
  std::uint64_t seed = 0;
  StudySetup setup{};
};

StabilityReport stability_report(const ModelSpec& spec, const ControlSignal& theta_star,
                                 const StabilityOptions& opts = {});

struct ControlGapRow {
  int n = 0;
  int replicates = 0;
  double mean_gap = 0.0;
  double std_gap = 0.0;
};

struct ControlGapTable {
  std::vector<ControlGapRow> rows;
  ControlSignal theta_star;
  int increases = 0;
  bool monotone_trend = false;  // increases <= 1
};

/// Particle MPTPs by direct minimisation, each particle pinned from its own
/// mu0 draw to xT; reports ||theta^N - theta*||_L2 for the symmetrised control
/// theta^N against the mean-field optimum, averaged over R initial draws.
ControlGapTable control_gap_study(const ModelSpec& spec, const std::vector<int>& n_list, int M,
                                  int replicates, std::uint64_t seed, const SolverOptions& opts);

// sqrt(sum_k dt |a_k - b_k|^2) over the M cells (the repeated last row is skipped).
double cell_l2_distance(const ControlSignal& a, const ControlSignal& b);

// Discrete L2 norm over all M+1 nodes, matching ResidualCurve::norm.
double node_l2_norm(const Matrix& values, double dt);

}  // namespace mptp
