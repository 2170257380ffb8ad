#pragma once

#include "mptp/grid.hpp"
#include "mptp/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mptp {

struct SimConfig {
  int n_steps = 100;
  double dt = 0.01;
  std::uint64_t seed = 0;
  int n_particles = 100;

  // n_steps * dt must reproduce the model horizon.
  void validate_against(const ModelSpec& spec) const;
};

/// states[k] is the N x d ensemble at times[k].
struct TrajectoryEnsemble {
  std::vector<double> times;
  std::vector<Matrix> states;

  int n_steps() const { return static_cast<int>(states.size()) - 1; }
  int n_particles() const { return states.empty() ? 0 : static_cast<int>(states.front().rows()); }
  int dim() const { return states.empty() ? 0 : static_cast<int>(states.front().cols()); }
};

// i.i.d. draws from mu0, row i addressed by (seed, i).
Matrix sample_initial(const ModelSpec& spec, int n, std::uint64_t seed);

/// Euler-Maruyama for the N-particle system. With a control the drift gains
/// sigma*theta_k, shared by every particle. Noise is addressed by
/// (seed, particle, step, component).
TrajectoryEnsemble simulate_particles(const ModelSpec& spec, const SimConfig& cfg,
                                      const std::optional<ControlSignal>& control = std::nullopt);

/// McKean-Vlasov law approximated by the self-consistent empirical law of
/// cfg.n_particles samples (the same scheme as simulate_particles).
TrajectoryEnsemble simulate_meanfield(const ModelSpec& spec, const SimConfig& cfg);

// Terminal cloud only; avoids storing the full ensemble for large runs.
Matrix simulate_terminal(const ModelSpec& spec, const SimConfig& cfg,
                         const std::optional<ControlSignal>& control = std::nullopt);

struct ChaosRow {
  int n = 0;
  double mean_gap = 0.0;
  double std_gap = 0.0;
};

struct ChaosOptions {
  // Replicate r uses the same seed for every N (streams are position-addressed,
  // so the first N particles coincide across N).
  bool common_random_numbers = true;
  // Seed of the reference run; defaults to a tag derived from cfg.seed.
  std::optional<std::uint64_t> reference_seed;
};

struct ChaosTable {
  std::vector<ChaosRow> rows;
  double slope = 0.0;      // fitted log-log slope of mean gap vs N
  double intercept = 0.0;
  int increases = 0;       // consecutive increases of the mean gap
  bool monotone_trend = false;  // increases <= 1
};

/// W2 between the terminal law of N-particle runs and an m_ref-sample
/// mean-field reference, averaged over replicates. d must be 1.
ChaosTable chaos_gap(const ModelSpec& spec, const std::vector<int>& n_list, int m_ref,
                     const SimConfig& cfg, int replicates, const ChaosOptions& options = {});

}  // namespace mptp
