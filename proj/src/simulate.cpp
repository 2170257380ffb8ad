#include "mptp/simulate.hpp"

#include "empirical_system.hpp"
#include "mptp/errors.hpp"
#include "mptp/rng.hpp"
#include "mptp/stats.hpp"

#include <algorithm>
#include <cmath>

namespace mptp {

void SimConfig::validate_against(const ModelSpec& spec) const {
  if (n_steps < 1) throw InvalidArgument("sim.n_steps: must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("sim.dt: must be finite and > 0");
  if (n_particles < 1) throw InvalidArgument("sim.n_particles: must be >= 1");
  if (std::abs(n_steps * dt - spec.T) > 1e-12 * std::max(1.0, spec.T)) {
    throw InvalidArgument("sim.dt: n_steps * dt must equal model.T");
  }
}

Matrix sample_initial(const ModelSpec& spec, int n, std::uint64_t seed) {
  Matrix X(n, spec.d);
  for (int i = 0; i < n; ++i) X.row(i) = spec.mu0.mean.transpose();
  if (spec.mu0.type == InitialLawType::kGaussian && spec.mu0.std > 0.0) {
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < spec.d; ++c) {
        X(i, c) += spec.mu0.std * rng::normal(seed, rng::Purpose::kInitial, i, 0, c);
      }
    }
  }
  return X;
}

namespace {

void check_control(const ControlSignal& control, const ModelSpec& spec, const SimConfig& cfg) {
  if (control.values.rows() != cfg.n_steps + 1 || control.values.cols() != spec.d) {
    throw InvalidArgument("control grid does not match the simulation grid");
  }
  if (std::abs(control.T - spec.T) > 1e-12 * std::max(1.0, spec.T)) {
    throw InvalidArgument("control horizon does not match model.T");
  }
}

// Runs the scheme, handing every state (including the initial one) to `record`.
template <typename Record>
void run_euler_maruyama(const ModelSpec& spec, const SimConfig& cfg,
                        const std::optional<ControlSignal>& control, Record&& record) {
  spec.validate();
  cfg.validate_against(spec);
  if (control) check_control(*control, spec, cfg);

  const int n = cfg.n_particles;
  const double sqrt_dt = std::sqrt(cfg.dt);
  Matrix X = sample_initial(spec, n, cfg.seed);
  Matrix F;
  record(0, X);
  for (int k = 0; k < cfg.n_steps; ++k) {
    detail::empirical_drift(spec.kernel, X, F);
    if (control) F.rowwise() += spec.sigma * control->values.row(k);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < spec.d; ++c) {
        const double xi = rng::normal(cfg.seed, rng::Purpose::kIncrement, i, k, c);
        X(i, c) += F(i, c) * cfg.dt + spec.sigma * sqrt_dt * xi;
      }
    }
    if (!X.allFinite()) throw NumericalFailure("non-finite state in particle simulation");
    record(k + 1, X);
  }
}

TrajectoryEnsemble collect(const ModelSpec& spec, const SimConfig& cfg,
                           const std::optional<ControlSignal>& control) {
  TrajectoryEnsemble ens;
  ens.times.reserve(cfg.n_steps + 1);
  ens.states.reserve(cfg.n_steps + 1);
  run_euler_maruyama(spec, cfg, control, [&](int k, const Matrix& X) {
    ens.times.push_back(k * cfg.dt);
    ens.states.push_back(X);
  });
  return ens;
}

}  // namespace

TrajectoryEnsemble simulate_particles(const ModelSpec& spec, const SimConfig& cfg,
                                      const std::optional<ControlSignal>& control) {
  return collect(spec, cfg, control);
}

TrajectoryEnsemble simulate_meanfield(const ModelSpec& spec, const SimConfig& cfg) {
  return collect(spec, cfg, std::nullopt);
}

Matrix simulate_terminal(const ModelSpec& spec, const SimConfig& cfg,
                         const std::optional<ControlSignal>& control) {
  Matrix last;
  run_euler_maruyama(spec, cfg, control, [&](int k, const Matrix& X) {
    if (k == cfg.n_steps) last = X;
  });
  return last;
}

namespace {

constexpr std::uint64_t kReferenceTag = 0x5245465F52554EULL;

}  // namespace

ChaosTable chaos_gap(const ModelSpec& spec, const std::vector<int>& n_list, int m_ref,
                     const SimConfig& cfg, int replicates, const ChaosOptions& options) {
  if (spec.d != 1) throw UnsupportedDimension("chaos_gap requires d == 1 (exact W2)");
  if (n_list.empty() || replicates < 1 || m_ref < 1) {
    throw InvalidArgument("chaos_gap: need a nonempty n_list, replicates >= 1 and m_ref >= 1");
  }

  SimConfig ref_cfg = cfg;
  ref_cfg.n_particles = m_ref;
  ref_cfg.seed = options.reference_seed.value_or(rng::derive_seed(cfg.seed, kReferenceTag));
  const auto reference = EmpiricalMeasure::uniform(simulate_terminal(spec, ref_cfg));

  ChaosTable table;
  std::vector<double> ns, means;
  for (int n : n_list) {
    std::vector<double> gaps;
    for (int r = 0; r < replicates; ++r) {
      SimConfig run = cfg;
      run.n_particles = n;
      run.seed = options.common_random_numbers
                     ? rng::derive_seed(cfg.seed, r)
                     : rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(n), r);
      gaps.push_back(wasserstein2_1d(EmpiricalMeasure::uniform(simulate_terminal(spec, run)), reference));
    }
    const auto ms = stats::mean_std(gaps);
    table.rows.push_back({n, ms.mean, ms.std});
    ns.push_back(n);
    means.push_back(ms.mean);
  }
  if (ns.size() >= 2 && std::all_of(means.begin(), means.end(), [](double g) { return g > 0.0; })) {
    const auto fit = stats::fit_loglog(ns, means);
    table.slope = fit.slope;
    table.intercept = fit.intercept;
  }
  table.increases = stats::count_increases(means);
  table.monotone_trend = table.increases <= 1;
  return table;
}

}  // namespace mptp
