#include "mptp/correspond.hpp"

#include "mptp/errors.hpp"
#include "mptp/rng.hpp"
#include "mptp/simulate.hpp"
#include "mptp/stats.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mptp {

double node_l2_norm(const Matrix& values, double dt) {
  return std::sqrt(dt * values.squaredNorm());
}

double cell_l2_distance(const ControlSignal& a, const ControlSignal& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw InvalidArgument("cell_l2_distance: control shapes differ");
  }
  const int M = a.intervals();
  return std::sqrt(a.dt() * (a.values.topRows(M) - b.values.topRows(M)).squaredNorm());
}

void ConvergenceTable::set_threshold(double s) {
  threshold = s;
  std::vector<double> tails;
  for (auto& row : rows) {
    const auto exceed = std::count_if(row.gaps.begin(), row.gaps.end(), [&](double g) { return g >= s; });
    row.tail_prob = row.gaps.empty() ? 0.0 : static_cast<double>(exceed) / static_cast<double>(row.gaps.size());
    tails.push_back(row.tail_prob);
  }
  tail_increases = stats::count_increases(tails);
  tail_monotone = tail_increases <= 1;
}

namespace {

void check_study(const std::vector<int>& n_list, int replicates) {
  if (n_list.empty()) throw InvalidArgument("study.n_list: must be nonempty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] < 1) throw InvalidArgument("study.n_list: entries must be >= 1");
    if (i > 0 && n_list[i] <= n_list[i - 1]) {
      throw InvalidArgument("study.n_list: must be strictly increasing");
    }
  }
  if (replicates < 8) throw InvalidArgument("study.replicates: must be >= 8");
}

template <typename GapFn>
ConvergenceTable run_study(const std::vector<int>& n_list, int replicates, double threshold,
                           std::uint64_t seed, GapFn&& gap_of) {
  ConvergenceTable table;
  std::vector<double> ns, means;
  for (int n : n_list) {
    ConvergenceRow row;
    row.n = n;
    row.replicates = replicates;
    for (int r = 0; r < replicates; ++r) {
      row.gaps.push_back(gap_of(n, rng::derive_seed(seed, static_cast<std::uint64_t>(n), r)));
    }
    const auto ms = stats::mean_std(row.gaps);
    row.mean_gap = ms.mean;
    row.std_gap = ms.std;
    table.rows.push_back(std::move(row));
    ns.push_back(n);
    means.push_back(ms.mean);
  }
  if (ns.size() >= 2 && std::all_of(means.begin(), means.end(), [](double g) { return g > 0.0; })) {
    const auto fit = stats::fit_loglog(ns, means);
    table.slope = fit.slope;
    table.intercept = fit.intercept;
  }
  table.set_threshold(threshold);
  return table;
}

}  // namespace

ConvergenceTable residual_convergence_study(const ModelSpec& spec, const ControlSignal& theta_star,
                                            const std::vector<int>& n_list, int replicates,
                                            double threshold, std::uint64_t seed,
                                            const StudySetup& setup) {
  spec.validate();
  check_study(n_list, replicates);
  const ResidualCurve ref = residual_meanfield(spec, theta_star, setup.terminal);
  const double dt = theta_star.dt();
  return run_study(n_list, replicates, threshold, seed, [&](int n, std::uint64_t s) {
    const ResidualCurve qn = residual_particles(spec, theta_star, n, s, setup.noise, setup.terminal);
    return node_l2_norm(qn.values - ref.values, dt);
  });
}

ConvergenceTable jacobian_convergence_study(const ModelSpec& spec, const ControlSignal& theta_star,
                                            const std::vector<int>& n_list, int replicates,
                                            double threshold, std::uint64_t seed,
                                            const StudySetup& setup) {
  spec.validate();
  check_study(n_list, replicates);
  const Matrix ref = residual_jacobian(spec, theta_star, MeanfieldTarget{}, setup.terminal);
  return run_study(n_list, replicates, threshold, seed, [&](int n, std::uint64_t s) {
    const Matrix jn = residual_jacobian(spec, theta_star, ParticleTarget{n, s, setup.noise}, setup.terminal);
    return (jn - ref).norm();
  });
}

namespace {

double spectral_norm(const Matrix& A) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

// Uniform draw from the L2 ball of radius rho around theta.
ControlSignal ball_sample(const ControlSignal& theta, double rho, std::uint64_t seed,
                          std::uint64_t stream) {
  const Eigen::Index n = theta.values.size();
  Matrix dir(theta.values.rows(), theta.values.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    dir.data()[i] = rng::normal(seed, rng::Purpose::kProbe, stream, static_cast<std::uint64_t>(i), 0);
  }
  const double len = node_l2_norm(dir, theta.dt());
  const double radius =
      rho * std::pow(rng::uniform(seed, rng::Purpose::kProbe, stream, static_cast<std::uint64_t>(n)),
                     1.0 / static_cast<double>(n));
  ControlSignal out = theta;
  out.values += (radius / len) * dir;
  return out;
}

}  // namespace

StabilityReport stability_report(const ModelSpec& spec, const ControlSignal& theta_star,
                                 const StabilityOptions& opts) {
  spec.validate();
  if (opts.n_probe < 1) throw InvalidArgument("stability.n_probe: must be >= 1");
  if (opts.n_particles < 1) throw InvalidArgument("stability.n_particles: must be >= 1");
  const double dt = theta_star.dt();

  StabilityReport rep;
  rep.n_probe = opts.n_probe;
  const Matrix dq = residual_jacobian(spec, theta_star, MeanfieldTarget{}, opts.setup.terminal);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dq);
  const Vector sv = svd.singularValues();
  rep.singular_values.assign(sv.data(), sv.data() + sv.size());
  rep.max_singular = sv[0];
  rep.min_singular = sv[sv.size() - 1];
  rep.nonsingular = rep.min_singular > 1e-10 * rep.max_singular;
  rep.inv_norm = rep.min_singular > 0.0 ? 1.0 / rep.min_singular
                                        : std::numeric_limits<double>::infinity();

  rep.rho = opts.rho.value_or(0.5 * node_l2_norm(theta_star.values, dt));
  if (!(rep.rho > 0.0)) throw InvalidArgument("stability.rho: must be > 0 (theta* is zero?)");

  const ParticleTarget target{opts.n_particles, opts.seed, opts.setup.noise};
  for (int j = 0; j < opts.n_probe; ++j) {
    const ControlSignal t1 = ball_sample(theta_star, rep.rho, opts.seed, 2 * j);
    const ControlSignal t2 = ball_sample(theta_star, rep.rho, opts.seed, 2 * j + 1);
    const Matrix d1 = residual_jacobian(spec, t1, target, opts.setup.terminal);
    const Matrix d2 = residual_jacobian(spec, t2, target, opts.setup.terminal);
    const double dist = node_l2_norm(t1.values - t2.values, dt);
    if (dist > 0.0) rep.k_lipschitz = std::max(rep.k_lipschitz, spectral_norm(d1 - d2) / dist);
  }

  rep.k_rho0 = 4.0 * rep.inv_norm;
  rep.s0 = 0.5 / rep.inv_norm;
  const double bound = rep.k_lipschitz * rep.inv_norm;
  rep.rho0 = bound > 0.0 ? std::min(rep.rho, 0.25 / bound) : rep.rho;
  return rep;
}

ControlGapTable control_gap_study(const ModelSpec& spec, const std::vector<int>& n_list, int M,
                                  int replicates, std::uint64_t seed, const SolverOptions& opts) {
  spec.validate();
  if (n_list.empty() || replicates < 1) {
    throw InvalidArgument("control_gap_study: need a nonempty n_list and replicates >= 1");
  }
  ControlGapTable table;
  table.theta_star = minimize_action_direct(spec, M, std::nullopt, opts).control;

  std::vector<double> means;
  for (int n : n_list) {
    if (n < 1) throw InvalidArgument("study.n_list: entries must be >= 1");
    std::vector<double> gaps;
    for (int r = 0; r < replicates; ++r) {
      const Matrix starts = sample_initial(spec, n, rng::derive_seed(seed, static_cast<std::uint64_t>(n), r));
      PathGrid init;
      init.T = spec.T;
      init.values.resize(M + 1, n * spec.d);
      for (int i = 0; i < n; ++i) {
        const PathGrid line = PathGrid::straight_line(spec.T, M, starts.row(i).transpose(), spec.xT);
        init.values.middleCols(i * spec.d, spec.d) = line.values;
      }
      const MptpSolution sol = minimize_action_direct(spec, M, init, opts, ParticlePaths{n});
      gaps.push_back(cell_l2_distance(sol.control, table.theta_star));
    }
    const auto ms = stats::mean_std(gaps);
    table.rows.push_back({n, replicates, ms.mean, ms.std});
    means.push_back(ms.mean);
  }
  table.increases = stats::count_increases(means);
  table.monotone_trend = table.increases <= 1;
  return table;
}

}  // namespace mptp
