#include "mptp/commands.hpp"

#include "mptp/correspond.hpp"
#include "mptp/io.hpp"
#include "mptp/simulate.hpp"
#include "mptp/solve.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <ostream>

namespace mptp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

io::Provenance provenance(const ExperimentConfig& cfg, const std::string& command) {
  return {cfg.hash, cfg.seed, command};
}

json provenance_json(const io::Provenance& prov) {
  return {{"tool", "mptp"},
          {"version", std::string(io::kToolVersion)},
          {"command", prov.command},
          {"config_hash", io::hex64(prov.config_hash)},
          {"seed", prov.seed}};
}

void write_json(const fs::path& path, json doc, const io::Provenance& prov) {
  doc["provenance"] = provenance_json(prov);
  io::write_atomic(path, doc.dump(2) + "\n");
}

std::vector<double> column(const Matrix& m, int c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index k = 0; k < m.rows(); ++k) out[k] = m(k, c);
  return out;
}

std::vector<double> node_times(double T, Eigen::Index rows) {
  std::vector<double> t(static_cast<std::size_t>(rows));
  for (Eigen::Index k = 0; k < rows; ++k) t[k] = T * static_cast<double>(k) / static_cast<double>(rows - 1);
  return t;
}

void write_grid(const ExperimentConfig& cfg, const fs::path& dir, const std::string& stem,
                const Matrix& values, double T, const io::Provenance& prov) {
  if (cfg.output.csv) io::write_atomic(dir / (stem + ".csv"), io::grid_csv(values, T, prov));
  if (cfg.output.gnuplot) {
    const auto t = node_times(T, values.rows());
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const std::string suffix = values.cols() > 1 ? "_dim" + std::to_string(c) : "";
      io::write_atomic(dir / (stem + suffix + ".dat"),
                       io::gnuplot_data(t, column(values, static_cast<int>(c)), "time", stem, prov));
    }
  }
}

json action_json(const ActionReport& a) {
  return {{"total", a.total}, {"kinetic", a.kinetic}, {"divergence", a.divergence}};
}

json diagnostics_json(const SolveDiagnostics& d) {
  return {{"iterations", d.iterations},
          {"grad_norm", d.grad_norm},
          {"terminal_miss", d.terminal_miss},
          {"converged", d.converged},
          {"action_history_length", d.action_history.size()},
          {"terminal_miss_history", d.residual_history}};
}

json options_json(const ExperimentConfig& cfg) {
  const SolverOptions& o = cfg.solver.options;
  return {{"method", std::string(to_string(o.method))},
          {"max_iters", o.max_iters},
          {"grad_tol", o.grad_tol},
          {"armijo_c", o.armijo_c},
          {"backtrack", o.backtrack},
          {"initial_step", o.initial_step},
          {"newton_tol", o.newton_tol},
          {"max_newton_iters", o.max_newton_iters},
          {"fd_step", o.fd_step},
          {"M", cfg.M}};
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json solution_json(const MptpSolution& s) {
  json j = {{"action", action_json(s.action)}, {"diagnostics", diagnostics_json(s.diagnostics)}};
  const int M = s.path.intervals();
  if (M % 2 == 0) j["midpoint_state"] = vector_json(s.path.node(M / 2));
  return j;
}

void write_solution(const ExperimentConfig& cfg, const fs::path& dir, const std::string& prefix,
                    const MptpSolution& s, const io::Provenance& prov) {
  write_grid(cfg, dir, prefix + "path", s.path.values, s.path.T, prov);
  write_grid(cfg, dir, prefix + "control", s.control.values, s.control.T, prov);
  if (s.costate && cfg.output.csv) {
    io::write_atomic(dir / (prefix + "costate.csv"), io::grid_csv(s.costate->values, s.costate->T, prov));
  }
}

// Zero of the residual in the configured terminal mode, by shooting. A failed
// shot from the default guess is retried from the direct minimiser's control.
struct OptimalControl {
  ControlSignal theta;
  TerminalCondition terminal;
};

OptimalControl optimal_control(const ExperimentConfig& cfg) {
  const TerminalCondition shot_terminal = cfg.solver.terminal == TerminalMode::kPenalty
                                              ? TerminalCondition{PenaltyTerminal{cfg.solver.rho_pen}}
                                              : TerminalCondition{PinnedTerminal{}};
  MptpSolution sol;
  try {
    sol = shooting_mptp(cfg.model, cfg.M, std::nullopt, cfg.solver.options, shot_terminal);
  } catch (const std::runtime_error&) {
    const MptpSolution direct = minimize_action_direct(cfg.model, cfg.M, std::nullopt, cfg.solver.options);
    const Vector guess = direct.control.values.row(0).transpose() / cfg.model.sigma;
    sol = shooting_mptp(cfg.model, cfg.M, guess, cfg.solver.options, shot_terminal);
  }
  OptimalControl oc{*sol.node_control, shot_terminal};
  if (cfg.solver.terminal == TerminalMode::kPinned) {
    oc.terminal = PinnedTerminal{sol.costate->values.bottomRows(1).transpose()};
  }
  return oc;
}

std::string terminal_name(const TerminalCondition& t) {
  return std::holds_alternative<PenaltyTerminal>(t) ? "penalty" : "pinned";
}

std::string noise_name(NoiseMode m) { return m == NoiseMode::kSde ? "sde" : "ode_random_init"; }

}  // namespace

void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto prov = provenance(cfg, "simulate");
  const TrajectoryEnsemble ens = simulate_particles(cfg.model, cfg.sim);
  if (cfg.output.csv) io::write_atomic(out_dir / "trajectories.csv", io::ensemble_csv(ens, prov));
  if (cfg.output.binary) io::write_atomic(out_dir / "trajectories.bin", io::ensemble_binary(ens, prov));

  Matrix means(ens.states.size(), ens.dim());
  for (std::size_t k = 0; k < ens.states.size(); ++k) means.row(k) = ens.states[k].colwise().mean();
  if (cfg.output.gnuplot) {
    for (int c = 0; c < ens.dim(); ++c) {
      const std::string suffix = ens.dim() > 1 ? "_dim" + std::to_string(c) : "";
      io::write_atomic(out_dir / ("mean_path" + suffix + ".dat"),
                       io::gnuplot_data(ens.times, column(means, c), "time", "mean", prov));
    }
  }
  const Matrix& last = ens.states.back();
  const Vector mean = last.colwise().mean().transpose();
  const Vector spread = ((last.rowwise() - mean.transpose()).colwise().squaredNorm() /
                         std::max<Eigen::Index>(1, last.rows() - 1))
                            .cwiseSqrt()
                            .transpose();
  json summary = {{"n_steps", ens.n_steps()},
                  {"n_particles", ens.n_particles()},
                  {"d", ens.dim()},
                  {"csv_rows", static_cast<long long>(ens.states.size()) * ens.n_particles() * ens.dim()},
                  {"terminal_mean", vector_json(mean)},
                  {"terminal_std", vector_json(spread)}};
  write_json(out_dir / "summary.json", summary, prov);
  log << "simulate: " << ens.n_particles() << " particles, " << ens.n_steps()
      << " steps; terminal mean " << io::format_double(mean[0]) << "\n";
}

void cmd_mptp(const ExperimentConfig& cfg, MptpMethod method, const fs::path& out_dir, std::ostream& log) {
  const auto prov = provenance(cfg, "mptp");
  json report = {{"options", options_json(cfg)}};
  std::optional<MptpSolution> direct, shooting;

  if (method != MptpMethod::kShooting) {
    if (cfg.solver.multistart > 1) {
      const auto minima = multistart_direct(cfg.model, cfg.M, cfg.solver.multistart, cfg.seed, cfg.solver.options);
      json list = json::array();
      std::vector<std::vector<double>> rows;
      for (std::size_t r = 0; r < minima.size(); ++r) {
        list.push_back(solution_json(minima[r]));
        rows.push_back({static_cast<double>(r), minima[r].action.total, minima[r].action.kinetic,
                        minima[r].action.divergence, static_cast<double>(minima[r].diagnostics.iterations)});
        write_grid(cfg, out_dir, "minimum" + std::to_string(r) + "_path", minima[r].path.values, minima[r].path.T, prov);
      }
      report["minima"] = list;
      if (cfg.output.csv) {
        io::write_atomic(out_dir / "minima.csv",
                         io::table_csv({"rank", "action", "kinetic", "divergence", "iterations"}, rows, prov));
      }
      direct = minima.front();
      log << "mptp: " << minima.size() << " distinct minima from " << cfg.solver.multistart << " starts\n";
    } else {
      direct = minimize_action_direct(cfg.model, cfg.M, std::nullopt, cfg.solver.options);
    }
    report["direct"] = solution_json(*direct);
    write_solution(cfg, out_dir, "direct_", *direct, prov);
    log << "mptp direct: action " << io::format_double(direct->action.total) << " after "
        << direct->diagnostics.iterations << " iterations\n";
  }

  if (method != MptpMethod::kDirect) {
    try {
      shooting = shooting_mptp(cfg.model, cfg.M, std::nullopt, cfg.solver.options);
    } catch (const std::runtime_error&) {
      if (!direct) throw;
      shooting = shooting_mptp(cfg.model, cfg.M, Vector(direct->control.values.row(0).transpose() / cfg.model.sigma),
                               cfg.solver.options);
    }
    report["shooting"] = solution_json(*shooting);
    report["shooting"]["initial_costate"] = vector_json(shooting->costate->values.row(0).transpose());
    write_solution(cfg, out_dir, "shooting_", *shooting, prov);
    log << "mptp shooting: action " << io::format_double(shooting->action.total) << ", terminal miss "
        << io::format_double(shooting->diagnostics.terminal_miss) << "\n";
  }

  if (direct && shooting) {
    const json cv = {
        {"path_gap", (direct->path.values - shooting->path.values).lpNorm<Eigen::Infinity>()},
        {"control_gap", (direct->control.values - shooting->control.values).lpNorm<Eigen::Infinity>()},
        {"action_gap", std::abs(direct->action.total - shooting->action.total)}};
    report["cross_validation"] = cv;
    write_json(out_dir / "cross_validation.json", cv, prov);
    log << "mptp cross-validation: path gap " << io::format_double(cv["path_gap"].get<double>()) << "\n";
  }
  write_json(out_dir / "action.json", report, prov);
}

void cmd_residual(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto prov = provenance(cfg, "residual");
  const OptimalControl oc = optimal_control(cfg);
  const ResidualCurve q = residual_meanfield(cfg.model, oc.theta, oc.terminal);
  const ResidualCurve qn = residual_particles(cfg.model, oc.theta, cfg.study.n_particles, cfg.study.seed,
                                              cfg.study.noise, oc.terminal);
  const Matrix dq = residual_jacobian(cfg.model, oc.theta, MeanfieldTarget{}, oc.terminal);

  write_grid(cfg, out_dir, "control", oc.theta.values, oc.theta.T, prov);
  write_grid(cfg, out_dir, "residual_meanfield", q.values, q.T, prov);
  write_grid(cfg, out_dir, "residual_particles", qn.values, qn.T, prov);
  if (cfg.output.csv) io::write_atomic(out_dir / "jacobian.csv", io::matrix_csv(dq, prov));
  const json summary = {{"terminal", terminal_name(oc.terminal)},
                        {"noise", noise_name(cfg.study.noise)},
                        {"n_particles", cfg.study.n_particles},
                        {"residual_norm", q.norm},
                        {"particle_residual_norm", qn.norm},
                        {"gap_norm", ResidualCurve::from_values(q.T, qn.values - q.values).norm},
                        {"jacobian_rows", dq.rows()}};
  write_json(out_dir / "summary.json", summary, prov);
  log << "residual: |Q(theta*)| = " << io::format_double(q.norm) << ", |Q_N(theta*)| = "
      << io::format_double(qn.norm) << " (N = " << cfg.study.n_particles << ")\n";
}

void cmd_converge(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto prov = provenance(cfg, "converge");
  const StudyConfig& st = cfg.study;
  std::vector<double> ns, means;

  if (st.kind == GapStudy::kControl) {
    const ControlGapTable table = control_gap_study(cfg.model, st.n_list, cfg.M, st.replicates, st.seed,
                                                    cfg.solver.options);
    std::vector<std::vector<double>> rows;
    for (const auto& r : table.rows) {
      rows.push_back({static_cast<double>(r.n), static_cast<double>(r.replicates), r.mean_gap, r.std_gap});
      ns.push_back(r.n);
      means.push_back(r.mean_gap);
    }
    if (cfg.output.csv) {
      io::write_atomic(out_dir / "control_gap.csv",
                       io::table_csv({"N", "replicates", "mean_gap", "std_gap"}, rows, prov));
    }
    if (cfg.output.gnuplot) {
      io::write_atomic(out_dir / "control_gap.dat", io::gnuplot_data(ns, means, "N", "mean_gap", prov));
    }
    write_json(out_dir / "summary.json",
               {{"kind", "control"}, {"increases", table.increases}, {"monotone_trend", table.monotone_trend}},
               prov);
    log << "converge (control gap): monotone trend " << (table.monotone_trend ? "yes" : "no") << "\n";
    return;
  }

  const OptimalControl oc = optimal_control(cfg);
  const StudySetup setup{st.noise, oc.terminal};
  const bool jac = st.kind == GapStudy::kJacobian;
  const double provisional = st.s_threshold.value_or(0.0);
  ConvergenceTable table =
      jac ? jacobian_convergence_study(cfg.model, oc.theta, st.n_list, st.replicates, provisional, st.seed, setup)
          : residual_convergence_study(cfg.model, oc.theta, st.n_list, st.replicates, provisional, st.seed, setup);
  if (!st.s_threshold) table.set_threshold(table.rows[std::min<std::size_t>(1, table.rows.size() - 1)].mean_gap);

  std::vector<std::vector<double>> rows;
  for (const auto& r : table.rows) {
    rows.push_back({static_cast<double>(r.n), static_cast<double>(r.replicates), r.mean_gap, r.std_gap, r.tail_prob});
    ns.push_back(r.n);
    means.push_back(r.mean_gap);
  }
  const std::string stem = jac ? "jacobian_convergence" : "convergence";
  if (cfg.output.csv) {
    io::write_atomic(out_dir / (stem + ".csv"),
                     io::table_csv({"N", "replicates", "mean_gap", "std_gap", "tail_prob"}, rows, prov));
  }
  if (cfg.output.gnuplot) {
    io::write_atomic(out_dir / (stem + ".dat"), io::gnuplot_data(ns, means, "N", "mean_gap", prov));
  }
  const json summary = {{"kind", jac ? "jacobian" : "residual"},
                        {"terminal", terminal_name(oc.terminal)},
                        {"noise", noise_name(st.noise)},
                        {"slope", table.slope},
                        {"intercept", table.intercept},
                        {"threshold", table.threshold},
                        {"tail_increases", table.tail_increases},
                        {"tail_monotone", table.tail_monotone}};
  write_json(out_dir / "summary.json", summary, prov);
  log << "converge: log-log slope " << io::format_double(table.slope) << ", tail monotone "
      << (table.tail_monotone ? "yes" : "no") << "\n";
}

void cmd_chaos(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto prov = provenance(cfg, "chaos");
  ChaosOptions opts;
  opts.common_random_numbers = cfg.study.common_random_numbers;
  SimConfig sim = cfg.sim;
  sim.seed = cfg.study.seed;
  const ChaosTable table = chaos_gap(cfg.model, cfg.study.n_list, cfg.study.m_ref, sim, cfg.study.replicates, opts);
  std::vector<std::vector<double>> rows;
  std::vector<double> ns, means;
  for (const auto& r : table.rows) {
    rows.push_back({static_cast<double>(r.n), r.mean_gap, r.std_gap});
    ns.push_back(r.n);
    means.push_back(r.mean_gap);
  }
  if (cfg.output.csv) io::write_atomic(out_dir / "chaos.csv", io::table_csv({"N", "mean_w2", "std_w2"}, rows, prov));
  if (cfg.output.gnuplot) io::write_atomic(out_dir / "chaos.dat", io::gnuplot_data(ns, means, "N", "mean_w2", prov));
  const json summary = {{"m_ref", cfg.study.m_ref},
                        {"replicates", cfg.study.replicates},
                        {"slope", table.slope},
                        {"intercept", table.intercept},
                        {"increases", table.increases},
                        {"monotone_trend", table.monotone_trend}};
  write_json(out_dir / "summary.json", summary, prov);
  log << "chaos: slope " << io::format_double(table.slope) << ", monotone trend "
      << (table.monotone_trend ? "yes" : "no") << "\n";
}

void cmd_stability(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const auto prov = provenance(cfg, "stability");
  const OptimalControl oc = optimal_control(cfg);
  StabilityOptions so;
  so.rho = cfg.study.rho;
  so.n_probe = cfg.study.n_probe;
  so.n_particles = cfg.study.n_particles;
  so.seed = cfg.study.seed;
  so.setup = {cfg.study.noise, oc.terminal};
  const StabilityReport rep = stability_report(cfg.model, oc.theta, so);

  std::vector<double> idx, sv = rep.singular_values;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    idx.push_back(static_cast<double>(i));
    rows.push_back({static_cast<double>(i), sv[i]});
  }
  if (cfg.output.csv) io::write_atomic(out_dir / "singular_values.csv", io::table_csv({"index", "value"}, rows, prov));
  if (cfg.output.gnuplot) {
    io::write_atomic(out_dir / "singular_values.dat", io::gnuplot_data(idx, sv, "index", "singular_value", prov));
  }
  const json summary = {{"terminal", terminal_name(oc.terminal)},
                        {"min_singular", rep.min_singular},
                        {"max_singular", rep.max_singular},
                        {"nonsingular", rep.nonsingular},
                        {"inv_norm", rep.inv_norm},
                        {"rho", rep.rho},
                        {"rho0", rep.rho0},
                        {"k_rho0", rep.k_rho0},
                        {"k_lipschitz_lower_bound", rep.k_lipschitz},
                        {"s0", rep.s0},
                        {"n_probe", rep.n_probe}};
  write_json(out_dir / "stability.json", summary, prov);
  log << "stability: min singular value " << io::format_double(rep.min_singular) << ", K_rho0 "
      << io::format_double(rep.k_rho0) << ", rho0 " << io::format_double(rep.rho0) << "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Most probable transition paths for mean-field SDEs"};
  app.require_subcommand(1);
  std::string config_path, out_dir, method_name = "direct";
  std::optional<std::uint64_t> seed;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration document")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seed", seed, "master seed (overrides the configuration)");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "simulate the particle system");
  CLI::App* mptp = app.add_subcommand("mptp", "compute the most probable transition path");
  CLI::App* residual = app.add_subcommand("residual", "evaluate Q and Q_N at the optimal control");
  CLI::App* converge = app.add_subcommand("converge", "Q_N -> Q convergence study");
  CLI::App* chaos = app.add_subcommand("chaos", "propagation-of-chaos study");
  CLI::App* stability = app.add_subcommand("stability", "stability constants of the residual map");
  for (CLI::App* sub : {simulate, mptp, residual, converge, chaos, stability}) add_common(sub);
  mptp->add_option("--method", method_name, "direct | shooting | both")
      ->check(CLI::IsMember({"direct", "shooting", "both"}));

  std::vector<const char*> argv{"mptp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.override_seed(*seed);
    const fs::path dir = out_dir.empty() ? fs::path(cfg.output.directory) : fs::path(out_dir);
    fs::create_directories(dir);
    if (simulate->parsed()) {
      cmd_simulate(cfg, dir, out);
    } else if (mptp->parsed()) {
      const MptpMethod m = method_name == "both"       ? MptpMethod::kBoth
                           : method_name == "shooting" ? MptpMethod::kShooting
                                                       : MptpMethod::kDirect;
      cmd_mptp(cfg, m, dir, out);
    } else if (residual->parsed()) {
      cmd_residual(cfg, dir, out);
    } else if (converge->parsed()) {
      cmd_converge(cfg, dir, out);
    } else if (chaos->parsed()) {
      cmd_chaos(cfg, dir, out);
    } else {
      cmd_stability(cfg, dir, out);
    }
  } catch (const NonConvergence& e) {
    err << "error: " << e.what() << "\n";
    return kNonConvergence;
  } catch (const NumericalFailure& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::logic_error& e) {
    // InvalidArgument, ConfigError, UnsupportedDimension, UnimplementedKernel
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  }
  return kOk;
}

}  // namespace mptp::cli
