#pragma once

#include "mptp/errors.hpp"
#include "mptp/model.hpp"
#include "mptp/pmp.hpp"
#include "mptp/simulate.hpp"
#include "mptp/solve.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mptp {

// Invalid configuration document; the message starts with the dotted field path.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class TerminalMode { kPenalty, kPinned };

struct SolverConfig {
  SolverOptions options;
  TerminalMode terminal = TerminalMode::kPenalty;  // for residual-based commands
  double rho_pen = 1e6;
  int multistart = 1;
};

enum class GapStudy { kResidual, kJacobian, kControl };

struct StudyConfig {
  std::vector<int> n_list{16, 64, 256, 1024};
  int replicates = 32;
  std::optional<double> s_threshold;  // default: mean gap of the second N
  std::optional<double> rho;          // stability ball radius
  std::uint64_t seed = 0;
  NoiseMode noise = NoiseMode::kSde;
  GapStudy kind = GapStudy::kResidual;
  int n_probe = 32;
  int n_particles = 16;  // stability probes and residual command
  int m_ref = 20000;
  bool common_random_numbers = true;
};

struct OutputConfig {
  std::string directory = "out";
  bool csv = true;
  bool gnuplot = true;
  bool binary = false;
};

/// JSON document:
///   seed, model{d, sigma, T, x0, xT, kernel{family, kappa, lambda, a, b,
///   potential}, mu0{type, mean, std}}, grid{M | dt}, solver{...},
///   sim{n_steps, dt, n_particles, seed}, study{...}, output{directory, formats}
/// Unknown keys are rejected. Seeds of sim and study default to the top-level seed.
struct ExperimentConfig {
  ModelSpec model;
  int M = 100;
  SolverConfig solver;
  SimConfig sim;
  StudyConfig study;
  OutputConfig output;
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;  // FNV-1a of the normalised document

  // Replaces the master seed and every seed derived from it.
  void override_seed(std::uint64_t s);
};

ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace mptp
