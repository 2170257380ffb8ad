#pragma once

#include "mptp/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mptp::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kNonConvergence = 2,
  kNumericalFailure = 3,
};

enum class MptpMethod { kDirect, kShooting, kBoth };

// Each command writes its artifacts into `out_dir` and a short summary to `log`.
void cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
void cmd_mptp(const ExperimentConfig& cfg, MptpMethod method, const std::filesystem::path& out_dir,
              std::ostream& log);
void cmd_residual(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
void cmd_converge(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
void cmd_chaos(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
void cmd_stability(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Full command line without the program name, e.g.
/// {"mptp", "--config", "ou.json", "--method", "both"}. Maps failures to ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mptp::cli
