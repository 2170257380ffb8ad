#pragma once

#include "mptp/grid.hpp"
#include "mptp/pmp.hpp"
#include "mptp/simulate.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mptp::io {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string command;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// "# mptp 0.1.0 command=... config_hash=... seed=..." plus newline.
std::string header_comment(const Provenance& prov);

// Shortest round-trip representation.
std::string format_double(double v);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
void write_atomic(const std::filesystem::path& path, std::string_view content);

// Columns step,time,particle,dim,value; one row per scalar.
std::string ensemble_csv(const TrajectoryEnsemble& ens, const Provenance& prov);

// Columns node,time,dim,value. Used for paths, controls, costates and residuals.
std::string grid_csv(const Matrix& values, double T, const Provenance& prov);

// Dense row-major matrix; a "# rows=R cols=C" line follows the provenance line.
std::string matrix_csv(const Matrix& m, const Provenance& prov);

// Header row plus numeric rows.
std::string table_csv(const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows, const Provenance& prov);

// Whitespace-separated (x, y) pairs with a comment header naming both columns.
std::string gnuplot_data(const std::vector<double>& x, const std::vector<double>& y,
                         std::string_view x_label, std::string_view y_label,
                         const Provenance& prov);

/// Binary ensemble: magic "MPTPENS\0", u32 version, u32 provenance length,
/// provenance bytes, u64 n_steps, u64 N, u64 d, then (n_steps+1) times followed
/// by the states, step-major then particle then dim. Little-endian doubles.
std::string ensemble_binary(const TrajectoryEnsemble& ens, const Provenance& prov);
TrajectoryEnsemble read_ensemble_binary(const std::filesystem::path& path);

}  // namespace mptp::io
