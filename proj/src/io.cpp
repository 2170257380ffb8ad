#include "mptp/io.hpp"

#include "mptp/errors.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

namespace mptp::io {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string header_comment(const Provenance& prov) {
  std::string s = "# mptp " + std::string(kToolVersion);
  if (!prov.command.empty()) s += " command=" + prov.command;
  s += " config_hash=" + hex64(prov.config_hash) + " seed=" + std::to_string(prov.seed) + "\n";
  return s;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string ensemble_csv(const TrajectoryEnsemble& ens, const Provenance& prov) {
  std::string s = header_comment(prov);
  s += "step,time,particle,dim,value\n";
  for (std::size_t k = 0; k < ens.states.size(); ++k) {
    const std::string prefix = std::to_string(k) + "," + format_double(ens.times[k]) + ",";
    const Matrix& X = ens.states[k];
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        s += prefix + std::to_string(i) + "," + std::to_string(c) + "," + format_double(X(i, c)) + "\n";
      }
    }
  }
  return s;
}

std::string grid_csv(const Matrix& values, double T, const Provenance& prov) {
  std::string s = header_comment(prov);
  s += "node,time,dim,value\n";
  const auto M = values.rows() - 1;
  for (Eigen::Index k = 0; k < values.rows(); ++k) {
    const double t = M > 0 ? T * static_cast<double>(k) / static_cast<double>(M) : 0.0;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      s += std::to_string(k) + "," + format_double(t) + "," + std::to_string(c) + "," +
           format_double(values(k, c)) + "\n";
    }
  }
  return s;
}

std::string matrix_csv(const Matrix& m, const Provenance& prov) {
  std::string s = header_comment(prov);
  s += "# rows=" + std::to_string(m.rows()) + " cols=" + std::to_string(m.cols()) + "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) s += ",";
      s += format_double(m(r, c));
    }
    s += "\n";
  }
  return s;
}

std::string table_csv(const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows, const Provenance& prov) {
  std::string s = header_comment(prov);
  for (std::size_t c = 0; c < columns.size(); ++c) s += (c ? "," : "") + columns[c];
  s += "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) s += (c ? "," : "") + format_double(row[c]);
    s += "\n";
  }
  return s;
}

std::string gnuplot_data(const std::vector<double>& x, const std::vector<double>& y,
                         std::string_view x_label, std::string_view y_label,
                         const Provenance& prov) {
  if (x.size() != y.size()) throw InvalidArgument("gnuplot_data: x and y lengths differ");
  std::string s = header_comment(prov);
  s += "# " + std::string(x_label) + " " + std::string(y_label) + "\n";
  for (std::size_t i = 0; i < x.size(); ++i) s += format_double(x[i]) + " " + format_double(y[i]) + "\n";
  return s;
}

namespace {

constexpr char kMagic[8] = {'M', 'P', 'T', 'P', 'E', 'N', 'S', '\0'};
constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void put(std::string& s, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  s.append(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvalidArgument("binary ensemble: truncated file");
  return v;
}

}  // namespace

std::string ensemble_binary(const TrajectoryEnsemble& ens, const Provenance& prov) {
  std::string s(kMagic, sizeof kMagic);
  const std::string header = header_comment(prov);
  put<std::uint32_t>(s, kBinaryVersion);
  put<std::uint32_t>(s, static_cast<std::uint32_t>(header.size()));
  s += header;
  put<std::uint64_t>(s, static_cast<std::uint64_t>(ens.n_steps()));
  put<std::uint64_t>(s, static_cast<std::uint64_t>(ens.n_particles()));
  put<std::uint64_t>(s, static_cast<std::uint64_t>(ens.dim()));
  for (double t : ens.times) put<double>(s, t);
  for (const Matrix& X : ens.states) s.append(reinterpret_cast<const char*>(X.data()), X.size() * sizeof(double));
  return s;
}

TrajectoryEnsemble read_ensemble_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw InvalidArgument("binary ensemble: bad magic in " + path.string());
  }
  if (get<std::uint32_t>(in) != kBinaryVersion) throw InvalidArgument("binary ensemble: unsupported version");
  const auto header_len = get<std::uint32_t>(in);
  in.ignore(header_len);
  const auto n_steps = get<std::uint64_t>(in);
  const auto n = get<std::uint64_t>(in);
  const auto d = get<std::uint64_t>(in);
  TrajectoryEnsemble ens;
  ens.times.resize(n_steps + 1);
  for (auto& t : ens.times) t = get<double>(in);
  ens.states.assign(n_steps + 1, Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)));
  for (Matrix& X : ens.states) {
    in.read(reinterpret_cast<char*>(X.data()), static_cast<std::streamsize>(X.size() * sizeof(double)));
    if (!in) throw InvalidArgument("binary ensemble: truncated file");
  }
  return ens;
}

}  // namespace mptp::io
