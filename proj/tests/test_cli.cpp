#include "doctest.h"

#include "mptp/commands.hpp"

#include "json.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mptp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "mptp_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_config(const std::string& name, const json& doc) {
  const fs::path p = workdir() / (name + ".json");
  std::ofstream(p) << doc.dump(2);
  return p;
}

json base_model(const std::string& family = "zero") {
  return {{"d", 1}, {"sigma", 1.0}, {"T", 1.0}, {"x0", {0.0}}, {"xT", {1.0}}, {"kernel", {{"family", family}}}};
}

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t data_rows(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) n += !l.empty() && l[0] != '#';
  return n - 1;  // column header
}

}  // namespace

TEST_CASE("simulate writes the ensemble and is deterministic") {
  json doc = {{"seed", 4}, {"model", base_model()}, {"sim", {{"n_steps", 50}, {"n_particles", 12}}}};
  doc["output"] = {{"formats", {"csv", "gnuplot", "binary"}}};
  const auto cfg = write_config("sim", doc);
  const auto a = workdir() / "sim_a", b = workdir() / "sim_b";
  REQUIRE(run({"simulate", "--config", cfg.string(), "--out", a.string()}).code == 0);
  REQUIRE(run({"simulate", "--config", cfg.string(), "--out", b.string()}).code == 0);
  CHECK(data_rows(a / "trajectories.csv") == 51u * 12u);
  CHECK(slurp(a / "trajectories.csv") == slurp(b / "trajectories.csv"));
  CHECK(fs::exists(a / "trajectories.bin"));
  CHECK(fs::exists(a / "mean_path.dat"));
  const json s = read_json(a / "summary.json");
  CHECK(s["csv_rows"] == 51 * 12);
  CHECK(s["provenance"]["seed"] == 4);

  const auto c = workdir() / "sim_c";
  REQUIRE(run({"simulate", "--config", cfg.string(), "--out", c.string(), "--seed", "5"}).code == 0);
  CHECK(slurp(a / "trajectories.csv") != slurp(c / "trajectories.csv"));
  CHECK(slurp(c / "trajectories.csv").rfind("# mptp 0.1.0 command=simulate config_hash=", 0) == 0);
}

TEST_CASE("every output file carries provenance") {
  json doc = {{"seed", 8}, {"model", base_model("attract")}, {"grid", {{"M", 20}}}};
  const auto cfg = write_config("prov", doc);
  const auto out = workdir() / "prov";
  REQUIRE(run({"mptp", "--config", cfg.string(), "--out", out.string(), "--method", "both"}).code == 0);
  for (const auto& e : fs::directory_iterator(out)) {
    CAPTURE(e.path().string());
    const std::string text = slurp(e.path());
    if (e.path().extension() == ".json") {
      CHECK(json::parse(text)["provenance"]["version"] == "0.1.0");
    } else {
      CHECK(text.rfind("# mptp 0.1.0", 0) == 0);
      CHECK(text.find("seed=8") != std::string::npos);
    }
  }
}

TEST_CASE("mptp reports and cross-validates") {
  SUBCASE("flat") {
    const auto cfg = write_config("flat", {{"model", base_model()}, {"grid", {{"M", 50}}}});
    const auto out = workdir() / "flat";
    REQUIRE(run({"mptp", "--config", cfg.string(), "--out", out.string(), "--method", "both"}).code == 0);
    const json cv = read_json(out / "cross_validation.json");
    CHECK(cv["path_gap"].get<double>() < 1e-8);
    CHECK(fs::exists(out / "direct_path.csv"));
    CHECK(fs::exists(out / "shooting_control.csv"));
    CHECK(data_rows(out / "direct_path.csv") == 51u);
  }
  SUBCASE("OU closed form") {
    json m = base_model("local_plus_attract");
    m["kernel"] = {{"family", "local_plus_attract"}, {"potential", "linear"}, {"lambda", 1.0}};
    const auto cfg = write_config("ou", {{"model", m}, {"grid", {{"M", 400}}}});
    const auto out = workdir() / "ou";
    REQUIRE(run({"mptp", "--config", cfg.string(), "--out", out.string()}).code == 0);
    const json a = read_json(out / "action.json");
    const double s = std::sinh(1.0);
    CHECK(a["direct"]["action"]["total"].get<double>() ==
          doctest::Approx((std::exp(2.0) - 1.0) / (4 * s * s) - 0.5).epsilon(1e-5));
    CHECK(a["direct"]["midpoint_state"][0].get<double>() == doctest::Approx(std::sinh(0.5) / s).epsilon(1e-6));
  }
  SUBCASE("doublewell multistart") {
    json m = {{"d", 1}, {"sigma", 0.5}, {"T", 5.0}, {"x0", {-1.0}}, {"xT", {1.0}},
              {"kernel", {{"family", "local_plus_attract"}, {"potential", "doublewell"}, {"kappa", 0.5}}}};
    const auto cfg = write_config("dw", {{"model", m}, {"grid", {{"M", 100}}}, {"solver", {{"multistart", 4}}}});
    const auto out = workdir() / "dw";
    REQUIRE(run({"mptp", "--config", cfg.string(), "--out", out.string()}).code == 0);
    const json a = read_json(out / "action.json");
    const auto& minima = a["minima"];
    REQUIRE(minima.size() >= 1u);
    for (std::size_t i = 1; i < minima.size(); ++i) {
      CHECK(minima[i - 1]["action"]["total"].get<double>() <= minima[i]["action"]["total"].get<double>());
    }
    CHECK(data_rows(out / "minima.csv") == minima.size());
  }
}

TEST_CASE("study commands") {
  SUBCASE("converge on the flat model") {
    const auto cfg = write_config("conv", {{"seed", 2},
                                           {"model", base_model()},
                                           {"grid", {{"M", 50}}},
                                           {"study", {{"n_list", {16, 64, 256, 1024}}, {"replicates", 32}}}});
    const auto out = workdir() / "conv";
    REQUIRE(run({"converge", "--config", cfg.string(), "--out", out.string()}).code == 0);
    const json s = read_json(out / "summary.json");
    CHECK(s["slope"].get<double>() > -0.65);
    CHECK(s["slope"].get<double>() < -0.35);
    CHECK(s.contains("tail_monotone"));
    CHECK(data_rows(out / "convergence.csv") == 4u);
    CHECK(fs::exists(out / "convergence.dat"));
  }
  SUBCASE("stability identity") {
    json m = base_model("local_plus_attract");
    m["kernel"] = {{"family", "local_plus_attract"}, {"potential", "linear"}, {"lambda", 1.0}};
    const auto cfg = write_config("stab", {{"model", m}, {"grid", {{"M", 20}}}, {"study", {{"n_probe", 4}}}});
    const auto out = workdir() / "stab";
    REQUIRE(run({"stability", "--config", cfg.string(), "--out", out.string()}).code == 0);
    const json s = read_json(out / "stability.json");
    CHECK(s["k_rho0"].get<double>() == 4.0 * s["inv_norm"].get<double>());
    CHECK(s["nonsingular"] == true);
    CHECK(data_rows(out / "singular_values.csv") == 21u);
  }
  SUBCASE("chaos emits its trend flag") {
    json m = {{"d", 1}, {"sigma", 0.5}, {"T", 1.0}, {"x0", {0.2}}, {"xT", {1.0}},
              {"kernel", {{"family", "local_plus_attract"}, {"potential", "doublewell"}, {"kappa", 1.0}}},
              {"mu0", {{"type", "gaussian"}, {"mean", {0.2}}, {"std", 0.5}}}};
    const auto cfg = write_config(
        "chaos", {{"model", m}, {"study", {{"n_list", {16, 64, 256}}, {"replicates", 8}, {"m_ref", 4000}}}});
    const auto out = workdir() / "chaos";
    REQUIRE(run({"chaos", "--config", cfg.string(), "--out", out.string()}).code == 0);
    const json s = read_json(out / "summary.json");
    CHECK(s["monotone_trend"].is_boolean());
    CHECK(data_rows(out / "chaos.csv") == 3u);
  }
  SUBCASE("residual") {
    const auto cfg = write_config("res", {{"model", base_model("attract")}, {"grid", {{"M", 20}}}});
    const auto out = workdir() / "res";
    REQUIRE(run({"residual", "--config", cfg.string(), "--out", out.string()}).code == 0);
    CHECK(read_json(out / "summary.json")["residual_norm"].get<double>() < 1e-6);
    CHECK(fs::exists(out / "jacobian.csv"));
    CHECK(fs::exists(out / "residual_particles.dat"));
  }
}

TEST_CASE("exit codes") {
  SUBCASE("invalid configuration") {
    json m = base_model();
    m["sigma"] = -1.0;
    const auto cfg = write_config("neg", {{"model", m}});
    const auto r = run({"simulate", "--config", cfg.string(), "--out", (workdir() / "neg").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("model.sigma") != std::string::npos);
    CHECK(run({"simulate", "--config", (workdir() / "absent.json").string()}).code == 1);
    CHECK(run({"simulate"}).code == 1);
    CHECK(run({"launch", "--config", cfg.string()}).code == 1);
    CHECK(run({"mptp", "--config", cfg.string(), "--method", "magic"}).code == 1);
  }
  SUBCASE("solver non-convergence") {
    json m = {{"d", 1}, {"sigma", 0.5}, {"T", 5.0}, {"x0", {-1.0}}, {"xT", {1.0}},
              {"kernel", {{"family", "local_plus_attract"}, {"potential", "doublewell"}}}};
    const auto cfg =
        write_config("cap", {{"model", m}, {"grid", {{"M", 50}}}, {"solver", {{"method", "gd"}, {"max_iters", 2}}}});
    CHECK(run({"mptp", "--config", cfg.string(), "--out", (workdir() / "cap").string()}).code == 2);
  }
  SUBCASE("numerical failure") {
    json m = {{"d", 1}, {"sigma", 1.0}, {"T", 1.0}, {"x0", {30.0}}, {"xT", {1.0}},
              {"kernel", {{"family", "local_plus_attract"}, {"potential", "doublewell"}}}};
    const auto cfg = write_config("blowup", {{"model", m}, {"sim", {{"n_steps", 10}}}});
    CHECK(run({"simulate", "--config", cfg.string(), "--out", (workdir() / "blowup").string()}).code == 3);
  }
  SUBCASE("from the installed binary") {
    const auto cfg = write_config("bin", {{"model", base_model()}});
    const std::string cmd = std::string(MPTP_CLI_PATH) + " simulate --config " + cfg.string() + " --out " +
                            (workdir() / "bin").string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 0);
    const std::string bad = std::string(MPTP_CLI_PATH) + " simulate 2> /dev/null";
    CHECK(WEXITSTATUS(std::system(bad.c_str())) == 1);
  }
}
