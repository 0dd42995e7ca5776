#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "floquet/cli.hpp"
#include "support.hpp"

using namespace floquet;
using namespace floquet::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("floquet_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome lab(const std::string& args, const std::string& tag) {
  const fs::path dir = scratch("io_" + tag);
  const std::string cmd = std::string(FLOQUET_LAB_EXE) + " " + args + " > " + (dir / "stdout").string() + " 2> " +
                          (dir / "stderr").string();
  const int status = std::system(cmd.c_str());
  Outcome r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout");
  r.err = slurp(dir / "stderr");
  return r;
}

std::string config(const std::string& name) { return std::string(FLOQUET_CONFIG_DIR) + "/" + name; }

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path p = scratch("cfg_" + name) / (name + ".json");
  std::ofstream(p) << body;
  return p;
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* provenance = nullptr) {
  std::ifstream is(p);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.rfind("#", 0) == 0) {
      if (provenance) *provenance = line;
      continue;
    }
    if (!header) {
      header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

RVec dense_cosine_bands(double k, int M) {
  const int n = 2 * M + 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double q = k + kTwoPi * (i - M);
    h(i, i) = q * q;
    if (i + 1 < n) h(i, i + 1) = h(i + 1, i) = 1.0;
  }
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h, Eigen::EigenvaluesOnly).eigenvalues();
}

const char* kUndrivenInvariance = R"({
  "lattice": {"type": "vectors", "vectors": [[1.0]]},
  "potential": {"type": "cosine_sum", "terms": [{"g": [1], "amplitude": 1.0}]},
  "basis": {"cutoff": 28.274333882308138},
  "target": {"k_reduced": [0.25], "band": 1},
  "drive": {"type": "none", "period": 0.5},
  "effective": {"model": "auto", "d0": 1.0},
  "epsilons": [0.1, 0.05],
  "arc": {"g": 2.0},
  "invariance": {"mode": "p0_random", "per_axis": 12, "n_probe": 4, "power_steps": 2},
  "seed": 5
})";

}  // namespace

TEST(Cli, FreeBandsMatchPlaneWaves) {
  const fs::path out = scratch("bands");
  const Outcome r = lab("bands --config " + config("free_particle_bands.json") + " --out " + out.string(), "bands");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(out / "bands.csv");
  ASSERT_EQ(rows.size(), 33u);
  for (const auto& row : rows) {
    const double k = row[0];
    std::vector<double> want;
    for (int m = -4; m <= 4; ++m) want.push_back((k + kTwoPi * m) * (k + kTwoPi * m));
    std::sort(want.begin(), want.end());
    for (std::size_t b = 1; b < row.size(); ++b) EXPECT_NEAR(row[b], want[b - 1], 1e-9 * (1 + want[b - 1]));
  }
}

TEST(Cli, UndrivenMonodromyExponents) {
  const fs::path out = scratch("mono");
  const Outcome r = lab("monodromy --config " + config("cosine_monodromy_undriven.json") + " --out " + out.string(), "mono");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(out / "monodromy.csv");
  ASSERT_EQ(rows.size(), 33u);
  for (const auto& row : rows) {
    // eps, steps, k, theta_1..9, defect; T_per / eps = 5
    const RVec e = dense_cosine_bands(row[2], 4);  // same nine waves as the config
    std::vector<double> want, got(row.begin() + 3, row.begin() + 12);
    for (int b = 0; b < 9; ++b) want.push_back(wrap_angle(5.0 * e(b)));
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    for (int b = 0; b < 9; ++b) EXPECT_LT(std::abs(wrap_angle(want[b] - got[b])), 1e-8);
    EXPECT_LT(row[12], 1e-10);
  }
}

TEST(Cli, ArtifactsCarryHashAndSeed) {
  const fs::path out = scratch("prov");
  const Outcome r = lab("enclosure --config " + config("transport_enclosure.json") + " --out " + out.string() + " --seed 42",
                    "prov");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["seed"], 42);
  const auto enc = nlohmann::json::parse(slurp(out / "enclosure.json"));
  EXPECT_EQ(enc["config_hash"], summary["config_hash"]);
  EXPECT_EQ(enc["seed"], 42);
  EXPECT_NEAR(enc["enclosure"]["g0"].get<double>(), kPi / 4, 1e-12);

  const fs::path out2 = scratch("prov2");
  ASSERT_EQ(lab("bands --config " + config("free_particle_bands.json") + " --out " + out2.string(), "prov2").code, 0);
  std::string line;
  read_csv(out2 / "bands.csv", &line);
  EXPECT_NE(line.find("config_hash="), std::string::npos);
  EXPECT_NE(line.find("seed=1"), std::string::npos);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path cfg = write_config("det", kUndrivenInvariance);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(lab("invariance --config " + cfg.string() + " --out " + a.string(), "det_a").code, 0);
  ASSERT_EQ(lab("invariance --config " + cfg.string() + " --out " + b.string() + " --threads 2", "det_b").code, 0);
  for (const char* f : {"residuals.csv", "invariance.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, UndrivenInvarianceResidualsVanish) {
  const fs::path cfg = write_config("undriven", kUndrivenInvariance);
  const fs::path out = scratch("undriven");
  const Outcome r = lab("invariance --config " + cfg.string() + " --out " + out.string(), "undriven");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(out / "residuals.csv");
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& row : rows) EXPECT_LT(row[1], 1e-13);
}

TEST(Cli, HashIgnoresFormatting) {
  const std::string compact =
      R"({"seed":5,"lattice":{"type":"vectors","vectors":[[1.0]]},"potential":{"type":"zero"},"basis":{"cutoff":20.0}})";
  const std::string spaced = "{\n  // comment\n  \"lattice\": {\"vectors\": [[1.0]], \"type\": \"vectors\"},\n"
                             "  \"potential\": {\"type\": \"zero\"},\n  \"basis\": {\"cutoff\": 20.0},\n  \"seed\": 5\n}";
  const fs::path a = write_config("hash_a", compact), b = write_config("hash_b", spaced);
  const Outcome ra = lab("bands --config " + a.string() + " --out " + scratch("hash_oa").string(), "hash_a");
  const Outcome rb = lab("bands --config " + b.string() + " --out " + scratch("hash_ob").string(), "hash_b");
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(nlohmann::json::parse(ra.out)["config_hash"], nlohmann::json::parse(rb.out)["config_hash"]);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const Outcome missing = lab("bands --config /nonexistent/floquet.json", "missing");
  EXPECT_EQ(missing.code, 2);
  EXPECT_EQ(nlohmann::json::parse(missing.err)["error"]["kind"], "config");

  const fs::path cfg = write_config("unknown", R"({"lattice": {"type": "vectors", "vectors": [[1.0]]},
    "potential": {"type": "zero"}, "basis": {"cutoff": 20.0}, "colour": "blue"})");
  const Outcome unknown = lab("bands --config " + cfg.string() + " --out " + scratch("unknown_o").string(), "unknown");
  EXPECT_EQ(unknown.code, 2);
  const auto err = nlohmann::json::parse(unknown.err);
  EXPECT_EQ(err["error"]["code"], "unknown_key");

  EXPECT_EQ(lab("frobnicate", "badsub").code, 2);
  EXPECT_EQ(lab("bands", "noconfig").code, 2);
}

TEST(Cli, WideBandwidthIsHypothesisExit) {
  const fs::path cfg = write_config("wide", R"({
    "lattice": {"type": "vectors", "vectors": [[1.0]]},
    "potential": {"type": "zero"},
    "basis": {"cutoff": 20.0},
    "drive": {"type": "cosine", "amplitude": 1.0, "direction": [1.0], "period": 6.283185307179586},
    "effective": {"model": "transport", "c": [1.0], "d0": 0.6}
  })");
  const Outcome r = lab("enclosure --config " + cfg.string() + " --out " + scratch("wide_o").string(), "wide");
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"]["kind"], "hypothesis");
}

TEST(Cli, ExitCodeTable) {
  EXPECT_EQ(exit_code(ErrorKind::Config), 2);
  EXPECT_EQ(exit_code(ErrorKind::Numeric), 3);
  EXPECT_EQ(exit_code(ErrorKind::Hypothesis), 4);
  EXPECT_EQ(exit_code(ErrorKind::Resource), 2);
  const auto subs = subcommands();
  for (const char* s : {"bands", "degeneracy", "monodromy", "enclosure", "invariance", "effective-validate", "selftest"})
    EXPECT_NE(std::find(subs.begin(), subs.end(), s), subs.end()) << s;
}
