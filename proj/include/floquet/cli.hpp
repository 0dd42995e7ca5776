#pragma once

// Subcommand pipelines behind the floquet_lab executable. Each writes its
// artifacts into an output directory and returns a JSON summary; errors are
// thrown as floquet::Error and mapped to exit codes by the caller.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "floquet/config.hpp"
#include "floquet/report.hpp"
#include "floquet/selftest.hpp"

namespace floquet {

struct RunOptions {
  std::string subcommand;
  std::string config_path;  // unused by selftest
  std::string out_dir;      // empty: config output.directory, else "floquet_out"
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"bands",    "degeneracy", "monodromy",         "enclosure",
                                              "invariance", "effective-validate", "selftest"};
  return names;
}

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Numeric: return 3;
    case ErrorKind::Hypothesis: return 4;
    case ErrorKind::Config:
    case ErrorKind::Resource: break;
  }
  return 2;
}

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Hypothesis: return "hypothesis";
    case ErrorKind::Resource: return "resource";
  }
  return "unknown";
}

inline nlohmann::json error_json(const Error& e) {
  return {{"error", {{"kind", to_string(e.kind())}, {"code", e.code()}, {"message", e.what()}}}};
}

namespace cli_detail {

struct Context {
  ExperimentConfig config;
  std::string hash;
  std::uint64_t seed = 1;
  std::filesystem::path out;
  int threads = 1;
  std::vector<std::string> artifacts;

  nlohmann::json header(const std::string& subcommand) const {
    return {{"subcommand", subcommand}, {"config_hash", hash}, {"seed", seed}};
  }

  std::ofstream open(const std::string& name) {
    std::ofstream os(out / name, std::ios::binary);
    if (!os) throw resource_error("output_unwritable", "cannot write " + (out / name).string());
    artifacts.push_back(name);
    return os;
  }

  void write_json(const std::string& name, const nlohmann::json& j) {
    auto os = open(name);
    os << j.dump(2) << '\n';
  }
};

inline double arc_half_width(const ExperimentConfig& c, double g0) {
  return c.arc_g ? *c.arc_g : g0 + c.arc_fraction * (kPi - g0);
}

inline BandTarget band_target(const DegeneracyInfo& info, const Crystal& crystal) {
  return make_target(crystal, info.k_star, info.band, info.multiplicity);
}

inline EffectivePropagatorOptions propagator_options(const ExperimentConfig& c) {
  EffectivePropagatorOptions o;
  o.n_steps = c.effective.n_steps;
  return o;
}

inline SpectralEnclosure enclosure(const ExperimentConfig& c, const EffectiveModel& model,
                                   const DrivingProfile& drive, int threads) {
  return effective_monodromy_bound(model, c.effective.d0, drive, c.effective.sweep_per_axis, propagator_options(c),
                                   threads);
}

inline nlohmann::json run_bands(Context& ctx) {
  const auto& c = ctx.config;
  auto crystal = build_crystal(c);
  const BandStructure bs = band_structure(crystal, full_zone_grid(crystal->lattice(), c.grid_counts),
                                          static_cast<std::size_t>(c.n_bands), ctx.threads);
  auto os = ctx.open("bands.csv");
  write_csv_provenance(os, ctx.hash, ctx.seed);
  write_bands_csv(os, bs);
  return {{"fibers", bs.grid.size()}, {"n_bands", bs.n_bands}, {"basis_size", crystal->size()},
          {"warnings", bs.warnings}};
}

inline nlohmann::json run_degeneracy(Context& ctx) {
  auto crystal = build_crystal(ctx.config);
  const DegeneracyInfo info = analyze_target(ctx.config, crystal, ctx.threads);
  nlohmann::json j = ctx.header("degeneracy");
  j["degeneracy"] = to_json(info);
  ctx.write_json("degeneracy.json", j);
  return j["degeneracy"];
}

/// Exponents of every fiber of the zone grid, one row per (eps, fiber).
inline nlohmann::json run_monodromy(Context& ctx) {
  const auto& c = ctx.config;
  auto crystal = build_crystal(c);
  const DrivingProfile drive = build_drive(c);
  EvolutionOptions opt;
  opt.negate_static_part = c.negate_static_part;
  if (c.target) {
    const RVec k = target_momentum(c, crystal->lattice());
    opt.energy_shift = fiber_energies(*crystal, k)(static_cast<Eigen::Index>(target_band(c, *crystal, k)));
  }
  auto bank = make_fiber_bank(crystal, full_zone_grid(crystal->lattice(), c.grid_counts), ctx.threads);
  auto os = ctx.open("monodromy.csv");
  write_csv_provenance(os, ctx.hash, ctx.seed);
  const int n = crystal->dimension();
  os << "eps,steps," << (n == 1 ? "k1" : "k1,k2");
  for (std::size_t b = 0; b < crystal->size(); ++b) os << ",theta" << b + 1;
  os << ",unitarity_defect\n";
  os.precision(17);
  std::vector<std::string> warnings;
  double worst = 0.0;
  for (double eps : c.epsilons) {
    const double period = drive.period() / std::pow(eps, drive.exponent());
    const int steps = drive.is_zero() ? 1 : steps_for(period, c.max_dt, c.min_steps);
    const auto monos = fiber_monodromies(*bank, drive, eps, steps, opt, ctx.threads);
    for (const auto& m : monos) {
      os << eps << ',' << steps;
      for (int i = 0; i < n; ++i) os << ',' << m.k(i);
      for (Eigen::Index b = 0; b < m.exponents.size(); ++b) os << ',' << m.exponents(b);
      const double defect = unitarity_defect(m.matrix);
      worst = std::max(worst, defect);
      os << ',' << defect << '\n';
      for (const auto& w : m.warnings) warnings.push_back(w);
    }
  }
  return {{"fibers", bank->size()}, {"epsilons", c.epsilons}, {"energy_shift", opt.energy_shift},
          {"max_unitarity_defect", worst}, {"warnings", warnings}};
}

inline nlohmann::json run_enclosure(Context& ctx) {
  const auto& c = ctx.config;
  auto crystal = build_crystal(c);
  std::optional<DegeneracyInfo> info;
  if (c.effective.model == "auto") info = analyze_target(c, crystal, ctx.threads);
  const EffectiveModel model = build_model(c, *crystal, info ? &*info : nullptr);
  const SpectralEnclosure e = enclosure(c, model, build_drive(c), ctx.threads);
  nlohmann::json j = ctx.header("enclosure");
  j["enclosure"] = to_json(e);
  j["arc_g"] = arc_half_width(c, e.g0);
  ctx.write_json("enclosure.json", j);
  return j["enclosure"];
}

inline nlohmann::json run_invariance(Context& ctx) {
  const auto& c = ctx.config;
  auto crystal = build_crystal(c);
  const DegeneracyInfo info = analyze_target(c, crystal, ctx.threads);
  const EffectiveModel model = build_model(c, *crystal, &info);
  InvarianceSetup s;
  s.crystal = crystal;
  s.target = band_target(info, *crystal);
  s.drive = build_drive(c);
  s.evolution.negate_static_part = c.negate_static_part;
  if (c.probe_mode == "p0_random") s.mode = ProbeMode::P0Random;
  else if (c.probe_mode == "bl_packet") s.mode = ProbeMode::BLPacket;
  else throw config_error("schema", "invariance.mode must be p0_random or bl_packet");
  // BL probes live in bandwidth probe_d0, so the enclosure is taken there
  ExperimentConfig enc_cfg = c;
  if (s.mode == ProbeMode::BLPacket) enc_cfg.effective.d0 = c.probe_d0;
  const SpectralEnclosure e = enclosure(enc_cfg, model, s.drive, ctx.threads);
  s.g0 = e.g0;
  s.g = arc_half_width(c, e.g0);
  s.eps = c.epsilons;
  s.d0 = c.probe_d0;
  s.L = c.window_L;
  s.per_axis = c.per_axis;
  s.n_probe = c.n_probe;
  s.power_steps = c.power_steps;
  s.seed = ctx.seed;
  s.max_dt = c.max_dt;
  s.min_steps = c.min_steps;
  s.threads = ctx.threads;
  const ResidualTable t = near_invariance_experiment(s);
  {
    auto os = ctx.open("residuals.csv");
    write_csv_provenance(os, ctx.hash, ctx.seed);
    write_residual_csv(os, t);
  }
  nlohmann::json j = ctx.header("invariance");
  j["enclosure"] = to_json(e);
  j["window_L"] = s.L;
  j["table"] = to_json(t);
  ctx.write_json("invariance.json", j);
  return j["table"];
}

inline nlohmann::json run_validate(Context& ctx) {
  const auto& c = ctx.config;
  auto crystal = build_crystal(c);
  const DegeneracyInfo info = analyze_target(c, crystal, ctx.threads);
  ValidationSetup s;
  s.crystal = crystal;
  s.target = band_target(info, *crystal);
  s.drive = build_drive(c);
  s.model = build_model(c, *crystal, &info);
  s.evolution.negate_static_part = c.negate_static_part;
  s.d0 = c.validation_d0;
  s.width = c.validation_width;
  s.per_axis = c.validation_per_axis;
  s.n_checkpoints = c.n_checkpoints;
  s.max_dt = c.max_dt;
  s.effective = propagator_options(c);
  s.threads = ctx.threads;
  nlohmann::json rows = nlohmann::json::array();
  auto os = ctx.open("validation.csv");
  write_csv_provenance(os, ctx.hash, ctx.seed);
  os << "eps,t,error\n";
  os.precision(17);
  std::vector<double> eps_list, max_errors;
  for (double eps : c.epsilons) {
    const ValidationResult r = validate_effective(s, eps);
    for (std::size_t m = 0; m < r.times.size(); ++m) os << eps << ',' << r.times[m] << ',' << r.errors[m] << '\n';
    rows.push_back(to_json(r));
    eps_list.push_back(eps);
    max_errors.push_back(r.max_error);
  }
  nlohmann::json j = ctx.header("effective-validate");
  j["model"] = s.model.name();
  j["results"] = rows;
  j["fitted_exponent"] = eps_list.size() >= 2 ? nlohmann::json(loglog_slope(eps_list, max_errors)) : nlohmann::json();
  ctx.write_json("validation.json", j);
  return {{"model", s.model.name()}, {"max_errors", max_errors}, {"fitted_exponent", j["fitted_exponent"]}};
}

inline nlohmann::json run_selftest_cmd(Context& ctx) {
  const auto checks = run_selftest(ctx.seed, ctx.threads);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& ch : checks)
    list.push_back({{"name", ch.name}, {"passed", ch.passed}, {"value", ch.value}, {"tolerance", ch.tolerance},
                    {"instances", ch.instances}});
  nlohmann::json j = ctx.header("selftest");
  j["checks"] = list;
  j["passed"] = all_passed(checks);
  ctx.write_json("selftest.json", j);
  if (!all_passed(checks)) {
    std::string failed;
    for (const auto& ch : checks)
      if (!ch.passed) failed += (failed.empty() ? "" : "; ") + ch.name;
    throw numeric_error("selftest_failed", "invariant checks failed: " + failed);
  }
  return {{"checks", checks.size()}, {"passed", true}};
}

}  // namespace cli_detail

/// Runs one subcommand; returns the stdout summary.
inline nlohmann::json run(const RunOptions& o) {
  using namespace cli_detail;
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), o.subcommand) == names.end())
    throw config_error("unknown_subcommand", "unknown subcommand " + o.subcommand);
  if (o.threads < 1) throw config_error("bad_threads", "--threads must be >= 1");
  Context ctx;
  ctx.threads = o.threads;
  if (o.subcommand != "selftest" || !o.config_path.empty()) {
    if (o.config_path.empty()) throw config_error("missing_config", o.subcommand + " needs --config");
    ctx.config = load_config(o.config_path);
    ctx.hash = hex64(ctx.config.hash);
    ctx.seed = ctx.config.seed;
  } else {
    ctx.hash = hex64(config_hash(nlohmann::json::object()));
  }
  if (o.seed) ctx.seed = *o.seed;
  ctx.out = !o.out_dir.empty()                        ? o.out_dir
            : !ctx.config.output_directory.empty() ? ctx.config.output_directory
                                                    : std::string("floquet_out");
  std::error_code ec;
  std::filesystem::create_directories(ctx.out, ec);
  if (ec) throw resource_error("output_unwritable", "cannot create " + ctx.out.string() + ": " + ec.message());

  nlohmann::json result;
  if (o.subcommand == "bands") result = run_bands(ctx);
  else if (o.subcommand == "degeneracy") result = run_degeneracy(ctx);
  else if (o.subcommand == "monodromy") result = run_monodromy(ctx);
  else if (o.subcommand == "enclosure") result = run_enclosure(ctx);
  else if (o.subcommand == "invariance") result = run_invariance(ctx);
  else if (o.subcommand == "effective-validate") result = run_validate(ctx);
  else result = run_selftest_cmd(ctx);

  nlohmann::json j = ctx.header(o.subcommand);
  j["result"] = result;
  j["artifacts"] = ctx.artifacts;
  return j;
}

}  // namespace floquet
