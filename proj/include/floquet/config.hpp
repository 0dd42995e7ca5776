#pragma once

// Experiment configuration: a strict JSON schema (unknown keys are errors)
// and the objects built from it.

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "floquet/bloch.hpp"
#include "floquet/drive.hpp"
#include "floquet/effective.hpp"
#include "floquet/lattice.hpp"
#include "floquet/wavepacket.hpp"

namespace floquet {

using json = nlohmann::json;

/// FNV-1a 64 of the canonical dump (object keys sorted, no whitespace).
inline std::uint64_t config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

namespace detail {

/// Reads an object while recording which keys were consumed; finish()
/// rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw config_error("schema", path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& node(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw config_error("schema", "missing key " + where(key));
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const json& v = node(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      throw config_error("schema", "wrong type for " + where(key));
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    return get<T>(key);
  }

  template <class T>
  std::optional<T> maybe(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  ObjectReader child(const std::string& key) { return ObjectReader(node(key), where(key)); }

  std::string where(const std::string& key) const { return path_ + "." + key; }
  const std::string& path() const { return path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw config_error("unknown_key", "unknown key " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline RVec to_rvec(const std::vector<double>& v) {
  RVec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

/// A complex number is a real or a [re, im] pair.
inline cplx parse_complex(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) return {j[0].get<double>(), j[1].get<double>()};
  throw config_error("schema", path + " must be a number or [re, im]");
}

inline Miller parse_miller(const std::vector<int>& m, int dimension, const std::string& path) {
  if (static_cast<int>(m.size()) != dimension) throw config_error("schema", path + " needs one index per dimension");
  return Miller{{m[0], dimension == 2 ? m[1] : 0}};
}

}  // namespace detail

struct TargetConfig {
  std::optional<std::vector<double>> k_reduced;
  std::optional<std::vector<double>> k;
  bool vertex = false;
  std::optional<int> band;  // one-based
  int multiplicity = 1;
  std::optional<double> energy;
  double separation_radius = 0.0;  // 0: 0.1 |b_1|
  double cone_radius = 0.0;
};

struct DriveConfig {
  std::string type = "none";  // none | sine | cosine | circular | fourier
  double period = kTwoPi;
  int exponent = 1;
  double amplitude = 1.0;
  std::vector<double> direction;
  std::vector<std::pair<int, std::vector<cplx>>> harmonics;
};

struct EffectiveConfig {
  std::string model = "auto";  // auto | transport | dirac | schrodinger | matrix_schrodinger
  std::vector<double> c;
  double v_D = 0.0;
  std::vector<std::vector<double>> half_hessian;
  double alpha = 0.0, gamma_tilde = 0.0, beta = 0.0;
  double d0 = 1.0;
  int sweep_per_axis = 24;
  int n_steps = 2000;
};

struct ExperimentConfig {
  json raw;
  std::uint64_t hash = 0;

  // lattice and potential
  std::vector<std::vector<double>> lattice_vectors;
  PotentialSpec potential = ZeroPotential{};
  double cutoff = 0.0;
  std::size_t max_basis = 20000;

  std::vector<int> grid_counts;
  int n_bands = 4;

  std::optional<TargetConfig> target;
  DriveConfig drive;
  EffectiveConfig effective;

  double max_dt = 0.01;
  int min_steps = 64;
  bool negate_static_part = false;

  std::vector<double> epsilons{0.1, 0.05, 0.025};
  std::optional<double> arc_g;
  double arc_fraction = 0.25;
  double window_L = 1.0;

  std::string probe_mode = "p0_random";
  double probe_d0 = 1.0;
  int per_axis = 32;
  int n_probe = 16;
  int power_steps = 8;

  double validation_d0 = 1.0;
  double validation_width = 0.25;
  int validation_per_axis = 32;
  int n_checkpoints = 8;

  std::uint64_t seed = 1;
  std::string output_directory;

  int dimension() const { return static_cast<int>(lattice_vectors.size()); }
};

inline ExperimentConfig parse_config(const json& j) {
  using detail::ObjectReader;
  ExperimentConfig c;
  c.raw = j;
  c.hash = config_hash(j);
  ObjectReader root(j, "config");

  {
    ObjectReader lat = root.child("lattice");
    const auto type = lat.get_or<std::string>("type", "vectors");
    if (type == "hexagonal") {
      const double a = lat.get_or<double>("a", 1.0);
      const Lattice h = hexagonal_lattice(a);
      c.lattice_vectors = {{h.primitive()(0, 0), h.primitive()(1, 0)}, {h.primitive()(0, 1), h.primitive()(1, 1)}};
    } else if (type == "vectors") {
      c.lattice_vectors = lat.get<std::vector<std::vector<double>>>("vectors");
    } else {
      throw config_error("schema", "lattice.type must be vectors or hexagonal");
    }
    lat.finish();
  }
  const Lattice lattice = make_lattice(c.lattice_vectors);
  const int n = lattice.dimension();

  {
    ObjectReader pot = root.child("potential");
    const auto type = pot.get<std::string>("type");
    if (type == "zero") {
      c.potential = ZeroPotential{};
    } else if (type == "honeycomb") {
      c.potential = HoneycombPotential{pot.get<double>("amplitude")};
    } else if (type == "cosine_sum") {
      CosineSumPotential cs;
      const json& terms = pot.node("terms");
      if (!terms.is_array()) throw config_error("schema", "potential.terms must be an array");
      for (std::size_t i = 0; i < terms.size(); ++i) {
        ObjectReader t(terms[i], "potential.terms[" + std::to_string(i) + "]");
        const Miller g = detail::parse_miller(t.get<std::vector<int>>("g"), n, t.where("g"));
        cs.terms.push_back({g, detail::parse_complex(t.node("amplitude"), t.where("amplitude"))});
        t.finish();
      }
      c.potential = cs;
    } else {
      throw config_error("schema", "potential.type must be zero, cosine_sum or honeycomb");
    }
    pot.finish();
  }

  {
    ObjectReader b = root.child("basis");
    c.cutoff = b.get<double>("cutoff");
    c.max_basis = b.get_or<std::size_t>("max_size", 20000);
    b.finish();
  }

  if (root.has("grid")) {
    ObjectReader g = root.child("grid");
    c.grid_counts = g.get<std::vector<int>>("counts");
    g.finish();
  } else {
    c.grid_counts.assign(static_cast<std::size_t>(n), 33);
  }
  c.n_bands = root.get_or<int>("n_bands", 4);

  if (root.has("target")) {
    ObjectReader t = root.child("target");
    TargetConfig tc;
    tc.k_reduced = t.maybe<std::vector<double>>("k_reduced");
    tc.k = t.maybe<std::vector<double>>("k");
    tc.vertex = t.get_or<bool>("vertex", false);
    tc.band = t.maybe<int>("band");
    tc.multiplicity = t.get_or<int>("multiplicity", 1);
    tc.energy = t.maybe<double>("energy");
    tc.separation_radius = t.get_or<double>("separation_radius", 0.0);
    tc.cone_radius = t.get_or<double>("cone_radius", 0.0);
    const int given = (tc.k_reduced ? 1 : 0) + (tc.k ? 1 : 0) + (tc.vertex ? 1 : 0);
    if (given != 1) throw config_error("schema", "target needs exactly one of k_reduced, k, vertex");
    if (!tc.band && !tc.energy) throw config_error("schema", "target needs band or energy");
    if (tc.multiplicity < 1 || tc.multiplicity > 2) throw config_error("schema", "target.multiplicity must be 1 or 2");
    t.finish();
    c.target = tc;
  }

  if (root.has("drive")) {
    ObjectReader d = root.child("drive");
    DriveConfig& dc = c.drive;
    dc.type = d.get<std::string>("type");
    dc.period = d.get_or<double>("period", kTwoPi);
    dc.exponent = d.get_or<int>("exponent", 1);
    if (dc.type == "sine" || dc.type == "cosine") {
      dc.amplitude = d.get<double>("amplitude");
      dc.direction = d.get<std::vector<double>>("direction");
      if (static_cast<int>(dc.direction.size()) != n) throw config_error("schema", "drive.direction has wrong length");
    } else if (dc.type == "circular") {
      dc.amplitude = d.get<double>("amplitude");
      if (n != 2) throw config_error("schema", "circular drive needs a 2D lattice");
    } else if (dc.type == "fourier") {
      const json& hs = d.node("harmonics");
      if (!hs.is_array()) throw config_error("schema", "drive.harmonics must be an array");
      for (std::size_t i = 0; i < hs.size(); ++i) {
        ObjectReader h(hs[i], "drive.harmonics[" + std::to_string(i) + "]");
        const int m = h.get<int>("m");
        const json& co = h.node("coeff");
        if (!co.is_array() || static_cast<int>(co.size()) != n)
          throw config_error("schema", h.where("coeff") + " needs one entry per dimension");
        std::vector<cplx> v;
        for (std::size_t k = 0; k < co.size(); ++k) v.push_back(detail::parse_complex(co[k], h.where("coeff")));
        dc.harmonics.emplace_back(m, v);
        h.finish();
      }
    } else if (dc.type != "none") {
      throw config_error("schema", "drive.type must be none, sine, cosine, circular or fourier");
    }
    d.finish();
  }

  if (root.has("effective")) {
    ObjectReader e = root.child("effective");
    EffectiveConfig& ec = c.effective;
    ec.model = e.get_or<std::string>("model", "auto");
    ec.d0 = e.get_or<double>("d0", 1.0);
    ec.sweep_per_axis = e.get_or<int>("sweep_per_axis", 24);
    ec.n_steps = e.get_or<int>("n_steps", 2000);
    if (ec.model == "transport") ec.c = e.get<std::vector<double>>("c");
    else if (ec.model == "dirac") ec.v_D = e.get<double>("v_D");
    else if (ec.model == "schrodinger") ec.half_hessian = e.get<std::vector<std::vector<double>>>("half_hessian");
    else if (ec.model == "matrix_schrodinger") {
      ec.alpha = e.get<double>("alpha");
      ec.gamma_tilde = e.get<double>("gamma_tilde");
      ec.beta = e.get<double>("beta");
    } else if (ec.model != "auto") {
      throw config_error("schema", "effective.model must be auto, transport, dirac, schrodinger or matrix_schrodinger");
    }
    e.finish();
  }

  if (root.has("evolution")) {
    ObjectReader ev = root.child("evolution");
    c.max_dt = ev.get_or<double>("max_dt", 0.01);
    c.min_steps = ev.get_or<int>("min_steps", 64);
    c.negate_static_part = ev.get_or<bool>("negate_static_part", false);
    ev.finish();
  }

  if (root.has("epsilons")) c.epsilons = root.get<std::vector<double>>("epsilons");
  for (double e : c.epsilons)
    if (!(e > 0.0)) throw config_error("bad_epsilon", "every epsilon must be positive");

  if (root.has("arc")) {
    ObjectReader a = root.child("arc");
    c.arc_g = a.maybe<double>("g");
    c.arc_fraction = a.get_or<double>("fraction", 0.25);
    if (!(c.arc_fraction > 0.0 && c.arc_fraction < 1.0)) throw config_error("schema", "arc.fraction must be in (0, 1)");
    a.finish();
  }
  if (root.has("window")) {
    ObjectReader w = root.child("window");
    c.window_L = w.get<double>("L");
    if (!(c.window_L > 0.0)) throw config_error("bad_window", "window.L must be positive");
    w.finish();
  }
  if (root.has("invariance")) {
    ObjectReader i = root.child("invariance");
    c.probe_mode = i.get_or<std::string>("mode", "p0_random");
    if (c.probe_mode != "p0_random" && c.probe_mode != "bl_packet")
      throw config_error("schema", "invariance.mode must be p0_random or bl_packet");
    c.probe_d0 = i.get_or<double>("d0", 1.0);
    c.per_axis = i.get_or<int>("per_axis", 32);
    c.n_probe = i.get_or<int>("n_probe", 16);
    c.power_steps = i.get_or<int>("power_steps", 8);
    i.finish();
  }
  if (root.has("validation")) {
    ObjectReader v = root.child("validation");
    c.validation_d0 = v.get_or<double>("d0", 1.0);
    c.validation_width = v.get_or<double>("width", 0.25);
    c.validation_per_axis = v.get_or<int>("per_axis", 32);
    c.n_checkpoints = v.get_or<int>("n_checkpoints", 8);
    v.finish();
  }
  c.seed = root.get_or<std::uint64_t>("seed", 1);
  if (root.has("output")) {
    ObjectReader o = root.child("output");
    c.output_directory = o.get_or<std::string>("directory", "");
    o.finish();
  }
  root.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config_unreadable", "cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw config_error("config_parse", std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Objects built from a config

inline std::shared_ptr<const Crystal> build_crystal(const ExperimentConfig& c) {
  return std::make_shared<const Crystal>(Crystal::build(make_lattice(c.lattice_vectors), c.potential, c.cutoff, c.max_basis));
}

inline DrivingProfile build_drive(const ExperimentConfig& c) {
  const DriveConfig& d = c.drive;
  const int n = c.dimension();
  if (d.type == "none") return DrivingProfile::none(n, d.period, d.exponent);
  if (d.type == "sine") return sine_drive(detail::to_rvec(d.direction), d.amplitude, d.period, d.exponent);
  if (d.type == "cosine") return cosine_drive(detail::to_rvec(d.direction), d.amplitude, d.period, d.exponent);
  if (d.type == "circular") return circular_drive(d.amplitude, d.period, d.exponent);
  DrivingProfile p(n, d.period, d.exponent);
  for (const auto& [m, v] : d.harmonics) {
    CVec a(n);
    for (int i = 0; i < n; ++i) a(i) = v[static_cast<std::size_t>(i)];
    p.set_harmonic(m, a);
  }
  return p;
}

inline RVec target_momentum(const ExperimentConfig& c, const Lattice& lattice) {
  const TargetConfig& t = *c.target;
  if (t.vertex) {
    if (lattice.dimension() != 2) throw config_error("schema", "target.vertex needs a 2D lattice");
    return lattice.from_reduced(hexagonal_vertex(lattice));
  }
  if (t.k) {
    if (static_cast<int>(t.k->size()) != lattice.dimension()) throw config_error("schema", "target.k has wrong length");
    return detail::to_rvec(*t.k);
  }
  if (static_cast<int>(t.k_reduced->size()) != lattice.dimension())
    throw config_error("schema", "target.k_reduced has wrong length");
  return lattice.from_reduced(detail::to_rvec(*t.k_reduced));
}

/// Zero-based b*, from the config band or from the nearest energy.
inline std::size_t target_band(const ExperimentConfig& c, const Crystal& crystal, const RVec& k) {
  const TargetConfig& t = *c.target;
  const RVec e = fiber_energies(crystal, k);
  std::size_t band;
  if (t.band) {
    if (*t.band < 1 || static_cast<std::size_t>(*t.band) > crystal.size())
      throw config_error("bad_band", "target.band out of range (bands are 1-based)");
    band = static_cast<std::size_t>(*t.band - 1);
  } else {
    Eigen::Index b;
    (e.array() - *t.energy).abs().minCoeff(&b);
    band = static_cast<std::size_t>(b);
  }
  if (t.energy && std::abs(e(static_cast<Eigen::Index>(band)) - *t.energy) > 1e-6 * (1.0 + std::abs(*t.energy)))
    throw config_error("energy_mismatch", "target.energy does not match E_b(k*) = " +
                                              std::to_string(e(static_cast<Eigen::Index>(band))));
  return band;
}

/// Runs the separation check and classification for the configured target.
inline DegeneracyInfo analyze_target(const ExperimentConfig& c, std::shared_ptr<const Crystal> crystal, int threads = 1) {
  if (!c.target) throw config_error("missing_target", "this subcommand needs a target section");
  const Lattice& lattice = crystal->lattice();
  const RVec k = target_momentum(c, lattice);
  const std::size_t band = target_band(c, *crystal, k);
  const std::size_t nb = std::min<std::size_t>(crystal->size(), band + c.target->multiplicity + 2);
  const BandStructure bs = band_structure(crystal, full_zone_grid(lattice, c.grid_counts), nb, threads);
  SeparationOptions opt;
  opt.radius = c.target->separation_radius > 0.0 ? c.target->separation_radius : 0.1 * crystal->reference_momentum();
  opt.cone_radius = c.target->cone_radius;
  return verify_separation(bs, k, band, static_cast<std::size_t>(c.target->multiplicity), opt);
}

inline EffectiveModel build_model(const ExperimentConfig& c, const Crystal& crystal, const DegeneracyInfo* info) {
  const EffectiveConfig& e = c.effective;
  EffectiveModel m{TransportModel{}, 1};
  if (e.model == "transport") m = transport_model(detail::to_rvec(e.c));
  else if (e.model == "dirac") m = dirac_model(e.v_D);
  else if (e.model == "schrodinger") {
    const auto& h = e.half_hessian;
    RMat q(static_cast<Eigen::Index>(h.size()), static_cast<Eigen::Index>(h.size()));
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i].size() != h.size()) throw config_error("schema", "effective.half_hessian must be square");
      for (std::size_t j = 0; j < h.size(); ++j) q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h[i][j];
    }
    m = schrodinger_model(q);
  } else if (e.model == "matrix_schrodinger") m = matrix_schrodinger_model(e.alpha, e.gamma_tilde, e.beta);
  else {
    if (!info) throw config_error("missing_target", "effective.model = auto needs a target");
    m = model_from_degeneracy(crystal, *info);
  }
  if (m.dimension() != c.dimension()) throw config_error("bad_model", "effective model dimension differs from the lattice");
  m.exponent = c.drive.exponent;
  return m;
}

}  // namespace floquet
