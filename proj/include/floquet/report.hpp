#pragma once

// JSON and CSV renderings of results. Numbers are written with full double
// precision so identical inputs give byte-identical files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "floquet/bloch.hpp"
#include "floquet/effective.hpp"
#include "floquet/spectral.hpp"
#include "floquet/wavepacket.hpp"

namespace floquet {

inline nlohmann::json to_json(const RVec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline nlohmann::json to_json(const RMat& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(RVec(m.row(i).transpose())));
  return a;
}

inline nlohmann::json to_json(const CMat& m) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    a.push_back(row);
  }
  return a;
}

/// Bands are reported one-based.
inline nlohmann::json to_json(const DegeneracyInfo& d) {
  nlohmann::json j;
  j["k_star"] = to_json(d.k_star);
  j["energy"] = d.energy;
  j["band"] = d.band + 1;
  j["multiplicity"] = d.multiplicity;
  j["kind"] = to_string(d.kind);
  j["separation_margin"] = d.margin;
  if (d.velocity) {
    j["grad_E"] = to_json(d.velocity->inner_product);
    j["grad_E_finite_difference"] = to_json(d.velocity->finite_difference);
    j["c"] = to_json(d.velocity->c());
  }
  if (d.hessian) j["hessian"] = to_json(*d.hessian);
  if (d.dirac) {
    j["v_D"] = d.dirac->fine.velocity;
    j["v_D_coarse"] = d.dirac->coarse.velocity;
    j["v_D_extrapolated"] = d.dirac->extrapolated;
    j["v_D_stability"] = d.dirac->stability;
    j["cone_anisotropy"] = d.dirac->fine.anisotropy;
    j["cone_fit_residual"] = d.dirac->fine.residual;
  }
  if (d.quadratic) {
    j["alpha"] = d.quadratic->alpha;
    j["gamma_tilde"] = d.quadratic->gamma_tilde;
    j["beta"] = d.quadratic->beta;
  }
  return j;
}

inline nlohmann::json to_json(const SpectralEnclosure& e) {
  return {{"model", e.model}, {"method", e.method}, {"d0", e.d0},           {"g0", e.g0},
          {"sweep_max", e.sweep_max}, {"margin", e.margin}, {"lipschitz", e.lipschitz},
          {"spacing", e.spacing}, {"per_axis", e.per_axis}, {"nodes", e.nodes}};
}

inline nlohmann::json to_json(const ResidualTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"eps", r.eps}, {"residual", r.residual}, {"best_probe", r.best_probe}, {"seed", r.seed},
                    {"fibers", r.fibers}, {"steps", r.steps}});
  nlohmann::json j = {{"mode", to_string(t.mode)}, {"g", t.g},        {"g0", t.g0}, {"n_probe", t.n_probe},
                      {"power_steps", t.power_steps}, {"rows", rows}, {"warnings", t.warnings}};
  j["fitted_exponent"] = std::isfinite(t.exponent) ? nlohmann::json(t.exponent) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const ValidationResult& r) {
  return {{"eps", r.eps}, {"times", r.times}, {"errors", r.errors}, {"max_error", r.max_error}, {"fibers", r.fibers}};
}

/// Exponents, arc membership and projector norms of one monodromy.
inline nlohmann::json projector_diagnostics(const Monodromy& m, const Arc& arc) {
  std::vector<std::string> warnings;
  const auto in = arc_membership(m.exponents, arc, &warnings);
  const CMat p = arc_projector(m, arc);
  nlohmann::json j;
  j["k"] = to_json(m.k);
  j["exponents"] = to_json(m.exponents);
  j["in_arc"] = in;
  j["arc"] = {arc.lo, arc.hi};
  j["rank"] = std::count(in.begin(), in.end(), true);
  j["idempotency_defect"] = (p * p - p).norm();
  j["hermiticity_defect"] = (p - p.adjoint()).norm();
  j["unitarity_defect"] = unitarity_defect(m.matrix);
  j["warnings"] = warnings;
  return j;
}

/// Header line carrying provenance for CSV artifacts.
inline void write_csv_provenance(std::ostream& os, const std::string& hash, std::uint64_t seed) {
  os << "# config_hash=" << hash << " seed=" << seed << '\n';
}

}  // namespace floquet
