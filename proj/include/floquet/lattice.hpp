#pragma once

// Lattice geometry, Brillouin-zone sampling, truncated plane-wave bases and
// Fourier coefficients of lattice-periodic potentials.

#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "floquet/errors.hpp"
#include "floquet/linalg.hpp"

namespace floquet {

/// Integer coordinates of a dual-lattice vector, G = m_1 b_1 + m_2 b_2.
/// Unused trailing slots are zero, so 1D and 2D share one key type.
struct Miller {
  std::array<int, 2> m{0, 0};

  auto operator<=>(const Miller&) const = default;
  Miller operator-() const { return Miller{{-m[0], -m[1]}}; }
  Miller operator-(const Miller& o) const { return Miller{{m[0] - o.m[0], m[1] - o.m[1]}}; }
  Miller operator+(const Miller& o) const { return Miller{{m[0] + o.m[0], m[1] + o.m[1]}}; }
  bool is_zero() const { return m[0] == 0 && m[1] == 0; }
};

class Lattice {
 public:
  /// Columns of `primitive` are v_1..v_n.
  explicit Lattice(RMat primitive) : primitive_(std::move(primitive)) {
    const auto n = primitive_.rows();
    if (n < 1 || n > 2 || primitive_.cols() != n)
      throw config_error("bad_dimension", "lattice must be 1D or 2D with n primitive vectors");
    double scale = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) scale *= primitive_.col(j).norm();
    volume_ = std::abs(primitive_.determinant());
    if (!(scale > 0.0) || volume_ <= 1e-12 * scale)
      throw config_error("degenerate_lattice", "primitive vectors are linearly dependent");
    dual_ = kTwoPi * primitive_.transpose().inverse();
  }

  int dimension() const { return static_cast<int>(primitive_.rows()); }
  const RMat& primitive() const { return primitive_; }
  /// Columns are b_1..b_n with b_i . v_j = 2 pi delta_ij.
  const RMat& dual() const { return dual_; }
  double cell_volume() const { return volume_; }
  double zone_volume() const { return std::pow(kTwoPi, dimension()) / volume_; }

  RVec cartesian(const Miller& g) const {
    RVec out = RVec::Zero(dimension());
    for (int i = 0; i < dimension(); ++i) out += g.m[i] * dual_.col(i);
    return out;
  }
  /// Cartesian point from reduced coordinates (fractions of b_i).
  RVec from_reduced(const RVec& t) const { return dual_ * t; }
  RVec to_reduced(const RVec& k) const { return dual_.inverse() * k; }

  /// max_{ij} |b_i . v_j - 2 pi delta_ij|
  double duality_residual() const {
    RMat d = dual_.transpose() * primitive_ - kTwoPi * RMat::Identity(dimension(), dimension());
    return d.cwiseAbs().maxCoeff();
  }

 private:
  RMat primitive_;
  RMat dual_;
  double volume_ = 0.0;
};

inline Lattice make_lattice(const std::vector<std::vector<double>>& vectors) {
  const auto n = static_cast<Eigen::Index>(vectors.size());
  RMat p(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (static_cast<Eigen::Index>(vectors[j].size()) != n)
      throw config_error("bad_dimension", "each primitive vector must have n components");
    for (Eigen::Index i = 0; i < n; ++i) p(i, j) = vectors[j][i];
  }
  return Lattice(p);
}

/// Hexagonal lattice with primitive vectors a(sqrt3/2, +-1/2).
inline Lattice hexagonal_lattice(double a = 1.0) {
  const double s = std::sqrt(3.0) / 2.0;
  return make_lattice({{s * a, 0.5 * a}, {s * a, -0.5 * a}});
}

class PlaneWaveBasis {
 public:
  PlaneWaveBasis(const Lattice& lattice, double cutoff, std::size_t max_size = 20000) {
    if (!(cutoff > 0.0)) throw config_error("bad_cutoff", "plane-wave cutoff must be positive");
    const int n = lattice.dimension();
    std::array<int, 2> bound{0, 0};
    for (int i = 0; i < n; ++i) {
      double b = std::floor(cutoff * lattice.primitive().col(i).norm() / kTwoPi) + 1.0;
      if (b > 1e6) throw resource_error("basis_too_large", "plane-wave cutoff is absurdly large");
      bound[i] = static_cast<int>(b);
    }
    const double tol = 1e-12 * std::max(1.0, cutoff);
    for (int m0 = -bound[0]; m0 <= bound[0]; ++m0) {
      for (int m1 = -bound[1]; m1 <= bound[1]; ++m1) {
        Miller g{{m0, m1}};
        RVec cart = lattice.cartesian(g);
        if (cart.norm() <= cutoff + tol) {
          millers_.push_back(g);
          vectors_.push_back(cart);
          if (millers_.size() > max_size)
            throw resource_error("basis_too_large",
                                 "plane-wave basis exceeds configured max size " + std::to_string(max_size));
        }
      }
    }
    for (std::size_t i = 0; i < millers_.size(); ++i) index_.emplace(millers_[i], i);
    dimension_ = n;
  }

  std::size_t size() const { return millers_.size(); }
  int dimension() const { return dimension_; }
  const Miller& miller(std::size_t i) const { return millers_[i]; }
  const RVec& vector(std::size_t i) const { return vectors_[i]; }
  const std::vector<Miller>& millers() const { return millers_; }
  std::optional<std::size_t> index_of(const Miller& g) const {
    auto it = index_.find(g);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  int dimension_ = 1;
  std::vector<Miller> millers_;  // lexicographic
  std::vector<RVec> vectors_;
  std::map<Miller, std::size_t> index_;
};

inline PlaneWaveBasis plane_wave_basis(const Lattice& lattice, double cutoff, std::size_t max_size = 20000) {
  return PlaneWaveBasis(lattice, cutoff, max_size);
}

/// Named potential families.
struct ZeroPotential {};
/// V(x) = sum_j (a_j e^{i G_j.x} + conj(a_j) e^{-i G_j.x}).
struct CosineSumPotential {
  struct Term {
    Miller g;
    cplx amplitude;
  };
  std::vector<Term> terms;
};
/// V(x) = sum_{j=1..3} 2 V0 cos(g_j . x), g_j the shortest dual vectors,
/// 120 degrees apart. Needs a hexagonal lattice.
struct HoneycombPotential {
  double amplitude = 1.0;
};
using PotentialSpec = std::variant<ZeroPotential, CosineSumPotential, HoneycombPotential>;

/// Sparse Fourier coefficients V^(G), keyed by integer coordinates.
struct PotentialCoeffs {
  std::map<Miller, cplx> coeffs;

  cplx at(const Miller& g) const {
    auto it = coeffs.find(g);
    return it == coeffs.end() ? cplx{} : it->second;
  }
  bool empty() const { return coeffs.empty(); }
  bool hermitian_symmetric() const {
    for (const auto& [g, v] : coeffs)
      if (at(-g) != std::conj(v)) return false;
    return true;
  }
};

/// The three shortest dual vectors, closed under rotation by 2 pi / 3.
inline std::array<Miller, 3> honeycomb_generators(const Lattice& lattice) {
  if (lattice.dimension() != 2)
    throw config_error("not_hexagonal", "honeycomb potential needs a 2D lattice");
  const RVec b1 = lattice.dual().col(0), b2 = lattice.dual().col(1);
  const double n1 = b1.squaredNorm(), n2 = b2.squaredNorm();
  const double tol = 1e-10 * n1;
  if (std::abs(n1 - n2) > tol)
    throw config_error("not_hexagonal", "honeycomb potential needs |b1| = |b2|");
  const double dot = b1.dot(b2);
  if (std::abs(dot + 0.5 * n1) <= tol) return {Miller{{1, 0}}, Miller{{0, 1}}, Miller{{-1, -1}}};
  if (std::abs(dot - 0.5 * n1) <= tol) return {Miller{{1, 0}}, Miller{{0, -1}}, Miller{{-1, 1}}};
  throw config_error("not_hexagonal", "dual vectors are not at 60 or 120 degrees");
}

/// Reduced coordinates of a hexagonal zone vertex K.
inline RVec hexagonal_vertex(const Lattice& lattice) {
  auto g = honeycomb_generators(lattice);
  RVec t(2);
  // K = (g_1 - g_2) / 3 is equidistant from 0, g_1 and -g_2 (three-fold degenerate free waves).
  t << (g[0].m[0] - g[1].m[0]) / 3.0, (g[0].m[1] - g[1].m[1]) / 3.0;
  return t;
}

inline PotentialCoeffs potential_coefficients(const PotentialSpec& spec, const PlaneWaveBasis& basis,
                                              const Lattice& lattice) {
  std::set<Miller> differences;
  for (const auto& a : basis.millers())
    for (const auto& b : basis.millers()) differences.insert(a - b);

  PotentialCoeffs out;
  auto add = [&](const Miller& g, cplx a) {
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag()))
      throw config_error("bad_potential", "potential amplitude is not finite");
    if (g.is_zero()) {
      // constant shift: the pair a + conj(a) lands on G = 0
      if (differences.count(g)) out.coeffs[g] += a + std::conj(a);
      return;
    }
    if (!differences.count(g)) return;
    out.coeffs[g] += a;
    out.coeffs[-g] += std::conj(a);
  };

  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, CosineSumPotential>) {
          for (const auto& term : s.terms) {
            if (lattice.dimension() == 1 && term.g.m[1] != 0)
              throw config_error("bad_potential", "1D potential term has a second coordinate");
            add(term.g, term.amplitude);
          }
        } else if constexpr (std::is_same_v<T, HoneycombPotential>) {
          for (const auto& g : honeycomb_generators(lattice)) add(g, cplx{s.amplitude, 0.0});
        }
      },
      spec);
  for (auto it = out.coeffs.begin(); it != out.coeffs.end();) {
    if (it->second == cplx{}) it = out.coeffs.erase(it);
    else ++it;
  }
  return out;
}

/// Quasi-momentum samples with quadrature weights.
struct BrillouinGrid {
  std::vector<RVec> points;
  std::vector<double> weights;
  /// Set for grids of the form anchor + scale * xi.
  std::optional<RVec> anchor;
  double scale = 0.0;
  std::vector<RVec> xi;

  std::size_t size() const { return points.size(); }
  double total_weight() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }
};

/// Uniform grid on the fundamental parallelepiped {sum t_i b_i : t_i in [-1/2, 1/2)}.
inline BrillouinGrid full_zone_grid(const Lattice& lattice, const std::vector<int>& counts) {
  const int n = lattice.dimension();
  if (static_cast<int>(counts.size()) != n)
    throw config_error("bad_grid", "grid needs one count per lattice dimension");
  for (int c : counts)
    if (c < 1) throw config_error("bad_grid", "grid counts must be positive");
  BrillouinGrid grid;
  const int n1 = n == 2 ? counts[1] : 1;
  const double w = lattice.zone_volume() / (static_cast<double>(counts[0]) * n1);
  for (int i = 0; i < counts[0]; ++i) {
    for (int j = 0; j < n1; ++j) {
      RVec t(n);
      t(0) = -0.5 + static_cast<double>(i) / counts[0];
      if (n == 2) t(1) = -0.5 + static_cast<double>(j) / counts[1];
      grid.points.push_back(lattice.from_reduced(t));
      grid.weights.push_back(w);
    }
  }
  return grid;
}

/// Midpoint xi-grid on the ball |xi| < radius: a tensor grid of `per_axis`
/// cells across [-radius, radius]^n, keeping cell centers inside the ball.
/// Returns nodes with their weights.
inline std::pair<std::vector<RVec>, std::vector<double>> ball_midpoint_grid(int dimension, double radius,
                                                                            int per_axis) {
  if (per_axis < 1 || !(radius > 0.0)) throw config_error("bad_grid", "xi-grid needs radius > 0 and nodes >= 1");
  const double h = 2.0 * radius / per_axis;
  const double w = std::pow(h, dimension);
  std::vector<RVec> nodes;
  std::vector<double> weights;
  const int n1 = dimension == 2 ? per_axis : 1;
  for (int i = 0; i < per_axis; ++i) {
    for (int j = 0; j < n1; ++j) {
      RVec xi(dimension);
      xi(0) = -radius + (i + 0.5) * h;
      if (dimension == 2) xi(1) = -radius + (j + 0.5) * h;
      if (xi.norm() < radius) {
        nodes.push_back(xi);
        weights.push_back(w);
      }
    }
  }
  return {nodes, weights};
}

/// Fibers k* + eps * xi on the midpoint xi-grid of the unit ball, so that
/// |k - k*| < eps on every fiber and envelope nodes land on fibers exactly.
inline BrillouinGrid anchored_grid(const RVec& anchor, double eps, int per_axis, double radius = 1.0) {
  auto [nodes, weights] = ball_midpoint_grid(static_cast<int>(anchor.size()), radius, per_axis);
  BrillouinGrid grid;
  grid.anchor = anchor;
  grid.scale = eps;
  const double jac = std::pow(eps, static_cast<double>(anchor.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    grid.points.push_back(anchor + eps * nodes[i]);
    grid.weights.push_back(jac * weights[i]);
    grid.xi.push_back(nodes[i]);
  }
  return grid;
}

}  // namespace floquet
