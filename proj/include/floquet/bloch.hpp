#pragma once

// Fiber Hamiltonians H(k) in a plane-wave basis, band structures, degeneracy
// classification, band derivatives and contour-integral spectral projectors.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "floquet/lattice.hpp"
#include "floquet/linalg.hpp"
#include "floquet/parallel.hpp"

namespace floquet {

/// A lattice, its plane-wave truncation and a potential. The k-independent
/// potential block of H(k) is assembled once.
class Crystal {
 public:
  Crystal(Lattice lattice, PlaneWaveBasis basis, PotentialCoeffs potential)
      : lattice_(std::move(lattice)), basis_(std::move(basis)), potential_(std::move(potential)) {
    const auto n = static_cast<Eigen::Index>(basis_.size());
    if (n == 0) throw config_error("empty_basis", "plane-wave basis is empty");
    coupling_ = CMat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        coupling_(i, j) = potential_.at(basis_.miller(i) - basis_.miller(j));
  }

  static Crystal build(const Lattice& lattice, const PotentialSpec& spec, double cutoff,
                       std::size_t max_basis = 20000) {
    PlaneWaveBasis basis(lattice, cutoff, max_basis);
    PotentialCoeffs v = potential_coefficients(spec, basis, lattice);
    return Crystal(lattice, std::move(basis), std::move(v));
  }

  const Lattice& lattice() const { return lattice_; }
  const PlaneWaveBasis& basis() const { return basis_; }
  const PotentialCoeffs& potential() const { return potential_; }
  int dimension() const { return lattice_.dimension(); }
  std::size_t size() const { return basis_.size(); }

  /// H(k)_{GG'} = |k+G|^2 delta_{GG'} + V^(G - G').
  CMat hamiltonian(const RVec& k) const {
    CMat h = coupling_;
    for (std::size_t i = 0; i < basis_.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      h(ii, ii) += (k + basis_.vector(i)).squaredNorm();
    }
    return h;
  }

  /// Diagonal of the momentum operator component along `dir`: (k+G).dir
  RVec momentum_along(const RVec& k, const RVec& dir) const {
    RVec out(basis_.size());
    for (std::size_t i = 0; i < basis_.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = (k + basis_.vector(i)).dot(dir);
    return out;
  }

  /// |b_1|, the reference length for finite-difference steps.
  double reference_momentum() const { return lattice_.dual().col(0).norm(); }

 private:
  Lattice lattice_;
  PlaneWaveBasis basis_;
  PotentialCoeffs potential_;
  CMat coupling_;
};

/// H(k) together with its sorted eigenpairs. Eigenvector columns are the
/// plane-wave coefficients of the periodic Bloch functions p_b(k).
struct FiberSystem {
  RVec k;
  CMat hamiltonian;
  RVec energies;
  CMat vectors;

  std::size_t size() const { return static_cast<std::size_t>(energies.size()); }
};

inline FiberSystem assemble_fiber(const Crystal& crystal, const RVec& k) {
  if (!k.allFinite()) throw numeric_error("bad_momentum", "quasi-momentum is not finite");
  FiberSystem f;
  f.k = k;
  f.hamiltonian = crystal.hamiltonian(k);
  try {
    auto eig = hermitian_eigen(f.hamiltonian);
    f.energies = std::move(eig.values);
    f.vectors = std::move(eig.vectors);
  } catch (const Error& e) {
    std::ostringstream os;
    os << e.what() << " at k = " << k.transpose();
    throw numeric_error(e.code(), os.str());
  }
  return f;
}

inline RVec fiber_energies(const Crystal& crystal, const RVec& k) {
  Eigen::SelfAdjointEigenSolver<CMat> solver(crystal.hamiltonian(k), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    std::ostringstream os;
    os << "Hermitian eigensolver did not converge at k = " << k.transpose();
    throw numeric_error("eigensolver_failure", os.str());
  }
  return solver.eigenvalues();
}

struct BandStructure {
  std::shared_ptr<const Crystal> crystal;
  BrillouinGrid grid;
  std::size_t n_bands = 0;
  std::vector<RVec> energies;   // per grid point, lowest n_bands
  std::vector<CMat> vectors;    // per grid point, basis x n_bands
  std::vector<std::string> warnings;
};

inline BandStructure band_structure(std::shared_ptr<const Crystal> crystal, const BrillouinGrid& grid,
                                    std::size_t n_bands, int threads = 1) {
  if (n_bands == 0 || n_bands > crystal->size())
    throw config_error("bad_band_count", "band count must be in [1, basis size]");
  BandStructure bs;
  bs.crystal = crystal;
  bs.grid = grid;
  bs.n_bands = n_bands;
  bs.energies.resize(grid.size());
  bs.vectors.resize(grid.size());
  const auto nb = static_cast<Eigen::Index>(n_bands);
  parallel_for(grid.size(), threads, [&](std::size_t j) {
    FiberSystem f = assemble_fiber(*crystal, grid.points[j]);
    bs.energies[j] = f.energies.head(nb);
    bs.vectors[j] = f.vectors.leftCols(nb);
  });
  // Lipschitz sanity check between consecutive grid points: for H = -Lap + V
  // the bands move at most 2 (|k| + cutoff) |dk| plus slack.
  double kmax = 0;
  for (std::size_t i = 0; i < crystal->size(); ++i) kmax = std::max(kmax, crystal->basis().vector(i).norm());
  for (std::size_t j = 1; j < grid.size(); ++j) {
    const RVec dk = grid.points[j] - grid.points[j - 1];
    const double bound = 2.0 * (grid.points[j].norm() + kmax) * dk.norm() + dk.squaredNorm() + 1e-9;
    const double jump = (bs.energies[j] - bs.energies[j - 1]).cwiseAbs().maxCoeff();
    if (jump > bound) {
      std::ostringstream os;
      os << "band jump " << jump << " exceeds Lipschitz bound " << bound << " between grid points " << j - 1
         << " and " << j;
      bs.warnings.push_back(os.str());
    }
  }
  return bs;
}

/// CSV: k components, then E_1..E_n.
inline void write_bands_csv(std::ostream& os, const BandStructure& bs) {
  const int n = bs.crystal->dimension();
  os << (n == 1 ? "k1" : "k1,k2");
  for (std::size_t b = 0; b < bs.n_bands; ++b) os << ",E" << b + 1;
  os << '\n';
  os.precision(17);
  for (std::size_t j = 0; j < bs.grid.size(); ++j) {
    for (int i = 0; i < n; ++i) os << (i ? "," : "") << bs.grid.points[j](i);
    for (Eigen::Index b = 0; b < bs.energies[j].size(); ++b) os << ',' << bs.energies[j](b);
    os << '\n';
  }
}

struct BlochTolerances {
  double gap_tol = 1e-6;
  double cone_tol = 0.05;
  double fd_tol = 1e-6;
  static double cluster_tol(double e) { return 1e-8 * (1.0 + std::abs(e)); }
};

// ---------------------------------------------------------------------------
// Band derivatives

struct GroupVelocity {
  RVec inner_product;      // sum_G 2 (k+G) |p(G)|^2  (= grad E)
  RVec finite_difference;  // central difference of E_b
  /// c = -grad E, the sign convention of the transport coefficient.
  RVec c() const { return -inner_product; }
  double discrepancy() const { return (inner_product - finite_difference).cwiseAbs().maxCoeff(); }
};

namespace detail {
inline void require_simple(const RVec& energies, std::size_t band, const RVec& k, const char* what) {
  const auto b = static_cast<Eigen::Index>(band);
  const double e = energies(b);
  const double tol = BlochTolerances::cluster_tol(e);
  bool lower = b > 0 && std::abs(energies(b - 1) - e) <= tol;
  bool upper = b + 1 < energies.size() && std::abs(energies(b + 1) - e) <= tol;
  if (lower || upper) {
    std::ostringstream os;
    os << what << ": band " << band + 1 << " is degenerate at k = " << k.transpose();
    throw numeric_error("ill_defined_velocity", os.str());
  }
}
}  // namespace detail

/// Band index is zero-based. Finite-difference step 1e-4 |b_1|.
inline GroupVelocity group_velocity(const Crystal& crystal, const FiberSystem& fiber, std::size_t band) {
  if (band >= fiber.size()) throw config_error("bad_band", "band index out of range");
  detail::require_simple(fiber.energies, band, fiber.k, "group velocity");
  const int n = crystal.dimension();
  const auto b = static_cast<Eigen::Index>(band);
  GroupVelocity gv;
  gv.inner_product = RVec::Zero(n);
  gv.finite_difference = RVec::Zero(n);
  const CVec p = fiber.vectors.col(b);
  for (std::size_t i = 0; i < crystal.size(); ++i)
    gv.inner_product += 2.0 * std::norm(p(static_cast<Eigen::Index>(i))) * (fiber.k + crystal.basis().vector(i));
  const double h = 1e-4 * crystal.reference_momentum();
  for (int d = 0; d < n; ++d) {
    RVec e = RVec::Zero(n);
    e(d) = h;
    const double ep = fiber_energies(crystal, fiber.k + e)(b);
    const double em = fiber_energies(crystal, fiber.k - e)(b);
    gv.finite_difference(d) = (ep - em) / (2.0 * h);
  }
  return gv;
}

/// Symmetric matrix of second derivatives of E_b by central differences with
/// step h (default 1e-3 |b_1|).
inline RMat hessian(const Crystal& crystal, const RVec& k, std::size_t band, double h = 0.0) {
  const int n = crystal.dimension();
  if (h <= 0.0) h = 1e-3 * crystal.reference_momentum();
  const auto b = static_cast<Eigen::Index>(band);
  auto energy = [&](const RVec& q) { return fiber_energies(crystal, q)(b); };
  const double e0 = energy(k);
  RMat d2(n, n);
  for (int i = 0; i < n; ++i) {
    RVec ei = RVec::Zero(n);
    ei(i) = h;
    d2(i, i) = (energy(k + ei) - 2.0 * e0 + energy(k - ei)) / (h * h);
    for (int j = 0; j < i; ++j) {
      RVec ej = RVec::Zero(n);
      ej(j) = h;
      d2(i, j) = (energy(k + ei + ej) - energy(k + ei - ej) - energy(k - ei + ej) + energy(k - ei - ej)) / (4 * h * h);
      d2(j, i) = d2(i, j);
    }
  }
  return 0.5 * (d2 + d2.transpose());
}

inline RMat hessian(const BandStructure& bs, const RVec& k, std::size_t band) {
  return hessian(*bs.crystal, k, band);
}

// ---------------------------------------------------------------------------
// Dirac cones

/// One sample of a two-band touching: offset kappa = k - k*, lower and upper energy.
struct ConeSample {
  RVec kappa;
  double lower = 0;
  double upper = 0;
};

struct DiracFit {
  double velocity = 0;     // least-squares slope of half-splitting against |kappa|
  double residual = 0;     // RMS of the fit
  double anisotropy = 0;   // (max - min) / mean of per-direction slopes at the smallest radius
};

inline DiracFit dirac_fit(const std::vector<ConeSample>& samples) {
  if (samples.empty()) throw config_error("bad_samples", "dirac fit needs samples");
  double srh = 0, srr = 0;
  double rmin = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    const double r = s.kappa.norm();
    srh += r * 0.5 * (s.upper - s.lower);
    srr += r * r;
    rmin = std::min(rmin, r);
  }
  if (!(srr > 0.0)) throw config_error("bad_samples", "dirac fit needs nonzero offsets");
  DiracFit fit;
  fit.velocity = srh / srr;
  double ss = 0;
  std::vector<double> slopes;
  for (const auto& s : samples) {
    const double r = s.kappa.norm();
    const double h = 0.5 * (s.upper - s.lower);
    ss += (h - fit.velocity * r) * (h - fit.velocity * r);
    if (r <= rmin * (1.0 + 1e-9)) slopes.push_back(h / r);
  }
  fit.residual = std::sqrt(ss / samples.size());
  const auto [lo, hi] = std::minmax_element(slopes.begin(), slopes.end());
  double mean = 0;
  for (double v : slopes) mean += v;
  mean /= slopes.size();
  fit.anisotropy = mean > 0 ? (*hi - *lo) / mean : std::numeric_limits<double>::infinity();
  return fit;
}

/// Directions used to probe cones: 2 in 1D, `n_angles` in 2D.
inline std::vector<RVec> ring_directions(int dimension, int n_angles) {
  std::vector<RVec> dirs;
  if (dimension == 1) {
    dirs.push_back(RVec::Constant(1, 1.0));
    dirs.push_back(RVec::Constant(1, -1.0));
    return dirs;
  }
  for (int a = 0; a < n_angles; ++a) {
    const double phi = kTwoPi * (a + 0.5) / n_angles;
    RVec d(2);
    d << std::cos(phi), std::sin(phi);
    dirs.push_back(d);
  }
  return dirs;
}

inline std::vector<ConeSample> cone_samples(const Crystal& crystal, const RVec& k_star, std::size_t band,
                                            const std::vector<double>& radii, int n_angles = 24) {
  std::vector<ConeSample> out;
  const auto b = static_cast<Eigen::Index>(band);
  for (double r : radii) {
    for (const RVec& d : ring_directions(crystal.dimension(), n_angles)) {
      const RVec kappa = r * d;
      const RVec e = fiber_energies(crystal, k_star + kappa);
      out.push_back({kappa, e(b), e(b + 1)});
    }
  }
  return out;
}

struct DiracEstimate {
  DiracFit coarse;   // rings at radius r
  DiracFit fine;     // rings at radius r/2
  double extrapolated = 0;  // 2 v(r/2) - v(r)
  double stability = 0;     // |v(r) - v(r/2)| / v(r/2)
};

/// Fits v_D on rings of radius r and r/2 around k* (bands `band`, `band+1`).
/// Throws a hypothesis error if the cone is anisotropic beyond cone_tol.
inline DiracEstimate dirac_fit(const Crystal& crystal, const RVec& k_star, std::size_t band, double radius,
                               double cone_tol = BlochTolerances{}.cone_tol, int n_angles = 24) {
  DiracEstimate est;
  est.coarse = dirac_fit(cone_samples(crystal, k_star, band, {radius}, n_angles));
  est.fine = dirac_fit(cone_samples(crystal, k_star, band, {0.5 * radius}, n_angles));
  est.extrapolated = 2.0 * est.fine.velocity - est.coarse.velocity;
  est.stability = std::abs(est.coarse.velocity - est.fine.velocity) / std::abs(est.fine.velocity);
  if (!(est.fine.anisotropy < cone_tol)) {
    std::ostringstream os;
    os << "not a Dirac point: relative cone anisotropy " << est.fine.anisotropy << " >= " << cone_tol;
    throw hypothesis_error("not_a_dirac_point", os.str());
  }
  return est;
}

inline DiracEstimate dirac_fit(const BandStructure& bs, const RVec& k_star, std::size_t band, double radius) {
  return dirac_fit(*bs.crystal, k_star, band, radius);
}

/// Coefficients of alpha |xi|^2 s0 + gt (xi1^2 - xi2^2) s2 + 2 beta xi1 xi2 s1
/// fitted to the two touching bands; only |gt| and |beta| are identifiable
/// from energies, both are reported non-negative.
struct QuadraticTouching {
  double alpha = 0;
  double gamma_tilde = 0;
  double beta = 0;
};

inline QuadraticTouching fit_quadratic_touching(const Crystal& crystal, const RVec& k_star, std::size_t band,
                                                double radius) {
  if (crystal.dimension() != 2) throw config_error("bad_dimension", "quadratic touching fit is 2D only");
  const auto b = static_cast<Eigen::Index>(band);
  const double e0 = 0.5 * (fiber_energies(crystal, k_star)(b) + fiber_energies(crystal, k_star)(b + 1));
  auto split = [&](double x, double y) {
    RVec kap(2);
    kap << x, y;
    RVec e = fiber_energies(crystal, k_star + kap);
    return std::pair{0.5 * (e(b) + e(b + 1)) - e0, 0.5 * (e(b + 1) - e(b))};
  };
  const double r = radius;
  const double s = r / std::sqrt(2.0);
  auto [mx, hx] = split(r, 0);
  auto [my, hy] = split(0, r);
  auto [md, hd] = split(s, s);
  QuadraticTouching q;
  q.alpha = (mx + my) / (2 * r * r);
  q.gamma_tilde = 0.5 * (hx + hy) / (r * r);
  q.beta = hd / (r * r);
  (void)md;
  return q;
}

// ---------------------------------------------------------------------------
// Spectral separation

enum class DegeneracyKind { Noncritical, Dirac, QuadraticSimple, QuadraticDouble };

inline const char* to_string(DegeneracyKind k) {
  switch (k) {
    case DegeneracyKind::Noncritical: return "noncritical";
    case DegeneracyKind::Dirac: return "dirac";
    case DegeneracyKind::QuadraticSimple: return "quadratic_simple";
    case DegeneracyKind::QuadraticDouble: return "quadratic_double";
  }
  return "?";
}

struct DegeneracyInfo {
  RVec k_star;
  double energy = 0;
  std::size_t band = 0;  // zero-based b*
  std::size_t multiplicity = 1;
  DegeneracyKind kind = DegeneracyKind::Noncritical;
  double margin = 0;  // min distance of neighbouring bands to E* over the checked set
  std::optional<GroupVelocity> velocity;
  std::optional<RMat> hessian;
  std::optional<DiracEstimate> dirac;
  std::optional<QuadraticTouching> quadratic;
};

struct SeparationOptions {
  double radius = 0.1;
  double gap_tol = BlochTolerances{}.gap_tol;
  double cone_tol = BlochTolerances{}.cone_tol;
  int n_angles = 16;
  /// Rings at radius * 2^-j, j < n_rings, are scanned in addition to grid points.
  int n_rings = 3;
  /// Ring radius for the cone fit; 0 picks min(radius, 1e-3 |b_1|).
  double cone_radius = 0.0;
  bool classify = true;
};

/// Checks that E* = E_{b*}(k*) has multiplicity N and that bands b*-1 and
/// b*+N stay clear of E* on grid points within `radius` of k* and on rings.
/// Band index is zero-based.
inline DegeneracyInfo verify_separation(const BandStructure& bs, const RVec& k_star, std::size_t band,
                                        std::size_t multiplicity, const SeparationOptions& opt = {}) {
  const Crystal& crystal = *bs.crystal;
  if (multiplicity < 1) throw config_error("bad_multiplicity", "multiplicity must be >= 1");
  if (band + multiplicity > crystal.size()) throw config_error("bad_band", "band index out of range");
  const FiberSystem f = assemble_fiber(crystal, k_star);
  const auto b = static_cast<Eigen::Index>(band);
  const auto nn = static_cast<Eigen::Index>(multiplicity);
  const double e_star = f.energies(b);
  const double width = f.energies(b + nn - 1) - e_star;
  if (width > BlochTolerances::cluster_tol(e_star)) {
    std::ostringstream os;
    os << "bands " << band + 1 << ".." << band + multiplicity << " at k* spread by " << width
       << ", not a multiplicity-" << multiplicity << " eigenvalue";
    throw numeric_error("degeneracy_detection", os.str());
  }

  DegeneracyInfo info;
  info.k_star = k_star;
  info.energy = e_star;
  info.band = band;
  info.multiplicity = multiplicity;
  info.margin = std::numeric_limits<double>::infinity();

  auto check = [&](const RVec& k, const RVec& e) {
    if (b > 0) {
      const double d = e_star - e(b - 1);
      info.margin = std::min(info.margin, d);
      if (!(d > opt.gap_tol)) {
        std::ostringstream os;
        os << "band " << band << " reaches E* = " << e_star << " at k = " << k.transpose();
        throw hypothesis_error("separation_violated", os.str());
      }
    }
    if (b + nn < e.size()) {
      const double d = e(b + nn) - e_star;
      info.margin = std::min(info.margin, d);
      if (!(d > opt.gap_tol)) {
        std::ostringstream os;
        os << "band " << band + multiplicity + 1 << " reaches E* = " << e_star << " at k = " << k.transpose();
        throw hypothesis_error("separation_violated", os.str());
      }
    }
  };
  check(k_star, f.energies);
  for (std::size_t j = 0; j < bs.grid.size(); ++j) {
    if ((bs.grid.points[j] - k_star).norm() > opt.radius) continue;
    check(bs.grid.points[j], fiber_energies(crystal, bs.grid.points[j]));
  }
  for (int ring = 0; ring < opt.n_rings; ++ring) {
    const double r = opt.radius * std::ldexp(1.0, -ring);
    for (const RVec& d : ring_directions(crystal.dimension(), opt.n_angles)) {
      const RVec k = k_star + r * d;
      check(k, fiber_energies(crystal, k));
    }
  }

  if (!opt.classify) return info;
  if (multiplicity == 1) {
    info.velocity = group_velocity(crystal, f, band);
    const double speed = info.velocity->inner_product.norm();
    if (speed > 1e-6 * std::max(1.0, crystal.reference_momentum())) {
      info.kind = DegeneracyKind::Noncritical;
    } else {
      info.kind = DegeneracyKind::QuadraticSimple;
      info.hessian = hessian(crystal, k_star, band);
    }
  } else if (multiplicity == 2) {
    const double r = opt.cone_radius > 0.0 ? opt.cone_radius : std::min(opt.radius, 1e-3 * crystal.reference_momentum());
    try {
      info.dirac = dirac_fit(crystal, k_star, band, r, opt.cone_tol, opt.n_angles);
      // a linear cone keeps its slope under radius halving; a quadratic touching halves it
      const bool conical = info.dirac->fine.velocity > 0.0 && info.dirac->stability < 0.25;
      info.kind = conical ? DegeneracyKind::Dirac : DegeneracyKind::QuadraticDouble;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Hypothesis) throw;
      info.dirac.reset();
      info.kind = DegeneracyKind::QuadraticDouble;
    }
    if (info.kind == DegeneracyKind::QuadraticDouble && crystal.dimension() == 2)
      info.quadratic = fit_quadratic_touching(crystal, k_star, band, r);
  } else {
    info.kind = DegeneracyKind::QuadraticDouble;
  }
  return info;
}

// ---------------------------------------------------------------------------
// Riesz projector

/// (1 / 2 pi i) \oint_{|z - center| = radius} (z - H)^{-1} dz by the trapezoid
/// rule with n_quad nodes. Each resolvent is an LU solve; the eigenpairs of
/// the fiber are only used to reject contours that pass within ring_tol of
/// an eigenvalue.
inline CMat riesz_projector(const FiberSystem& fiber, double center, double radius, int n_quad = 64,
                            double ring_tol = 1e-8) {
  if (!(radius > 0.0) || n_quad < 1) throw config_error("bad_contour", "contour needs radius > 0 and nodes >= 1");
  for (Eigen::Index i = 0; i < fiber.energies.size(); ++i) {
    if (std::abs(std::abs(fiber.energies(i) - center) - radius) < ring_tol * std::max(1.0, radius)) {
      std::ostringstream os;
      os << "eigenvalue " << fiber.energies(i) << " lies on the contour |z - " << center << "| = " << radius;
      throw numeric_error("contour_collision", os.str());
    }
  }
  const auto n = fiber.hamiltonian.rows();
  const CMat id = CMat::Identity(n, n);
  CMat p = CMat::Zero(n, n);
  for (int j = 0; j < n_quad; ++j) {
    const double phi = kTwoPi * j / n_quad;
    const cplx w = radius * std::exp(kI * phi);
    const cplx z = center + w;
    CMat resolvent = (z * id - fiber.hamiltonian).partialPivLu().solve(id);
    p += w * resolvent;
  }
  return p / static_cast<double>(n_quad);
}

/// Sum of eigenprojectors with |E - center| < radius.
inline CMat eigen_projector(const FiberSystem& fiber, double center, double radius) {
  const auto n = fiber.hamiltonian.rows();
  CMat p = CMat::Zero(n, n);
  for (Eigen::Index i = 0; i < fiber.energies.size(); ++i)
    if (std::abs(fiber.energies(i) - center) < radius) p += fiber.vectors.col(i) * fiber.vectors.col(i).adjoint();
  return p;
}

}  // namespace floquet
