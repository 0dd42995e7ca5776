#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

#include "floquet/errors.hpp"

namespace floquet {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

/// Map an angle onto (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

/// Rotate v so that its largest-magnitude entry is real and positive.
/// Entries within a relative 1e-10 of the maximum count as ties; the lowest
/// index wins.
inline void fix_phase(Eigen::Ref<CVec> v) {
  if (v.size() == 0) return;
  double vmax = v.cwiseAbs().maxCoeff();
  if (vmax == 0.0) return;
  Eigen::Index pick = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= vmax * (1.0 - 1e-10)) {
      pick = i;
      break;
    }
  }
  cplx phase = std::conj(v(pick)) / std::abs(v(pick));
  v *= phase;
}

struct HermitianEigen {
  RVec values;   // ascending
  CMat vectors;  // columns, phase-fixed
};

inline HermitianEigen hermitian_eigen(const CMat& h) {
  Eigen::SelfAdjointEigenSolver<CMat> solver(h);
  if (solver.info() != Eigen::Success)
    throw numeric_error("eigensolver_failure", "Hermitian eigensolver did not converge");
  HermitianEigen out{solver.eigenvalues(), solver.eigenvectors()};
  for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) fix_phase(out.vectors.col(j));
  return out;
}

/// exp(-i h dt) for Hermitian h, assembled from its eigendecomposition so that
/// the result is unitary to rounding.
inline CMat unitary_step(const CMat& h, double dt) {
  Eigen::SelfAdjointEigenSolver<CMat> solver(h);
  if (solver.info() != Eigen::Success)
    throw numeric_error("eigensolver_failure", "Hermitian eigensolver did not converge");
  const CMat& v = solver.eigenvectors();
  CVec phases = (-kI * dt * solver.eigenvalues().cast<cplx>()).array().exp();
  return v * phases.asDiagonal() * v.adjoint();
}

/// Polar factor W V* of u = W S V*, the closest unitary in Frobenius norm.
inline CMat nearest_unitary(const CMat& u) {
  Eigen::JacobiSVD<CMat> svd(u, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

inline double unitarity_defect(const CMat& u) {
  return (u.adjoint() * u - CMat::Identity(u.cols(), u.cols())).norm();
}

inline bool is_hermitian(const CMat& m, double tol) {
  return (m - m.adjoint()).norm() <= tol * std::max(1.0, m.norm());
}

/// Least-squares slope of log(y) against log(x). Pairs with non-positive
/// entries are skipped; returns NaN with fewer than two usable pairs.
template <class Range>
double loglog_slope(const Range& xs, const Range& ys) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  auto ix = std::begin(xs);
  auto iy = std::begin(ys);
  for (; ix != std::end(xs) && iy != std::end(ys); ++ix, ++iy) {
    if (!(*ix > 0.0) || !(*iy > 0.0)) continue;
    double lx = std::log(*ix), ly = std::log(*iy);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::nan("");
  double den = n * sxx - sx * sx;
  if (den == 0.0) return std::nan("");
  return (n * sxy - sx * sy) / den;
}

}  // namespace floquet
