#pragma once

// Time-periodic forcing A(T) as a finite zero-mean Fourier series, with exact
// antiderivatives.

#include <cmath>
#include <map>
#include <vector>

#include "floquet/errors.hpp"
#include "floquet/linalg.hpp"

namespace floquet {

/// A(T) = sum_{m != 0} a_m exp(2 pi i m T / T_per), a_{-m} = conj(a_m).
/// Only m > 0 is stored, which makes A real with zero mean by construction.
class DrivingProfile {
 public:
  DrivingProfile(int dimension, double period, int exponent = 1) : dimension_(dimension), period_(period), exponent_(exponent) {
    if (dimension < 1 || dimension > 2) throw config_error("bad_dimension", "drive must be 1D or 2D");
    if (!(period > 0.0) || !std::isfinite(period)) throw config_error("bad_period", "drive period must be positive");
    if (exponent != 1 && exponent != 2) throw config_error("bad_exponent", "scaling exponent must be 1 or 2");
  }

  static DrivingProfile none(int dimension, double period = kTwoPi, int exponent = 1) {
    return DrivingProfile(dimension, period, exponent);
  }

  /// Sets a_m (and implicitly a_{-m} = conj(a_m)). m = 0 is rejected: the
  /// drive has zero mean.
  DrivingProfile& set_harmonic(int m, const CVec& coeff) {
    if (m == 0) throw config_error("nonzero_mean", "harmonic m = 0 would give the drive a nonzero mean");
    if (coeff.size() != dimension_) throw config_error("bad_dimension", "harmonic has wrong dimension");
    if (!coeff.allFinite()) throw config_error("bad_harmonic", "harmonic coefficient is not finite");
    if (m < 0) harmonics_[-m] = coeff.conjugate();
    else harmonics_[m] = coeff;
    return *this;
  }

  int dimension() const { return dimension_; }
  double period() const { return period_; }
  int exponent() const { return exponent_; }
  bool is_zero() const { return harmonics_.empty(); }
  const std::map<int, CVec>& harmonics() const { return harmonics_; }

  RVec eval(double t) const {
    RVec out = RVec::Zero(dimension_);
    for (const auto& [m, a] : harmonics_) out += 2.0 * (a * cycle(m, t)).real();
    return out;
  }

  /// h(T) = \int_0^T A. Exact term by term; h(T_per) is exactly zero.
  RVec integral(double t) const {
    RVec out = RVec::Zero(dimension_);
    for (const auto& [m, a] : harmonics_) {
      const double w = kTwoPi * m / period_;
      out += 2.0 * (a * ((cycle(m, t) - 1.0) / (kI * w))).real();
    }
    return out;
  }

  /// \int_0^T A_i(s) A_j(s) ds for all i, j, in closed form.
  RMat quadratic_integral(double t) const {
    RMat out = RMat::Zero(dimension_, dimension_);
    // expand over m in +-harmonics
    std::vector<std::pair<int, CVec>> terms;
    for (const auto& [m, a] : harmonics_) {
      terms.emplace_back(m, a);
      terms.emplace_back(-m, a.conjugate());
    }
    for (const auto& [m1, a1] : terms) {
      for (const auto& [m2, a2] : terms) {
        const int s = m1 + m2;
        cplx integral;
        if (s == 0) integral = t;
        else integral = (cycle(s, t) - 1.0) / (kI * (kTwoPi * s / period_));
        for (int i = 0; i < dimension_; ++i)
          for (int j = 0; j < dimension_; ++j) out(i, j) += (a1(i) * a2(j) * integral).real();
      }
    }
    return out;
  }

 private:
  /// exp(2 pi i m t / T_per), with the phase reduced mod 1 first so whole
  /// periods give exactly 1.
  cplx cycle(int m, double t) const {
    double x = std::fmod(m * (t / period_), 1.0);
    return std::exp(kI * (kTwoPi * x));
  }

  int dimension_;
  double period_;
  int exponent_;
  std::map<int, CVec> harmonics_;
};

inline RVec eval_drive(const DrivingProfile& profile, double t) { return profile.eval(t); }
inline RVec drive_integral(const DrivingProfile& profile, double t) { return profile.integral(t); }

/// A(T) = amplitude * sin(2 pi T / T_per) along `direction`.
inline DrivingProfile sine_drive(const RVec& direction, double amplitude, double period, int exponent = 1) {
  DrivingProfile p(static_cast<int>(direction.size()), period, exponent);
  p.set_harmonic(1, (-0.5 * amplitude * kI) * direction.cast<cplx>());
  return p;
}

/// A(T) = amplitude * cos(2 pi T / T_per) along `direction`.
inline DrivingProfile cosine_drive(const RVec& direction, double amplitude, double period, int exponent = 1) {
  DrivingProfile p(static_cast<int>(direction.size()), period, exponent);
  p.set_harmonic(1, (0.5 * amplitude) * direction.cast<cplx>());
  return p;
}

/// A(T) = amplitude * (cos wT, sin wT), w = 2 pi / T_per.
inline DrivingProfile circular_drive(double amplitude, double period, int exponent = 1) {
  DrivingProfile p(2, period, exponent);
  CVec a(2);
  a << 0.5 * amplitude, -0.5 * amplitude * kI;
  p.set_harmonic(1, a);
  return p;
}

}  // namespace floquet
