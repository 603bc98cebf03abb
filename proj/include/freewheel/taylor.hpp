#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "freewheel/error.hpp"

namespace freewheel {

/// Polynomial approximations of sqrt(m/2) K^(-1/2) = 1/v around a reference
/// energy K_r, one coefficient set per step:
///   second order  theta0 + theta1 K + theta2 K^2
///   first order   phi0 + phi1 K
///   zeroth order  varphi0
struct TaylorCoeffs {
  std::vector<double> theta0, theta1, theta2;
  std::vector<double> phi0, phi1;
  std::vector<double> varphi0;

  std::size_t size() const { return varphi0.size(); }

  double second_order(std::size_t k, double K) const { return theta0[k] + theta1[k] * K + theta2[k] * K * K; }
  double first_order(std::size_t k, double K) const { return phi0[k] + phi1[k] * K; }
  double zeroth_order(std::size_t k) const { return varphi0[k]; }
};

inline TaylorCoeffs taylor_coeffs(std::span<const double> K_r, double m) {
  const double root = std::sqrt(m / 2.0);
  TaylorCoeffs t;
  const std::size_t n = K_r.size();
  t.theta0.resize(n);
  t.theta1.resize(n);
  t.theta2.resize(n);
  t.phi0.resize(n);
  t.phi1.resize(n);
  t.varphi0.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double K = K_r[k];
    if (!(K > 0.0)) throw ConfigError("Taylor expansion requires K_r > 0 at step " + std::to_string(k));
    const double r1 = 1.0 / std::sqrt(K);  // K^(-1/2)
    const double r3 = r1 / K;              // K^(-3/2)
    const double r5 = r3 / K;              // K^(-5/2)
    t.theta0[k] = 15.0 / 8.0 * root * r1;
    t.theta1[k] = -10.0 / 8.0 * root * r3;
    t.theta2[k] = 3.0 / 8.0 * root * r5;
    t.phi0[k] = 1.5 * root * r1;
    t.phi1[k] = -0.5 * root * r3;
    t.varphi0[k] = root * r1;
  }
  return t;
}

}  // namespace freewheel
