#pragma once

#include <cmath>
#include <vector>

#include "emlc/electrostatics.hpp"

namespace emlc::testing {

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

/// Geometry of the wire-grid capacitor used throughout the tests.
inline CapacitorGeometry wire_grid(double D = 2e-6) {
  CapacitorGeometry g;
  g.D = D;
  g.r = D / 4;
  g.t = D / 4;
  g.d = 3 * D / 4;
  g.h = D / 20;
  g.eps_membrane = 7.6;
  return g;
}

/// Curve sampled from c(x) = exp(-x / zeta0), whose zeta is zeta0 everywhere.
inline CapacitanceCurve exponential_curve(double D, double zeta0, double x_min, double x_max, int n = 401) {
  std::vector<CapacitanceSample> samples;
  for (int k = 0; k < n; ++k) {
    const double x = x_min + (x_max - x_min) * k / (n - 1);
    samples.push_back({x, std::exp(-x / zeta0)});
  }
  CapacitorGeometry g;
  g.D = D;
  return CapacitanceCurve(g, std::move(samples), 0, 0.0);
}

}  // namespace emlc::testing
