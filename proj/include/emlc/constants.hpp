#pragma once

#include <numbers>

namespace emlc::constants {

// CODATA 2018 exact / recommended values, SI.
inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double k_boltzmann = 1.380649e-23;   // J / K
inline constexpr double epsilon_0 = 8.8541878128e-12; // F / m
inline constexpr double two_pi = 2.0 * std::numbers::pi;

}  // namespace emlc::constants
