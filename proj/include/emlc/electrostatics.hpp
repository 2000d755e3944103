#pragma once

// 2D electrostatics of one lateral period of the wire-grid capacitor.
//
// Cross-section (y up):
//
//   y = D        ===================== plate, phi = 1
//
//   y = x_m + h  ---------------------  dielectric membrane (eps_membrane),
//   y = x_m      ---------------------  full period width
//
//   y = 0        +-----+                wire (width r, thickness t), phi = 0
//   y = -t       +-----+ . . . . . . .  zero normal flux between wires
//                |<-r->|<----- d ---->|
//
// Lateral boundaries are periodic with period p = r + d. Lengths are in
// metres; the potential is dimensionless.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace emlc {

/// How the bottom electrode is shaped. `solid_plate` replaces the wire grid
/// by a continuous conductor at y = 0 (the parallel-plate reference).
enum class BottomElectrode { wire_grid, solid_plate };

struct CapacitorGeometry {
  double D = 0.0;             // plate to wire-top separation
  double r = 0.0;             // wire width
  double t = 0.0;             // wire thickness
  double d = 0.0;             // gap between wires
  double h = 0.0;             // membrane thickness
  double eps_membrane = 1.0;  // relative permittivity of the membrane
  double x_m = 0.0;           // membrane bottom face above the wire tops
  BottomElectrode bottom = BottomElectrode::wire_grid;
  // Cyclic shift of the wire within the period, in whole grid cells.
  int lateral_shift_cells = 0;

  double period() const { return r + d; }

  /// Throws ValidationError listing every violated invariant.
  void validate() const;

  bool operator==(const CapacitorGeometry&) const = default;
};

/// Tensor-product node lattice: uniform laterally (periodic), piecewise
/// uniform vertically with nodes on y = -t, 0 and D.
struct Grid {
  std::size_t nx = 0;        // nodes per row (periodic, node nx == node 0)
  std::size_t ny = 0;        // node rows, from y = -t (row 0) to y = D
  double dx = 0.0;
  std::vector<double> y;     // row coordinates, size ny

  std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }
  std::size_t node_count() const { return nx * ny; }
  double cell_height(std::size_t j) const { return y[j + 1] - y[j]; }
};

struct SolverSettings {
  double relative_tolerance = 1e-10;
  int max_iterations = 100000;
};

struct PotentialField {
  Grid grid;
  std::vector<double> potential;  // per node, plate = 1, wires = 0
  // Effective relative permittivity per cell, for lateral and vertical flux.
  // Partially filled cells use parallel / series mixing respectively.
  std::vector<double> eps_lateral;
  std::vector<double> eps_vertical;
  std::vector<bool> dirichlet;     // per node
  double residual_norm = 0.0;      // relative residual of the linear solve
  double tolerance = 0.0;          // tolerance the solve was run with
  int iterations = 0;

  bool converged() const { return residual_norm <= tolerance; }
  double at(std::size_t i, std::size_t j) const { return potential[grid.index(i, j)]; }
};

/// Lateral nodes per D at a given mesh level.
inline constexpr int nodes_per_D(int mesh_level) { return 40 * mesh_level; }

/// Minimum number of cells across the membrane thickness.
inline constexpr int min_cells_per_membrane = 4;

Grid build_grid(const CapacitorGeometry& geometry, int mesh_level);

/// Solves div(eps grad phi) = 0 with the boundary conditions described at the
/// top of this header. Throws ValidationError on bad geometry or mesh level,
/// ConvergenceError if the iterative solve hits its iteration cap.
PotentialField solve_potential(const CapacitorGeometry& geometry, int mesh_level,
                               const SolverSettings& settings = {});

/// Discrete field energy sum eps |grad phi|^2 dA for unit potential
/// difference, per unit depth, in units of eps_0 (dimensionless in 2D).
double field_energy(const PotentialField& field);

/// Normalised capacitance c = C' D / (eps_0 p), where C' is the energy-method
/// capacitance per unit depth of one period. Equals 1 for a bare parallel
/// plate capacitor. Rejects unconverged fields.
double capacitance(const PotentialField& field, const CapacitorGeometry& geometry);

/// Result of a characteristic-length query. `infinite` is set when the
/// capacitance slope is below the numerical floor, in which case `value`
/// is +inf.
struct ZetaEstimate {
  double value = 0.0;
  bool infinite = false;
};

struct CapacitanceSample {
  double x_m = 0.0;
  double c = 0.0;
  bool operator==(const CapacitanceSample&) const = default;
};

/// Sampled c(x_m) with C^1 interpolation. Nodal slopes come from a local
/// least-squares cubic through the five nearest samples; between samples
/// the curve is the cubic Hermite interpolant of values and slopes, so
/// c(x), c'(x) and zeta(x) are continuous.
class CapacitanceCurve {
 public:
  CapacitanceCurve(CapacitorGeometry geometry, std::vector<CapacitanceSample> samples,
                   int mesh_level, double convergence_estimate);

  const CapacitorGeometry& geometry() const { return geometry_; }
  std::span<const CapacitanceSample> samples() const { return samples_; }
  int mesh_level() const { return mesh_level_; }
  double convergence_estimate() const { return convergence_estimate_; }

  double x_min() const { return samples_.front().x_m; }
  double x_max() const { return samples_.back().x_m; }
  bool contains(double x) const { return x >= x_min() && x <= x_max(); }

  double value(double x) const;
  double slope(double x) const;
  /// Slope at sample k from the five-point local cubic fit.
  double nodal_slope(std::size_t k) const { return slopes_[k]; }

  /// Absolute capacitance C(x) = (eps_0 A / D) c(x) for plate area A.
  double absolute(double x, double plate_area) const;

 private:
  std::size_t interval(double x) const;

  CapacitorGeometry geometry_;
  std::vector<CapacitanceSample> samples_;
  std::vector<double> slopes_;
  int mesh_level_;
  double convergence_estimate_;
};

/// Relative slope below which zeta is reported as infinite, per D.
inline constexpr double zeta_slope_floor = 1e-9;

/// Solves one field per sample on x in [x_min, x_max] (uniform spacing).
/// The convergence estimate is the relative change of c between mesh_level
/// and 2 * mesh_level at the midpoint sample.
CapacitanceCurve capacitance_curve(const CapacitorGeometry& geometry_sans_x, double x_min,
                                   double x_max, int n_samples, int mesh_level,
                                   const SolverSettings& settings = {});

/// zeta = -c / c' at x, which must lie strictly inside the sampled range.
ZetaEstimate zeta(const CapacitanceCurve& curve, double x);

/// Same, but allows the end samples (used for table export).
ZetaEstimate zeta_unchecked(const CapacitanceCurve& curve, double x);

/// Convenience: c at a single x_m.
double capacitance_at(const CapacitorGeometry& geometry_sans_x, double x_m, int mesh_level,
                      const SolverSettings& settings = {});

}  // namespace emlc
