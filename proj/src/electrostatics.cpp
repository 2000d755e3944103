#include "emlc/electrostatics.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <fmt/core.h>
#include <limits>
#include <string>

#include "emlc/constants.hpp"
#include "emlc/errors.hpp"

namespace emlc {

void CapacitorGeometry::validate() const {
  std::vector<std::string> errors;
  auto positive = [&](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) errors.push_back(fmt::format("geometry.{} must be > 0", name));
  };
  positive(D, "D");
  positive(h, "h");
  if (bottom == BottomElectrode::wire_grid) {
    positive(r, "r");
    positive(t, "t");
    positive(d, "d");
  }
  if (!(eps_membrane >= 1.0)) errors.push_back("geometry.eps_membrane must be >= 1");
  if (!(x_m >= 0.0)) errors.push_back("geometry.x_m must be >= 0");
  if (!(x_m + h < D)) errors.push_back("membrane does not fit in the gap: x_m + h must be < D");
  if (bottom == BottomElectrode::wire_grid && !(period() > 0.0))
    errors.push_back("lateral period r + d must be > 0");
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

namespace {

// Lateral extent used when the bottom electrode is a solid plate: the
// problem is one-dimensional, any width gives the same c.
double effective_period(const CapacitorGeometry& g) {
  return g.bottom == BottomElectrode::solid_plate ? g.D : g.period();
}

void append_segment(std::vector<double>& y, double from, double to, double spacing) {
  const auto cells = std::max<long>(1, static_cast<long>(std::ceil((to - from) / spacing - 1e-9)));
  const double step = (to - from) / static_cast<double>(cells);
  for (long k = 1; k <= cells; ++k) y.push_back(k == cells ? to : from + step * static_cast<double>(k));
}

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

Grid build_grid(const CapacitorGeometry& g, int mesh_level) {
  if (mesh_level < 1) throw ValidationError("mesh_level must be >= 1");
  const double lateral_spacing = g.D / nodes_per_D(mesh_level);
  const double vertical_spacing = std::min(lateral_spacing, g.h / min_cells_per_membrane);

  Grid grid;
  const double p = effective_period(g);
  grid.nx = static_cast<std::size_t>(std::max(2L, std::lround(p / lateral_spacing)));
  grid.dx = p / static_cast<double>(grid.nx);

  if (g.bottom == BottomElectrode::wire_grid) {
    grid.y.push_back(-g.t);
    append_segment(grid.y, -g.t, 0.0, vertical_spacing);
  } else {
    grid.y.push_back(0.0);
  }
  append_segment(grid.y, 0.0, g.D, vertical_spacing);
  grid.ny = grid.y.size();
  return grid;
}

PotentialField solve_potential(const CapacitorGeometry& g, int mesh_level,
                               const SolverSettings& settings) {
  g.validate();
  PotentialField field;
  field.grid = build_grid(g, mesh_level);
  const Grid& grid = field.grid;
  const std::size_t nx = grid.nx;
  const std::size_t ny = grid.ny;
  const double p = effective_period(g);

  // Dirichlet node sets.
  field.dirichlet.assign(grid.node_count(), false);
  field.potential.assign(grid.node_count(), 0.0);
  const double snap = 1e-9 * g.D;
  for (std::size_t i = 0; i < nx; ++i) {
    field.dirichlet[grid.index(i, ny - 1)] = true;
    field.potential[grid.index(i, ny - 1)] = 1.0;
  }
  if (g.bottom == BottomElectrode::solid_plate) {
    for (std::size_t i = 0; i < nx; ++i) field.dirichlet[grid.index(i, 0)] = true;
  } else {
    const double shift = static_cast<double>(g.lateral_shift_cells) * grid.dx;
    for (std::size_t i = 0; i < nx; ++i) {
      double local = std::fmod(static_cast<double>(i) * grid.dx - shift, p);
      if (local < 0.0) local += p;
      if (local > p - snap) local -= p;
      if (local < -snap || local > g.r + snap) continue;
      for (std::size_t j = 0; j < ny && grid.y[j] <= snap; ++j) field.dirichlet[grid.index(i, j)] = true;
    }
  }

  // Cell permittivities. The membrane spans the full period, so mixing is
  // per cell row: parallel (arithmetic) for lateral flux, series (harmonic)
  // for vertical flux.
  const std::size_t cells = nx * (ny - 1);
  field.eps_lateral.assign(cells, 1.0);
  field.eps_vertical.assign(cells, 1.0);
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    const double hy = grid.cell_height(j);
    const double f = overlap(grid.y[j], grid.y[j + 1], g.x_m, g.x_m + g.h) / hy;
    if (f <= 0.0) continue;
    const double lateral = f * g.eps_membrane + (1.0 - f);
    const double vertical = 1.0 / (f / g.eps_membrane + (1.0 - f));
    for (std::size_t i = 0; i < nx; ++i) {
      field.eps_lateral[j * nx + i] = lateral;
      field.eps_vertical[j * nx + i] = vertical;
    }
  }

  // Unknown numbering.
  std::vector<long> unknown(grid.node_count(), -1);
  long n_unknowns = 0;
  for (std::size_t k = 0; k < grid.node_count(); ++k)
    if (!field.dirichlet[k]) unknown[k] = n_unknowns++;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n_unknowns) * 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknowns);
  auto add_edge = [&](std::size_t a, std::size_t b, double w) {
    const long ua = unknown[a];
    const long ub = unknown[b];
    if (ua >= 0) {
      triplets.emplace_back(ua, ua, w);
      if (ub >= 0) triplets.emplace_back(ua, ub, -w);
      else rhs[ua] += w * field.potential[b];
    }
    if (ub >= 0) {
      triplets.emplace_back(ub, ub, w);
      if (ua >= 0) triplets.emplace_back(ub, ua, -w);
      else rhs[ub] += w * field.potential[a];
    }
  };
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t right = (i + 1) % nx;
      const std::size_t left_cell = (i + nx - 1) % nx;
      // Lateral edge (i,j)-(i+1,j): dual face spans half of the cell rows
      // below and above.
      double face = 0.0;
      if (j > 0) face += 0.5 * grid.cell_height(j - 1) * field.eps_lateral[(j - 1) * nx + i];
      if (j + 1 < ny) face += 0.5 * grid.cell_height(j) * field.eps_lateral[j * nx + i];
      add_edge(grid.index(i, j), grid.index(right, j), face / grid.dx);
      if (j + 1 < ny) {
        const double vface =
            0.5 * grid.dx * (field.eps_vertical[j * nx + left_cell] + field.eps_vertical[j * nx + i]);
        add_edge(grid.index(i, j), grid.index(i, j + 1), vface / grid.cell_height(j));
      }
    }
  }

  Eigen::SparseMatrix<double> K(n_unknowns, n_unknowns);
  K.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                           Eigen::IncompleteCholesky<double>>
      cg;
  // CG tracks its residual recursively; aim below the requested tolerance so
  // the recomputed residual also meets it.
  cg.setTolerance(0.5 * settings.relative_tolerance);
  cg.setMaxIterations(settings.max_iterations);
  cg.compute(K);
  if (cg.info() != Eigen::Success) throw ConvergenceError("preconditioner factorisation failed");
  const Eigen::VectorXd x = cg.solve(rhs);

  const double rhs_norm = rhs.norm();
  field.residual_norm = rhs_norm > 0.0 ? (rhs - K * x).norm() / rhs_norm : 0.0;
  field.tolerance = settings.relative_tolerance;
  field.iterations = static_cast<int>(cg.iterations());
  if (!field.converged())
    throw ConvergenceError(fmt::format("potential solve did not converge after {} iterations "
                                       "(relative residual {:.3e})",
                                       cg.iterations(), field.residual_norm));

  for (std::size_t k = 0; k < grid.node_count(); ++k)
    if (unknown[k] >= 0) field.potential[k] = x[unknown[k]];
  return field;
}

double field_energy(const PotentialField& field) {
  const Grid& grid = field.grid;
  const std::size_t nx = grid.nx;
  const std::size_t ny = grid.ny;
  double energy = 0.0;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t right = (i + 1) % nx;
      const std::size_t left_cell = (i + nx - 1) % nx;
      double face = 0.0;
      if (j > 0) face += 0.5 * grid.cell_height(j - 1) * field.eps_lateral[(j - 1) * nx + i];
      if (j + 1 < ny) face += 0.5 * grid.cell_height(j) * field.eps_lateral[j * nx + i];
      const double dl = field.at(right, j) - field.at(i, j);
      energy += face / grid.dx * dl * dl;
      if (j + 1 < ny) {
        const double vface =
            0.5 * grid.dx * (field.eps_vertical[j * nx + left_cell] + field.eps_vertical[j * nx + i]);
        const double dv = field.at(i, j + 1) - field.at(i, j);
        energy += vface / grid.cell_height(j) * dv * dv;
      }
    }
  }
  return energy;
}

double capacitance(const PotentialField& field, const CapacitorGeometry& geometry) {
  if (!field.converged())
    throw ConvergenceError("capacitance requested from an unconverged potential field");
  const double c = field_energy(field) * geometry.D / effective_period(geometry);
  if (!(c > 0.0)) throw NumericalError("non-positive capacitance");
  return c;
}

double capacitance_at(const CapacitorGeometry& geometry_sans_x, double x_m, int mesh_level,
                      const SolverSettings& settings) {
  CapacitorGeometry g = geometry_sans_x;
  g.x_m = x_m;
  return capacitance(solve_potential(g, mesh_level, settings), g);
}

// ---------------------------------------------------------------------------

namespace {

// Least-squares polynomial through the points, derivative at x0.
double local_fit_slope(std::span<const CapacitanceSample> pts, double x0) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  const Eigen::Index degree = std::min<Eigen::Index>(3, n - 1);
  const double scale = pts.back().x_m - pts.front().x_m;
  Eigen::MatrixXd A(n, degree + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double s = (pts[static_cast<std::size_t>(k)].x_m - x0) / scale;
    double power = 1.0;
    for (Eigen::Index m = 0; m <= degree; ++m) {
      A(k, m) = power;
      power *= s;
    }
    b[k] = pts[static_cast<std::size_t>(k)].c;
  }
  const Eigen::VectorXd coeffs = A.colPivHouseholderQr().solve(b);
  return coeffs[1] / scale;
}

}  // namespace

CapacitanceCurve::CapacitanceCurve(CapacitorGeometry geometry, std::vector<CapacitanceSample> samples,
                                   int mesh_level, double convergence_estimate)
    : geometry_(std::move(geometry)),
      samples_(std::move(samples)),
      mesh_level_(mesh_level),
      convergence_estimate_(convergence_estimate) {
  if (samples_.size() < 3) throw ValidationError("capacitance curve needs at least 3 samples");
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    if (!(samples_[k].c > 0.0) || !std::isfinite(samples_[k].c))
      throw ValidationError(fmt::format("capacitance sample {} is not positive", k));
    if (k > 0 && !(samples_[k].x_m > samples_[k - 1].x_m))
      throw ValidationError("capacitance curve x_m values must be strictly increasing");
  }
  const std::size_t n = samples_.size();
  const std::size_t window = std::min<std::size_t>(5, n);
  slopes_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t first = k >= window / 2 ? k - window / 2 : 0;
    first = std::min(first, n - window);
    slopes_[k] = local_fit_slope(std::span(samples_).subspan(first, window), samples_[k].x_m);
  }
}

std::size_t CapacitanceCurve::interval(double x) const {
  if (!contains(x))
    throw DomainError(fmt::format("x = {:.6e} m outside the sampled range [{:.6e}, {:.6e}]", x,
                                  x_min(), x_max()));
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), x,
                                   [](double v, const CapacitanceSample& s) { return v < s.x_m; });
  const auto k = static_cast<std::size_t>(std::distance(samples_.begin(), it));
  return std::clamp<std::size_t>(k, 1, samples_.size() - 1) - 1;
}

double CapacitanceCurve::value(double x) const {
  const std::size_t k = interval(x);
  const double x0 = samples_[k].x_m;
  const double hk = samples_[k + 1].x_m - x0;
  const double s = (x - x0) / hk;
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * samples_[k].c + (s3 - 2 * s2 + s) * hk * slopes_[k] +
         (-2 * s3 + 3 * s2) * samples_[k + 1].c + (s3 - s2) * hk * slopes_[k + 1];
}

double CapacitanceCurve::slope(double x) const {
  const std::size_t k = interval(x);
  const double x0 = samples_[k].x_m;
  const double hk = samples_[k + 1].x_m - x0;
  const double s = (x - x0) / hk;
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * samples_[k].c + (-6 * s2 + 6 * s) * samples_[k + 1].c) / hk +
         (3 * s2 - 4 * s + 1) * slopes_[k] + (3 * s2 - 2 * s) * slopes_[k + 1];
}

double CapacitanceCurve::absolute(double x, double plate_area) const {
  return constants::epsilon_0 * plate_area / geometry_.D * value(x);
}

ZetaEstimate zeta_unchecked(const CapacitanceCurve& curve, double x) {
  const double c = curve.value(x);
  const double slope = curve.slope(x);
  if (std::abs(slope) * curve.geometry().D < zeta_slope_floor * c)
    return {std::numeric_limits<double>::infinity(), true};
  return {-c / slope, false};
}

ZetaEstimate zeta(const CapacitanceCurve& curve, double x) {
  if (!(x > curve.x_min() && x < curve.x_max()))
    throw DomainError(fmt::format("zeta requested at x = {:.6e} m, which is not strictly inside "
                                  "the sampled range",
                                  x));
  return zeta_unchecked(curve, x);
}

CapacitanceCurve capacitance_curve(const CapacitorGeometry& geometry_sans_x, double x_min, double x_max,
                                   int n_samples, int mesh_level, const SolverSettings& settings) {
  std::vector<std::string> errors;
  if (!(x_min >= 0.0)) errors.push_back("x_min must be >= 0");
  if (!(x_max > x_min)) errors.push_back("x_max must exceed x_min");
  if (!(x_max + geometry_sans_x.h < geometry_sans_x.D)) errors.push_back("x_max + h must be < D");
  if (n_samples < 3) errors.push_back("n_samples must be >= 3");
  if (!errors.empty()) throw ValidationError(std::move(errors));

  std::vector<CapacitanceSample> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));
  for (int k = 0; k < n_samples; ++k) {
    const double x = x_min + (x_max - x_min) * static_cast<double>(k) / (n_samples - 1);
    try {
      samples.push_back({x, capacitance_at(geometry_sans_x, x, mesh_level, settings)});
    } catch (const NumericalError& e) {
      throw ConvergenceError(fmt::format("capacitance sample {} (x_m = {:.6e} m): {}", k, x, e.what()));
    }
  }
  const auto mid = static_cast<std::size_t>(n_samples / 2);
  const double fine = capacitance_at(geometry_sans_x, samples[mid].x_m, 2 * mesh_level, settings);
  const double estimate = std::abs(samples[mid].c - fine) / fine;
  CapacitorGeometry geometry = geometry_sans_x;
  geometry.x_m = 0.0;
  return CapacitanceCurve(geometry, std::move(samples), mesh_level, estimate);
}

}  // namespace emlc
