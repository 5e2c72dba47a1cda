#pragma once

// Fixed-epsilon Ginzburg-Landau heat flow and Gross-Pitaevskii flow of a
// complex field on the stereographic chart square [-L, L]^2:
//
//   heat: u_t = a Delta u + (1 - |u|^2) u / eps^2
//   GP:   u_t = -i (a Delta u + (1 - |u|^2) u / eps^2)
//
// with a = (1 + r^2)^2 / 4 the inverse conformal weight. Grid nodes sit at
// x_k = -L + k h, k = 0..N, h = 2L/N. Boundary nodes carry no Laplacian and
// evolve by the pointwise reaction only, so |u| = 1 boundary data stays
// fixed.

#include <array>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "vortexflow/point_vortex_flow.hpp"

namespace vortexflow {

using Complex = std::complex<double>;

struct Grid {
  double L = 6.0;
  int N = 256;

  /// Throws InvalidArgument unless L > 0 and N >= 16 is even.
  void validate() const;
  double h() const { return 2.0 * L / N; }
  int side() const { return N + 1; }
  std::size_t size() const { return static_cast<std::size_t>(side()) * side(); }
  std::size_t index(int k, int j) const { return static_cast<std::size_t>(j) * side() + k; }
  double coord(int k) const { return -L + k * h(); }
  bool on_boundary(int k, int j) const { return k == 0 || j == 0 || k == N || j == N; }
  /// Trapezoidal node weight: 1 inside, 1/2 on edges, 1/4 at corners.
  double node_weight(int k, int j) const;
};

struct ComplexField {
  Grid grid;
  double epsilon = 0.1;
  double time = 0.0;
  std::vector<Complex> values;  // row-major, index(k, j) = j (N + 1) + k

  Complex& at(int k, int j) { return values[grid.index(k, j)]; }
  const Complex& at(int k, int j) const { return values[grid.index(k, j)]; }
  ChartPoint node(int k, int j) const { return ChartPoint(grid.coord(k), grid.coord(j)); }
};

/// a = (1 + r^2)^2 / 4.
double diffusion_coefficient(const ChartPoint& p);

/// Spatially constant field. Throws ResolutionError if h >= epsilon.
ComplexField make_constant_field(const Grid& grid, double epsilon, Complex value);

/// Well-prepared data: u = m exp(i chi Theta) with Theta = sum d_i arg(x - b_i),
/// m = 1 - chi (1 - prod_i tanh(|x - b_i| e^{f(b_i)} / eps)) and chi a smooth
/// cutoff equal to 1 for r <= L/2 and 0 for r >= 0.95 L, so u = 1 near the
/// chart boundary.
ComplexField build_well_prepared(const VortexConfiguration& cfg, double epsilon, const Grid& grid);

/// Largest step accepted by the explicit steppers.
double explicit_dt_limit(const Grid& grid, double epsilon);
/// Step used when none is given: 0.2 h^2 / max a, capped by the reaction scale.
double recommended_explicit_dt(const Grid& grid, double epsilon);

/// Classical RK4 step of the heat flow. Throws BlowUp if |u| > 1.1.
void heat_flow_step(ComplexField& u, double dt);

/// Strang step of the GP flow: exact pointwise phase rotation around an RK4
/// step of u_t = -i a Delta u. Throws BlowUp if |u| > 1.1.
void gp_flow_step(ComplexField& u, double dt);

/// Unconditionally stable heat-flow step: exact pointwise reaction for dt/2,
/// diffusion by an L-stable two-stage SDIRK with a sparse Cholesky solve,
/// reaction for dt/2. The factorization is reused across steps.
class ImplicitHeatStepper {
 public:
  ImplicitHeatStepper(const Grid& grid, double dt);
  ~ImplicitHeatStepper();
  ImplicitHeatStepper(ImplicitHeatStepper&&) noexcept;
  ImplicitHeatStepper& operator=(ImplicitHeatStepper&&) noexcept;

  double dt() const { return dt_; }
  void step(ComplexField& u) const;

 private:
  struct Solver;
  Grid grid_;
  double dt_;
  std::unique_ptr<Solver> solver_;
};

/// Exact solution of u_t = (1 - |u|^2) u / eps^2 at every node.
void reaction_step(ComplexField& u, double dt);

/// Semi-discrete right-hand side u_t of the heat (or GP) flow.
std::vector<Complex> flow_rate(const ComplexField& u, bool gross_pitaevskii = false);

/// max |u_t| of the heat flow.
double heat_rate_norm(const ComplexField& u);

struct EnergyReport {
  double E = 0.0;
  std::array<double, 3> F{};        // weights (1 - x_i)/2
  std::array<double, 3> moments{};  // integral of x_i V dv_g
  double mass_defect = 0.0;         // integral of (1 - |u|^2)^2 dv_g
};

/// Discrete energies: half the sum of |u_a - u_b|^2 over grid edges plus the
/// trapezoidal sum of h^2 e^{2f} V with V = (1 - |u|^2)^2 / (4 eps^2).
/// Weighted versions evaluate the weight at edge midpoints and nodes.
EnergyReport energy(const ComplexField& u);

struct WeightedIdentityTerms {
  std::array<double, 3> dF_dt{};         // (F_i(after) - F_i(before)) / dt
  std::array<double, 3> dissipation{};   // integral of (1 - x_i)/2 |u_t|^2 dv_g
  std::array<double, 3> moment{};        // integral of x_i V dv_g at the midpoint
  std::array<double, 3> residual{};      // dF_dt + dissipation + moment
};

WeightedIdentityTerms weighted_identity_terms(const ComplexField& before, const ComplexField& after,
                                              double dt);

/// residual_i = dF_i/dt + integral (1 - x_i)/2 |u_t|^2 + integral x_i V.
std::array<double, 3> weighted_identity_residual(const ComplexField& before,
                                                 const ComplexField& after, double dt);

struct CurrentJacobian {
  std::vector<Vec2> current;    // j = Im(conj(u) grad u), zero on the boundary
  std::vector<double> jacobian;  // (d1 j2 - d2 j1) / 2, zero within two nodes of the boundary
};

CurrentJacobian current_and_jacobian(const ComplexField& u);

/// Sum of h^2 J over the nodes inside the chart disk |x - center| < radius.
double jacobian_disk_mass(const ComplexField& u, const CurrentJacobian& cj, const Vec2& center,
                          double radius);

/// Sum of h^2 J over every node.
double jacobian_total_mass(const ComplexField& u, const CurrentJacobian& cj);

/// Vortices from plaquette phase winding. Adjacent winding cells are
/// clustered; clusters of net degree zero are dropped. Positions are zeros of
/// the bilinear interpolant. Throws UnresolvedCore when a winding cell has
/// |u| > 1/2 at every corner.
VortexConfiguration locate_vortices(const ComplexField& u);

enum class PdeFlow { Heat, GrossPitaevskii };
enum class HeatStepper { Explicit, Implicit };

/// Advances a field by a given duration with a fixed step no larger than
/// max_dt, reusing implicit factorizations.
class FieldEvolver {
 public:
  FieldEvolver(PdeFlow flow, HeatStepper stepper, double max_dt);
  void advance(ComplexField& u, double duration);
  long steps() const { return steps_; }

 private:
  PdeFlow flow_;
  HeatStepper stepper_;
  double max_dt_;
  long steps_ = 0;
  std::map<long long, ImplicitHeatStepper> implicit_;
};

struct CompareSpec {
  PdeFlow flow = PdeFlow::Heat;
  HeatStepper stepper = HeatStepper::Implicit;
  double epsilon = 0.05;
  Grid grid;
  double horizon = 0.1;      // ODE time
  std::size_t samples = 10;  // comparison times, evenly spaced in (0, horizon]
  double dt = 0.0;           // PDE step; 0 selects a default
  // Heat-flow time spent relaxing the cores of the well-prepared data before
  // t = 0; negative selects 3 eps^2. The ODE starts from the vortices tracked
  // after this phase.
  double preparation_time = -1.0;
};

struct CompareReport {
  double time_scale = 1.0;  // t_pde = time_scale t_ode
  VortexConfiguration start;  // tracked vortices after preparation
  std::vector<double> times;                      // ODE times
  std::vector<VortexConfiguration> tracked;       // PDE vortices, matched to the ODE order
  std::vector<VortexConfiguration> predicted;     // ODE vortices
  std::vector<double> deviation;                  // max chordal distance per time
  double max_deviation = 0.0;
  std::vector<double> energy;
};

/// Evolves well-prepared data and the matching point-vortex flow (gradient
/// for heat with t_pde = |ln eps| t_ode, Hamiltonian for GP) and compares
/// tracked vortices. Throws TrackingLoss if the vortex count changes.
/// Positions are compared; the global phase is not.
CompareReport compare_to_ode(const VortexConfiguration& cfg0, const CompareSpec& spec);

struct RelaxReport {
  double time = 0.0;
  double rate = 0.0;  // final max |u_t|
  bool converged = false;
  std::vector<double> times;
  std::vector<EnergyReport> energies;
  std::vector<std::size_t> vortex_counts;
};

/// Implicit heat flow until max |u_t| < tol or max_time, sampling every
/// sample_every time units.
RelaxReport relax(ComplexField& u, double dt, double tol, double max_time, double sample_every);

}  // namespace vortexflow
