#include "vortexflow/gl_field_solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "vortexflow/error.hpp"
#include "vortexflow/parallel.hpp"

namespace vortexflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kBlowUpModulus = 1.1;

double weight_at(double x, double y) {
  const double s = 1.0 + x * x + y * y;
  return 4.0 / (s * s);
}

double coefficient_at(double x, double y) {
  const double s = 1.0 + x * x + y * y;
  return 0.25 * s * s;
}

Vec3 sphere_at(double x, double y) {
  const double r2 = x * x + y * y;
  return Vec3(2.0 * x, 2.0 * y, r2 - 1.0) / (1.0 + r2);
}

double potential(const Complex& u, double epsilon) {
  const double d = 1.0 - std::norm(u);
  return d * d / (4.0 * epsilon * epsilon);
}

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t);
  const double b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

void check_modulus(const ComplexField& u) {
  for (const Complex& z : u.values) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) || std::abs(z) > kBlowUpModulus) {
      std::ostringstream os;
      os << "field modulus exceeded " << kBlowUpModulus << " at t = " << u.time;
      throw Error(ErrorKind::BlowUp, os.str());
    }
  }
}

void check_step(const ComplexField& u, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  if (dt > explicit_dt_limit(u.grid, u.epsilon) * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds the explicit stability limit "
       << explicit_dt_limit(u.grid, u.epsilon);
    throw Error(ErrorKind::InvalidArgument, os.str());
  }
}

// a Delta_h u at interior nodes, zero on the boundary.
void diffusion_rate(const ComplexField& u, std::vector<Complex>& out) {
  const Grid& g = u.grid;
  const double inv_h2 = 1.0 / (g.h() * g.h());
  out.assign(g.size(), Complex(0.0, 0.0));
  parallel_for(static_cast<std::size_t>(g.N - 1), [&](std::size_t row) {
    const int j = static_cast<int>(row) + 1;
    const double y = g.coord(j);
    for (int k = 1; k < g.N; ++k) {
      const Complex lap =
          (u.at(k + 1, j) + u.at(k - 1, j) + u.at(k, j + 1) + u.at(k, j - 1) - 4.0 * u.at(k, j)) *
          inv_h2;
      out[g.index(k, j)] = coefficient_at(g.coord(k), y) * lap;
    }
  });
}

void axpy(std::vector<Complex>& y, const std::vector<Complex>& a, double s,
          const std::vector<Complex>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + s * x[i];
}

// Shared RK4 driver for u_t = rate(u).
template <class Rate>
void rk4(ComplexField& u, double dt, Rate rate) {
  const std::vector<Complex> u0 = u.values;
  std::vector<Complex> k1, k2, k3, k4;
  rate(u, k1);
  axpy(u.values, u0, 0.5 * dt, k1);
  rate(u, k2);
  axpy(u.values, u0, 0.5 * dt, k2);
  rate(u, k3);
  axpy(u.values, u0, dt, k3);
  rate(u, k4);
  for (std::size_t i = 0; i < u0.size(); ++i) {
    u.values[i] = u0[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

void gp_rotation(ComplexField& u, double dt) {
  const double c = dt / (u.epsilon * u.epsilon);
  for (Complex& z : u.values) z *= std::polar(1.0, -(1.0 - std::norm(z)) * c);
}

// Row partial sums, combined in row order so the result does not depend on
// the thread partitioning.
struct EnergySums {
  long double E = 0, F[3] = {0, 0, 0}, m[3] = {0, 0, 0}, defect = 0;
};

EnergySums row_energy(const ComplexField& u, int j) {
  const Grid& g = u.grid;
  const double h = g.h();
  const double h2 = h * h;
  const double y = g.coord(j);
  EnergySums s;
  auto add_edge = [&](double mx, double my, double weight, const Complex& a, const Complex& b) {
    const double e = 0.5 * weight * std::norm(a - b);
    const Vec3 P = sphere_at(mx, my);
    s.E += e;
    for (int i = 0; i < 3; ++i) s.F[i] += e * 0.5 * (1.0 - P[i]);
  };
  for (int k = 0; k <= g.N; ++k) {
    const double x = g.coord(k);
    const Complex& z = u.at(k, j);
    if (k < g.N) {
      add_edge(x + 0.5 * h, y, (j == 0 || j == g.N) ? 0.5 : 1.0, z, u.at(k + 1, j));
    }
    if (j < g.N) {
      add_edge(x, y + 0.5 * h, (k == 0 || k == g.N) ? 0.5 : 1.0, z, u.at(k, j + 1));
    }
    const double dv = g.node_weight(k, j) * h2 * weight_at(x, y);
    const double V = potential(z, u.epsilon);
    const Vec3 P = sphere_at(x, y);
    s.E += dv * V;
    for (int i = 0; i < 3; ++i) {
      s.F[i] += dv * V * 0.5 * (1.0 - P[i]);
      s.m[i] += dv * V * P[i];
    }
    const double d = 1.0 - std::norm(z);
    s.defect += dv * d * d;
  }
  return s;
}

// Per-row sums of f(k, j) combined in row order.
template <class F>
long double ordered_sum(const Grid& g, F f) {
  std::vector<long double> rows(static_cast<std::size_t>(g.side()), 0.0L);
  parallel_for(rows.size(), [&](std::size_t row) {
    const int j = static_cast<int>(row);
    long double s = 0.0L;
    for (int k = 0; k <= g.N; ++k) s += f(k, j);
    rows[row] = s;
  });
  long double total = 0.0L;
  for (long double r : rows) total += r;
  return total;
}

void check_same_grid(const ComplexField& a, const ComplexField& b) {
  if (a.grid.N != b.grid.N || a.grid.L != b.grid.L || a.epsilon != b.epsilon) {
    throw Error(ErrorKind::InvalidArgument, "fields live on different grids");
  }
}

}  // namespace

void Grid::validate() const {
  if (!(L > 0.0) || !std::isfinite(L)) throw Error(ErrorKind::InvalidArgument, "L must be positive");
  if (N < 16 || N % 2 != 0) throw Error(ErrorKind::InvalidArgument, "N must be even and at least 16");
}

double Grid::node_weight(int k, int j) const {
  double w = 1.0;
  if (k == 0 || k == N) w *= 0.5;
  if (j == 0 || j == N) w *= 0.5;
  return w;
}

double diffusion_coefficient(const ChartPoint& p) { return coefficient_at(p.p.x(), p.p.y()); }

ComplexField make_constant_field(const Grid& grid, double epsilon, Complex value) {
  grid.validate();
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be positive");
  if (grid.h() >= epsilon) throw Error(ErrorKind::ResolutionError, "grid spacing must be below epsilon");
  ComplexField u;
  u.grid = grid;
  u.epsilon = epsilon;
  u.values.assign(grid.size(), value);
  return u;
}

ComplexField build_well_prepared(const VortexConfiguration& cfg, double epsilon, const Grid& grid) {
  grid.validate();
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be positive");
  validate_degrees(cfg);
  if (grid.h() >= 0.5 * epsilon) {
    std::ostringstream os;
    os << "grid spacing " << grid.h() << " must be below epsilon/2 = " << 0.5 * epsilon;
    throw Error(ErrorKind::ResolutionError, os.str());
  }
  for (const auto& v : cfg.vortices) {
    if (v.position.p.norm() >= 0.5 * grid.L) {
      throw Error(ErrorKind::InvalidArgument, "vortices must lie in |p| < L/2");
    }
  }
  const auto P = cfg.sphere_points();
  for (std::size_t i = 0; i < P.size(); ++i) {
    for (std::size_t j = i + 1; j < P.size(); ++j) {
      if (chordal_distance(P[i], P[j]) < 10.0 * epsilon) {
        std::ostringstream os;
        os << "vortices " << i << " and " << j << " are closer than 10 epsilon";
        throw Error(ErrorKind::SeparationError, os.str());
      }
    }
  }

  ComplexField u = make_constant_field(grid, epsilon, Complex(1.0, 0.0));
  std::vector<double> scale;
  for (const auto& v : cfg.vortices) scale.push_back(std::exp(conformal_exponent(v.position)) / epsilon);
  const double r_inner = 0.5 * grid.L;
  const double r_outer = 0.95 * grid.L;
  bool wrapped = false;
  for (int j = 0; j <= grid.N; ++j) {
    for (int k = 0; k <= grid.N; ++k) {
      const Vec2 x(grid.coord(k), grid.coord(j));
      const double chi = smooth_step((r_outer - x.norm()) / (r_outer - r_inner));
      if (chi == 0.0) continue;
      Complex phase(1.0, 0.0);
      double modulus = 1.0;
      for (std::size_t i = 0; i < cfg.size(); ++i) {
        const Vec2 d = x - cfg.vortices[i].position.p;
        const double r = d.norm();
        modulus *= std::tanh(r * scale[i]);
        if (r > 0.0) {
          const Complex f(d.x() / r, d.y() / r);
          phase *= cfg.vortices[i].degree > 0 ? f : std::conj(f);
        }
      }
      const double m = 1.0 - chi * (1.0 - modulus);
      if (chi == 1.0) {
        u.at(k, j) = m * phase;
      } else {
        const double theta = std::arg(phase);
        if (std::abs(theta) > 0.9 * kPi) wrapped = true;
        u.at(k, j) = std::polar(m, chi * theta);
      }
    }
  }
  if (wrapped) {
    throw Error(ErrorKind::SeparationError,
                "phase winds through the far-field cutoff; move the vortices toward the origin");
  }
  return u;
}

double explicit_dt_limit(const Grid& grid, double epsilon) {
  const double h = grid.h();
  const double a_max = coefficient_at(grid.L, grid.L);
  return 2.78 / (8.0 * a_max / (h * h) + 2.0 / (epsilon * epsilon));
}

double recommended_explicit_dt(const Grid& grid, double epsilon) {
  const double h = grid.h();
  const double a_max = coefficient_at(grid.L, grid.L);
  return 1.6 / (8.0 * a_max / (h * h) + 2.0 / (epsilon * epsilon));
}

std::vector<Complex> flow_rate(const ComplexField& u, bool gross_pitaevskii) {
  std::vector<Complex> out;
  diffusion_rate(u, out);
  const double inv_e2 = 1.0 / (u.epsilon * u.epsilon);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Complex& z = u.values[i];
    out[i] += (1.0 - std::norm(z)) * z * inv_e2;
    if (gross_pitaevskii) out[i] *= Complex(0.0, -1.0);
  }
  return out;
}

double heat_rate_norm(const ComplexField& u) {
  double m = 0.0;
  for (const Complex& z : flow_rate(u)) m = std::max(m, std::abs(z));
  return m;
}

void heat_flow_step(ComplexField& u, double dt) {
  check_step(u, dt);
  rk4(u, dt, [](const ComplexField& v, std::vector<Complex>& out) { out = flow_rate(v); });
  u.time += dt;
  check_modulus(u);
}

void gp_flow_step(ComplexField& u, double dt) {
  check_step(u, dt);
  gp_rotation(u, 0.5 * dt);
  rk4(u, dt, [](const ComplexField& v, std::vector<Complex>& out) {
    diffusion_rate(v, out);
    for (Complex& z : out) z *= Complex(0.0, -1.0);
  });
  gp_rotation(u, 0.5 * dt);
  u.time += dt;
  check_modulus(u);
}

void reaction_step(ComplexField& u, double dt) {
  // s = |u|^2 solves s' = 2 s (1 - s) / eps^2; the phase is unchanged.
  const double decay = std::exp(-2.0 * dt / (u.epsilon * u.epsilon));
  for (Complex& z : u.values) {
    const double s0 = std::norm(z);
    if (s0 == 0.0) continue;
    const double s = s0 / (s0 + (1.0 - s0) * decay);
    z *= std::sqrt(s / s0);
  }
}

struct ImplicitHeatStepper::Solver {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  std::vector<double> mass;  // h^2 e^{2f} / (gamma dt) per interior unknown
};

namespace {

// Two-stage, second-order, L-stable SDIRK.
const double kGamma = 1.0 - 1.0 / std::numbers::sqrt2;

}  // namespace

ImplicitHeatStepper::ImplicitHeatStepper(const Grid& grid, double dt)
    : grid_(grid), dt_(dt), solver_(std::make_unique<Solver>()) {
  grid.validate();
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  const int n = grid.N - 1;
  const double h = grid.h();
  auto id = [n](int k, int j) { return (j - 1) * n + (k - 1); };
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(5 * n * n));
  solver_->mass.resize(static_cast<std::size_t>(n * n));
  for (int j = 1; j < grid.N; ++j) {
    for (int k = 1; k < grid.N; ++k) {
      const double m = h * h * weight_at(grid.coord(k), grid.coord(j)) / (kGamma * dt);
      solver_->mass[static_cast<std::size_t>(id(k, j))] = m;
      entries.emplace_back(id(k, j), id(k, j), m + 4.0);
      if (k > 1) entries.emplace_back(id(k, j), id(k - 1, j), -1.0);
      if (k < grid.N - 1) entries.emplace_back(id(k, j), id(k + 1, j), -1.0);
      if (j > 1) entries.emplace_back(id(k, j), id(k, j - 1), -1.0);
      if (j < grid.N - 1) entries.emplace_back(id(k, j), id(k, j + 1), -1.0);
    }
  }
  Eigen::SparseMatrix<double> A(n * n, n * n);
  A.setFromTriplets(entries.begin(), entries.end());
  solver_->ldlt.compute(A);
  if (solver_->ldlt.info() != Eigen::Success) {
    throw Error(ErrorKind::InvalidArgument, "implicit diffusion matrix factorization failed");
  }
}

ImplicitHeatStepper::~ImplicitHeatStepper() = default;
ImplicitHeatStepper::ImplicitHeatStepper(ImplicitHeatStepper&&) noexcept = default;
ImplicitHeatStepper& ImplicitHeatStepper::operator=(ImplicitHeatStepper&&) noexcept = default;

void ImplicitHeatStepper::step(ComplexField& u) const {
  if (u.grid.N != grid_.N || u.grid.L != grid_.L) {
    throw Error(ErrorKind::InvalidArgument, "field grid does not match the stepper");
  }
  const int n = grid_.N - 1;
  const auto un = static_cast<Eigen::Index>(n) * n;
  auto id = [n](int k, int j) { return static_cast<Eigen::Index>((j - 1) * n + (k - 1)); };

  reaction_step(u, 0.5 * dt_);

  // Boundary neighbours enter the right-hand side of (M - h^2 Delta_h) U = M V.
  Eigen::MatrixX2d boundary = Eigen::MatrixX2d::Zero(un, 2);
  auto add_boundary = [&](int k, int j, int kb, int jb) {
    if (!grid_.on_boundary(kb, jb)) return;
    const Complex& z = u.at(kb, jb);
    boundary(id(k, j), 0) += z.real();
    boundary(id(k, j), 1) += z.imag();
  };
  Eigen::MatrixX2d u0(un, 2);
  for (int j = 1; j < grid_.N; ++j) {
    for (int k = 1; k < grid_.N; ++k) {
      u0(id(k, j), 0) = u.at(k, j).real();
      u0(id(k, j), 1) = u.at(k, j).imag();
      add_boundary(k, j, k - 1, j);
      add_boundary(k, j, k + 1, j);
      add_boundary(k, j, k, j - 1);
      add_boundary(k, j, k, j + 1);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> mass(solver_->mass.data(), un);
  auto solve = [&](const Eigen::MatrixX2d& v) -> Eigen::MatrixX2d {
    Eigen::MatrixX2d rhs = mass.asDiagonal() * v + boundary;
    return solver_->ldlt.solve(rhs);
  };
  const Eigen::MatrixX2d u1 = solve(u0);
  const Eigen::MatrixX2d u2 = solve(u0 + ((1.0 - kGamma) / kGamma) * (u1 - u0));
  for (int j = 1; j < grid_.N; ++j) {
    for (int k = 1; k < grid_.N; ++k) u.at(k, j) = Complex(u2(id(k, j), 0), u2(id(k, j), 1));
  }

  reaction_step(u, 0.5 * dt_);
  u.time += dt_;
  check_modulus(u);
}

EnergyReport energy(const ComplexField& u) {
  const Grid& g = u.grid;
  std::vector<EnergySums> rows(static_cast<std::size_t>(g.side()));
  parallel_for(rows.size(), [&](std::size_t row) { rows[row] = row_energy(u, static_cast<int>(row)); });
  EnergySums total;
  for (const auto& r : rows) {
    total.E += r.E;
    total.defect += r.defect;
    for (int i = 0; i < 3; ++i) {
      total.F[i] += r.F[i];
      total.m[i] += r.m[i];
    }
  }
  EnergyReport rep;
  rep.E = static_cast<double>(total.E);
  rep.mass_defect = static_cast<double>(total.defect);
  for (int i = 0; i < 3; ++i) {
    rep.F[static_cast<std::size_t>(i)] = static_cast<double>(total.F[i]);
    rep.moments[static_cast<std::size_t>(i)] = static_cast<double>(total.m[i]);
  }
  return rep;
}

WeightedIdentityTerms weighted_identity_terms(const ComplexField& before, const ComplexField& after,
                                              double dt) {
  check_same_grid(before, after);
  if (!(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "dt must be positive");
  const Grid& g = before.grid;
  const double h2 = g.h() * g.h();
  const EnergyReport e0 = energy(before);
  const EnergyReport e1 = energy(after);
  WeightedIdentityTerms t;
  for (std::size_t i = 0; i < 3; ++i) {
    t.dF_dt[i] = (e1.F[i] - e0.F[i]) / dt;
    const auto dissipation = ordered_sum(g, [&](int k, int j) -> long double {
      const double x = g.coord(k), y = g.coord(j);
      const Complex ut = (after.at(k, j) - before.at(k, j)) / dt;
      return g.node_weight(k, j) * h2 * weight_at(x, y) * 0.5 * (1.0 - sphere_at(x, y)[i]) *
             std::norm(ut);
    });
    const auto moment = ordered_sum(g, [&](int k, int j) -> long double {
      const double x = g.coord(k), y = g.coord(j);
      const Complex mid = 0.5 * (after.at(k, j) + before.at(k, j));
      return g.node_weight(k, j) * h2 * weight_at(x, y) * sphere_at(x, y)[i] *
             potential(mid, before.epsilon);
    });
    t.dissipation[i] = static_cast<double>(dissipation);
    t.moment[i] = static_cast<double>(moment);
    t.residual[i] = t.dF_dt[i] + t.dissipation[i] + t.moment[i];
  }
  return t;
}

std::array<double, 3> weighted_identity_residual(const ComplexField& before,
                                                 const ComplexField& after, double dt) {
  return weighted_identity_terms(before, after, dt).residual;
}

CurrentJacobian current_and_jacobian(const ComplexField& u) {
  const Grid& g = u.grid;
  const double inv_2h = 0.5 / g.h();
  CurrentJacobian cj;
  cj.current.assign(g.size(), Vec2::Zero());
  cj.jacobian.assign(g.size(), 0.0);
  for (int j = 1; j < g.N; ++j) {
    for (int k = 1; k < g.N; ++k) {
      const Complex ub = std::conj(u.at(k, j));
      const Complex d1 = (u.at(k + 1, j) - u.at(k - 1, j)) * inv_2h;
      const Complex d2 = (u.at(k, j + 1) - u.at(k, j - 1)) * inv_2h;
      cj.current[g.index(k, j)] = Vec2((ub * d1).imag(), (ub * d2).imag());
    }
  }
  for (int j = 2; j < g.N - 1; ++j) {
    for (int k = 2; k < g.N - 1; ++k) {
      const double d1j2 = (cj.current[g.index(k + 1, j)].y() - cj.current[g.index(k - 1, j)].y()) * inv_2h;
      const double d2j1 = (cj.current[g.index(k, j + 1)].x() - cj.current[g.index(k, j - 1)].x()) * inv_2h;
      cj.jacobian[g.index(k, j)] = 0.5 * (d1j2 - d2j1);
    }
  }
  return cj;
}

double jacobian_disk_mass(const ComplexField& u, const CurrentJacobian& cj, const Vec2& center,
                          double radius) {
  const Grid& g = u.grid;
  const double h2 = g.h() * g.h();
  return static_cast<double>(ordered_sum(g, [&](int k, int j) -> long double {
    const Vec2 x(g.coord(k), g.coord(j));
    return (x - center).norm() < radius ? h2 * cj.jacobian[g.index(k, j)] : 0.0;
  }));
}

double jacobian_total_mass(const ComplexField& u, const CurrentJacobian& cj) {
  const Grid& g = u.grid;
  const double h2 = g.h() * g.h();
  return static_cast<double>(
      ordered_sum(g, [&](int k, int j) -> long double { return h2 * cj.jacobian[g.index(k, j)]; }));
}

namespace {

// Zero of the bilinear interpolant on the unit cell, by Newton from the
// center; falls back to the smallest corner.
Vec2 bilinear_zero(const Complex& u00, const Complex& u10, const Complex& u01, const Complex& u11) {
  auto value = [&](double s, double t) {
    return u00 * (1 - s) * (1 - t) + u10 * s * (1 - t) + u01 * (1 - s) * t + u11 * s * t;
  };
  double s = 0.5, t = 0.5;
  for (int it = 0; it < 30; ++it) {
    const Complex f = value(s, t);
    const Complex fs = (u10 - u00) * (1 - t) + (u11 - u01) * t;
    const Complex ft = (u01 - u00) * (1 - s) + (u11 - u10) * s;
    const double det = fs.real() * ft.imag() - ft.real() * fs.imag();
    if (std::abs(det) < 1e-300) break;
    const double ds = -(f.real() * ft.imag() - ft.real() * f.imag()) / det;
    const double dt = -(fs.real() * f.imag() - f.real() * fs.imag()) / det;
    s = std::clamp(s + ds, 0.0, 1.0);
    t = std::clamp(t + dt, 0.0, 1.0);
    if (std::abs(ds) + std::abs(dt) < 1e-14) break;
  }
  const double corners[4] = {std::abs(u00), std::abs(u10), std::abs(u01), std::abs(u11)};
  const double best = *std::min_element(corners, corners + 4);
  if (std::abs(value(s, t)) <= best) return Vec2(s, t);
  const int c = static_cast<int>(std::min_element(corners, corners + 4) - corners);
  return Vec2(c % 2, c / 2);
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace

VortexConfiguration locate_vortices(const ComplexField& u) {
  const Grid& g = u.grid;
  struct Cell {
    int k, j, winding;
    double min_modulus;
  };
  std::vector<Cell> cells;
  for (int j = 0; j < g.N; ++j) {
    for (int k = 0; k < g.N; ++k) {
      const Complex c[4] = {u.at(k, j), u.at(k + 1, j), u.at(k + 1, j + 1), u.at(k, j + 1)};
      double total = 0.0;
      for (int e = 0; e < 4; ++e) total += std::arg(c[(e + 1) % 4] * std::conj(c[e]));
      const int winding = static_cast<int>(std::lround(total / (2.0 * kPi)));
      if (winding == 0) continue;
      double m = std::abs(c[0]);
      for (int e = 1; e < 4; ++e) m = std::min(m, std::abs(c[e]));
      if (m > 0.5) {
        std::ostringstream os;
        os << "phase winding in cell (" << k << ", " << j << ") with |u| >= " << m;
        throw Error(ErrorKind::UnresolvedCore, os.str());
      }
      cells.push_back({k, j, winding, m});
    }
  }
  std::vector<std::size_t> parent(cells.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (std::size_t a = 0; a < cells.size(); ++a) {
    for (std::size_t b = a + 1; b < cells.size(); ++b) {
      if (std::abs(cells[a].k - cells[b].k) <= 1 && std::abs(cells[a].j - cells[b].j) <= 1) {
        parent[find_root(parent, b)] = find_root(parent, a);
      }
    }
  }
  VortexConfiguration out;
  out.time = u.time;
  for (std::size_t a = 0; a < cells.size(); ++a) {
    if (find_root(parent, a) != a) continue;
    int net = 0;
    std::size_t core = a;
    for (std::size_t b = 0; b < cells.size(); ++b) {
      if (find_root(parent, b) != a) continue;
      net += cells[b].winding;
      if (cells[b].min_modulus < cells[core].min_modulus) core = b;
    }
    if (net == 0) continue;
    const Cell& c = cells[core];
    const Vec2 st = bilinear_zero(u.at(c.k, c.j), u.at(c.k + 1, c.j), u.at(c.k, c.j + 1),
                                  u.at(c.k + 1, c.j + 1));
    const double h = g.h();
    out.vortices.push_back(
        {ChartPoint(g.coord(c.k) + st.x() * h, g.coord(c.j) + st.y() * h), net});
  }
  return out;
}

FieldEvolver::FieldEvolver(PdeFlow flow, HeatStepper stepper, double max_dt)
    : flow_(flow), stepper_(stepper), max_dt_(max_dt) {
  if (!(max_dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "max_dt must be positive");
}

void FieldEvolver::advance(ComplexField& u, double duration) {
  if (duration <= 0.0) return;
  const long n = std::max(1L, static_cast<long>(std::ceil(duration / max_dt_ - 1e-9)));
  const double dt = duration / static_cast<double>(n);
  const double t_end = u.time + duration;
  if (flow_ == PdeFlow::Heat && stepper_ == HeatStepper::Implicit) {
    const auto key = std::bit_cast<long long>(dt);
    auto it = implicit_.find(key);
    if (it == implicit_.end()) it = implicit_.emplace(key, ImplicitHeatStepper(u.grid, dt)).first;
    for (long s = 0; s < n; ++s) it->second.step(u);
  } else {
    for (long s = 0; s < n; ++s) {
      if (flow_ == PdeFlow::Heat) {
        heat_flow_step(u, dt);
      } else {
        gp_flow_step(u, dt);
      }
    }
  }
  u.time = t_end;
  steps_ += n;
}

namespace {

// Reorders `found` so that entry i matches predicted vortex i (same degree,
// nearest first).
VortexConfiguration match_vortices(const VortexConfiguration& predicted,
                                   const VortexConfiguration& found) {
  struct Pair {
    double d;
    std::size_t p, f;
  };
  std::vector<Pair> pairs;
  const auto P = predicted.sphere_points();
  const auto F = found.sphere_points();
  for (std::size_t i = 0; i < P.size(); ++i) {
    for (std::size_t j = 0; j < F.size(); ++j) {
      if (predicted.vortices[i].degree != found.vortices[j].degree) continue;
      pairs.push_back({chordal_distance(P[i], F[j]), i, j});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<std::optional<std::size_t>> match(P.size());
  std::vector<bool> used(F.size(), false);
  for (const auto& pr : pairs) {
    if (match[pr.p] || used[pr.f]) continue;
    match[pr.p] = pr.f;
    used[pr.f] = true;
  }
  VortexConfiguration out;
  out.time = found.time;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (!match[i]) throw Error(ErrorKind::TrackingLoss, "tracked degrees do not match the prediction");
    out.vortices.push_back(found.vortices[*match[i]]);
  }
  return out;
}

}  // namespace

CompareReport compare_to_ode(const VortexConfiguration& cfg0, const CompareSpec& spec) {
  if (!(spec.horizon > 0.0) || spec.samples == 0) {
    throw Error(ErrorKind::InvalidArgument, "horizon and samples must be positive");
  }
  ComplexField u = build_well_prepared(cfg0, spec.epsilon, spec.grid);
  const double prep =
      spec.preparation_time < 0.0 ? 3.0 * spec.epsilon * spec.epsilon : spec.preparation_time;
  VortexConfiguration start = cfg0;
  if (prep > 0.0) {
    const ImplicitHeatStepper relaxer(spec.grid, prep / 20.0);
    for (int s = 0; s < 20; ++s) relaxer.step(u);
    u.time = 0.0;
    const VortexConfiguration found = locate_vortices(u);
    if (found.size() != cfg0.size()) {
      throw Error(ErrorKind::TrackingLoss, "vortex count changed while preparing the cores");
    }
    start = match_vortices(cfg0, found);
    start.time = 0.0;
  }

  FlowSpec ode;
  ode.kind = spec.flow == PdeFlow::Heat ? FlowKind::Gradient : FlowKind::Hamiltonian;
  ode.rk_rel_tol = 1e-10;
  ode.rk_abs_tol = 1e-13;
  ode.max_time = spec.horizon;
  ode.output_stride = spec.horizon / static_cast<double>(spec.samples);
  const TrajectoryTrace trace = integrate(start, ode);
  if (!trace.collisions.empty()) {
    throw Error(ErrorKind::InvalidArgument, "the point-vortex flow collides before the horizon");
  }

  CompareReport rep;
  rep.start = start;
  rep.time_scale = spec.flow == PdeFlow::Heat ? std::abs(std::log(spec.epsilon)) : 1.0;
  double dt = spec.dt;
  const bool implicit = spec.flow == PdeFlow::Heat && spec.stepper == HeatStepper::Implicit;
  if (dt <= 0.0) {
    dt = implicit ? 0.5 * spec.epsilon * spec.epsilon : recommended_explicit_dt(spec.grid, spec.epsilon);
  }
  FieldEvolver evolver(spec.flow, spec.stepper, dt);
  rep.energy.push_back(energy(u).E);

  double t_prev = 0.0;
  for (std::size_t s = 1; s <= spec.samples; ++s) {
    const double t = spec.horizon * static_cast<double>(s) / static_cast<double>(spec.samples);
    evolver.advance(u, rep.time_scale * (t - t_prev));
    t_prev = t;
    const VortexConfiguration found = locate_vortices(u);
    if (found.size() != cfg0.size()) {
      std::ostringstream os;
      os << "tracked " << found.size() << " vortices at t = " << t << ", expected " << cfg0.size();
      throw Error(ErrorKind::TrackingLoss, os.str());
    }
    const auto nearest = std::min_element(
        trace.samples.begin(), trace.samples.end(),
        [t](const TraceSample& a, const TraceSample& b) { return std::abs(a.time - t) < std::abs(b.time - t); });
    const VortexConfiguration& predicted = nearest->config;
    const VortexConfiguration tracked = match_vortices(predicted, found);
    const auto P = predicted.sphere_points();
    const auto Q = tracked.sphere_points();
    double dev = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) dev = std::max(dev, chordal_distance(P[i], Q[i]));
    rep.times.push_back(t);
    rep.predicted.push_back(predicted);
    rep.tracked.push_back(tracked);
    rep.deviation.push_back(dev);
    rep.max_deviation = std::max(rep.max_deviation, dev);
    rep.energy.push_back(energy(u).E);
  }
  return rep;
}

RelaxReport relax(ComplexField& u, double dt, double tol, double max_time, double sample_every) {
  if (!(tol > 0.0) || !(max_time > 0.0) || !(sample_every > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "relax parameters must be positive");
  }
  const long per_sample = std::max(1L, static_cast<long>(std::llround(sample_every / dt)));
  const ImplicitHeatStepper stepper(u.grid, dt);
  RelaxReport rep;
  const double t0 = u.time;
  auto record = [&] {
    rep.times.push_back(u.time);
    rep.energies.push_back(energy(u));
    rep.vortex_counts.push_back(locate_vortices(u).size());
    rep.rate = heat_rate_norm(u);
  };
  record();
  while (rep.rate >= tol && u.time - t0 < max_time) {
    for (long s = 0; s < per_sample; ++s) stepper.step(u);
    record();
  }
  rep.time = u.time - t0;
  rep.converged = rep.rate < tol;
  return rep;
}

}  // namespace vortexflow
