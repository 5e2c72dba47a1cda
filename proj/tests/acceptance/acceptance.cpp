// Acceptance checks: one PASS/FAIL line per criterion. Arguments select a
// subset by number; no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "random_configs.hpp"
#include "vortexflow/error.hpp"
#include "vortexflow/gl_field_solver.hpp"
#include "vortexflow/point_vortex_flow.hpp"

using namespace vortexflow;
using vortexflow::testing::random_configuration;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

VortexConfiguration pair(Vec2 plus, Vec2 minus) {
  VortexConfiguration cfg;
  cfg.vortices = {{ChartPoint(plus), 1}, {ChartPoint(minus), -1}};
  return cfg;
}

// q(t) = sqrt((1 + c e^t) / (1 - c e^t)), c = (q0^2 - 1) / (q0^2 + 1).
double explicit_q(double q0, double t) {
  const double c = (q0 * q0 - 1.0) / (q0 * q0 + 1.0);
  return std::sqrt((1.0 + c * std::exp(t)) / (1.0 - c * std::exp(t)));
}

// Collision (q -> 0) or escape (q -> infinity) time of the explicit pair.
double explicit_end_time(double q0) {
  const double c = (q0 * q0 - 1.0) / (q0 * q0 + 1.0);
  return std::log(1.0 / std::abs(c));
}

// P = (2p, r^2 - 1) / (1 + r^2).
Vec3 to_sphere(const Vec2& p) {
  const double r2 = p.squaredNorm();
  return Vec3(2.0 * p.x(), 2.0 * p.y(), r2 - 1.0) / (1.0 + r2);
}

// -pi sum_{i != j} d_i d_j ln |P_i - P_j|.
double chordal_W(const VortexConfiguration& cfg) {
  double W = 0.0;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    for (std::size_t j = 0; j < cfg.size(); ++j) {
      if (i == j) continue;
      const double r = (to_sphere(cfg.vortices[i].position.p) - to_sphere(cfg.vortices[j].position.p)).norm();
      W -= kPi * cfg.vortices[i].degree * cfg.vortices[j].degree * std::log(r);
    }
  }
  return W;
}

FlowSpec tight_spec(double max_time, double stride) {
  FlowSpec spec;
  spec.rk_rel_tol = 1e-12;
  spec.rk_abs_tol = 1e-15;
  spec.max_time = max_time;
  spec.output_stride = stride;
  return spec;
}

Outcome explicit_pair_solution() {
  double worst_err = 0.0, worst_time = 0.0;
  for (double q0 : {1.0 / 3.0, 0.5, 0.9, 1.1, 2.0}) {
    const auto start = std::chrono::steady_clock::now();
    FlowSpec spec;
    spec.rk_rel_tol = 1e-11;
    spec.rk_abs_tol = 1e-13;
    spec.max_time = 0.9 * explicit_end_time(q0);
    spec.output_stride = spec.max_time / 200.0;
    const auto trace = integrate(pair({q0, 0.0}, {-q0, 0.0}), spec);
    for (const auto& s : trace.samples) {
      if (s.config.size() != 2) {
        worst_err = INFINITY;
        continue;
      }
      const double q = explicit_q(q0, s.time);
      for (const auto& v : s.config.vortices) {
        const Vec2 expected(v.degree * q, 0.0);
        worst_err = std::max(worst_err, (v.position.p - expected).norm() / q);
      }
    }
    worst_time = std::max(worst_time, seconds_since(start));
  }
  return {worst_err <= 1e-6 && worst_time < 1.0,
          fmt("max relative error %.2e (tol 1e-6), slowest case %.3f s (limit 1 s)", worst_err, worst_time)};
}

std::vector<DiagnosticsReport> gradient_ensemble() {
  static std::vector<DiagnosticsReport> reports;
  if (!reports.empty()) return reports;
  std::mt19937_64 rng(2024);
  const FlowSpec spec = tight_spec(0.5, 2e-4);
  for (int k = 0; k < 50; ++k) {
    reports.push_back(diagnostics(integrate(random_configuration(rng, 1 + k % 3, 1.5, 0.2), spec)));
  }
  return reports;
}

Outcome v0_growth() {
  const auto start = std::chrono::steady_clock::now();
  const auto reports = gradient_ensemble();
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.max_r1_rel);
  return {worst <= 1e-6 && elapsed < 10.0,
          fmt("50 configurations, max |V0(t) - e^t V0(0)| / (|V0(0)| e^t) = %.2e (tol 1e-6), %.2f s", worst,
              elapsed)};
}

Outcome pair_sum_decay() {
  const auto reports = gradient_ensemble();
  double worst = 0.0;
  for (const auto& r : reports) worst = std::max(worst, r.max_r3);
  return {worst <= 1e-5, fmt("50 configurations, max centered-difference residual %.2e (tol 1e-5)", worst)};
}

Outcome cap_annihilation() {
  const auto start = std::chrono::steady_clock::now();
  // Boundary configuration of the s = 0.6 cap: (+-0.6, 0, -0.8), chart q0 = 1/3.
  FlowSpec spec;
  spec.max_time = 1.0;
  const auto trace = integrate(pair({1.0 / 3.0, 0.0}, {-1.0 / 3.0, 0.0}), spec);
  const auto t_tight = trace.annihilation_time();
  const double tight_err = t_tight ? std::abs(*t_tight - std::log(1.25)) : INFINITY;

  const double s = std::sqrt(1.0 - 0.81);
  const double kappa = 2.0 * 0.9 - 1.0;
  const double bound = std::log(1.0 / kappa) + 10.0 * spec.collision_radius;
  const ScanReport rep = annihilation_scan(2, s, 100, 7, spec);
  std::size_t within = 0;
  for (const auto& t : rep.trials) {
    if (t.error.empty() && t.annihilation_time && *t.annihilation_time <= bound) ++within;
  }
  const double elapsed = seconds_since(start);
  return {tight_err <= 1e-3 && within == 100 && elapsed < 60.0,
          fmt("n=1 boundary pair |t - ln 1.25| = %.2e (tol 1e-3); n=2 %zu/100 annihilated by %.6f, "
              "latest %.6f, %.2f s",
              tight_err, within, bound, rep.max_completion_time, elapsed)};
}

Outcome hamiltonian_conservation() {
  std::mt19937_64 rng(77);
  FlowSpec spec;
  spec.kind = FlowKind::Hamiltonian;
  spec.max_time = 1.0;
  spec.output_stride = 0.01;
  double worst = 0.0;
  int halted = 0;
  for (int k = 0; k < 20; ++k) {
    const auto cfg = random_configuration(rng, 1 + k % 3, 1.5, 0.3);
    const auto trace = integrate(cfg, spec);
    if (trace.termination == Termination::HaltedAtCollision) ++halted;
    const double W0 = chordal_W(cfg);
    for (const auto& s : trace.samples) {
      if (s.config.size() != cfg.size()) continue;
      worst = std::max(worst, std::abs(chordal_W(s.config) - W0) / std::max(std::abs(W0), kPi));
    }
  }
  return {worst <= 1e-6 && halted == 0,
          fmt("20 configurations over unit time, max |dW| / max(|W0|, pi) = %.2e (tol 1e-6), %d halted", worst,
              halted)};
}

Outcome chart_chordal_identity() {
  std::mt19937_64 rng(99);
  double worst_W = 0.0, worst_grad = 0.0;
  const double h = 1e-6;
  for (int k = 0; k < 1000; ++k) {
    const auto cfg = random_configuration(rng, 1 + k % 4, 3.0, 1e-2);
    worst_W = std::max(worst_W, std::abs(renormalized_energy_chart(cfg) - chordal_W(cfg)));
    if (k % 10 != 0) continue;
    for (std::size_t i = 0; i < cfg.size(); ++i) {
      Vec2 fd;
      for (int c = 0; c < 2; ++c) {
        auto plus = cfg, minus = cfg;
        plus.vortices[i].position.p[c] += h;
        minus.vortices[i].position.p[c] -= h;
        fd[c] = (chordal_W(plus) - chordal_W(minus)) / (2.0 * h);
      }
      // Metric gradient: e^{-2f} times the Euclidean one, e^{-f} = (1 + r^2) / 2.
      const double ef = 0.5 * (1.0 + cfg.vortices[i].position.p.squaredNorm());
      const Vec2 expected = ef * ef * fd;
      const Vec2 g = grad_W(cfg, i);
      worst_grad = std::max(worst_grad, (g - expected).norm() / std::max(g.norm(), 1e-3));
    }
  }
  return {worst_W <= 1e-10 && worst_grad <= 1e-5,
          fmt("1000 configurations, max |W_chart - W_chordal| = %.2e (tol 1e-10); gradient vs finite "
              "differences max relative %.2e (tol 1e-5)",
              worst_W, worst_grad)};
}

Outcome gp_conservation() {
  const Grid g{6.0, 256};
  const double eps = 0.1;
  ComplexField u = build_well_prepared(pair({0.5, 0.1}, {-0.6, -0.2}), eps, g);
  const double E0 = energy(u).E;
  const double dt = recommended_explicit_dt(g, eps);
  for (int s = 0; s < 1000; ++s) gp_flow_step(u, dt);
  const double drift = std::abs(energy(u).E - E0) / E0;

  // Constant data: u(t) = c exp(-i (1 - c^2) t / eps^2).
  const Grid gc{1.0, 32};
  const double c = 0.6, eps_c = 0.5, T = 1.0;
  ComplexField v = make_constant_field(gc, eps_c, c);
  const int steps = static_cast<int>(std::ceil(T / recommended_explicit_dt(gc, eps_c)));
  for (int s = 0; s < steps; ++s) gp_flow_step(v, T / steps);
  const std::complex<double> expected = c * std::polar(1.0, -(1.0 - c * c) * T / (eps_c * eps_c));
  double phase_err = 0.0;
  for (const auto& z : v.values) phase_err = std::max(phase_err, std::abs(z - expected));
  return {drift <= 1e-6 && phase_err <= 1e-8,
          fmt("pair at eps=0.1, N=256, 1000 steps: relative E drift %.2e (tol 1e-6); constant data phase "
              "error %.2e (tol 1e-8)",
              drift, phase_err)};
}

Outcome weighted_identity() {
  const auto start = std::chrono::steady_clock::now();
  const double eps = 0.15, L = 3.0;
  const auto cfg = pair({0.9, 0.3}, {-0.5, -0.4});
  const double dt0 = recommended_explicit_dt(Grid{L, 128}, eps);
  std::vector<double> norms;
  for (int N : {128, 256, 512}) {
    ComplexField u = build_well_prepared(cfg, eps, Grid{L, N});
    const ComplexField before = u;
    const double dt = dt0 * std::pow(128.0 / N, 2);
    heat_flow_step(u, dt);
    const auto r = weighted_identity_residual(before, u, dt);
    norms.push_back(std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]));
  }
  const double r1 = norms[0] / norms[1], r2 = norms[1] / norms[2];
  const double elapsed = seconds_since(start);
  const auto in_range = [](double r) { return r >= 3.2 && r <= 4.8; };
  return {in_range(r1) && in_range(r2) && elapsed < 300.0,
          fmt("residual norms %.3e, %.3e, %.3e at N=128,256,512; ratios %.3f, %.3f (range [3.2, 4.8]), %.1f s",
              norms[0], norms[1], norms[2], r1, r2, elapsed)};
}

Outcome moment_identities() {
  const auto start = std::chrono::steady_clock::now();
  const double eps = 0.1;
  ComplexField u = build_well_prepared(pair({1.0, 0.0}, {-1.0, 0.0}), eps, Grid{6.0, 256});
  const RelaxReport rep = relax(u, 0.01, 1e-8, 60.0, 1.0);
  const EnergyReport& last = rep.energies.back();
  double final_ratio = 0.0;
  for (double m : last.moments) final_ratio = std::max(final_ratio, std::abs(m) / last.E);
  // Largest moment ratio while the pair is still present.
  double pair_ratio = 0.0;
  for (std::size_t k = 0; k < rep.energies.size(); ++k) {
    if (rep.vortex_counts[k] != 2) continue;
    for (double m : rep.energies[k].moments) pair_ratio = std::max(pair_ratio, std::abs(m) / rep.energies[k].E);
  }
  return {rep.converged && final_ratio <= 1e-4,
          fmt("relaxed to max|u_t| = %.2e at t = %.1f, final E = %.3e with %zu vortices, max |m_i|/E = %.2e "
              "(tol 1e-4); while the pair survived max |m_i|/E = %.2e; %.1f s",
              rep.rate, rep.time, last.E, rep.vortex_counts.back(), final_ratio, pair_ratio,
              seconds_since(start))};
}

Outcome motion_law() {
  const auto start = std::chrono::steady_clock::now();
  CompareSpec heat;
  heat.flow = PdeFlow::Heat;
  heat.epsilon = 0.05;
  heat.grid = Grid{6.0, 512};
  heat.horizon = 0.1;
  heat.samples = 4;
  heat.dt = 1.25e-3;
  const CompareReport hr = compare_to_ode(pair({0.5, 0.0}, {-0.5, 0.0}), heat);

  CompareSpec gp;
  gp.flow = PdeFlow::GrossPitaevskii;
  gp.epsilon = 0.1;
  gp.grid = Grid{3.0, 128};
  gp.horizon = 0.1;
  gp.samples = 4;
  const CompareReport gr = compare_to_ode(pair({0.5, 0.0}, {-0.5, 0.0}), gp);
  int agree = 0;
  double min_cos = 1.0;
  for (std::size_t i = 0; i < gr.start.size(); ++i) {
    const Vec2 origin = gr.start.vortices[i].position.p;
    const Vec2 tracked = gr.tracked.back().vortices[i].position.p - origin;
    const Vec2 predicted = gr.predicted.back().vortices[i].position.p - origin;
    const double cosine = tracked.dot(predicted) / (tracked.norm() * predicted.norm());
    min_cos = std::min(min_cos, cosine);
    if (cosine > 0.0) ++agree;
  }
  return {hr.max_deviation <= 0.05 && agree == static_cast<int>(gr.start.size()),
          fmt("heat eps=0.05 N=512: max chordal deviation %.4f (tol 0.05); GP eps=0.1: %d/%zu directions "
              "agree, min cosine %.3f; %.1f s",
              hr.max_deviation, agree, gr.start.size(), min_cos, seconds_since(start))};
}

Outcome jacobian_quantization() {
  double worst = 0.0;
  const Vec2 plus(0.5, 0.2), minus(-0.6, -0.1);
  for (double eps : {0.1, 0.05}) {
    const Grid g{3.0, eps < 0.1 ? 256 : 128};
    const ComplexField u = build_well_prepared(pair(plus, minus), eps, g);
    const auto cj = current_and_jacobian(u);
    worst = std::max(worst, std::abs(jacobian_disk_mass(u, cj, plus, 0.4) - kPi) / kPi);
    worst = std::max(worst, std::abs(jacobian_disk_mass(u, cj, minus, 0.4) + kPi) / kPi);
  }
  return {worst <= 0.05, fmt("eps in {0.1, 0.05}: max |mass - pi d| / pi = %.4f (tol 0.05)", worst)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "explicit two-vortex solution", explicit_pair_solution},
      {2, "exponential growth of V0", v0_growth},
      {3, "decay rate of the pair distance sum", pair_sum_decay},
      {4, "annihilation in caps", cap_annihilation},
      {5, "Hamiltonian energy conservation", hamiltonian_conservation},
      {6, "chart and chordal energy identity", chart_chordal_identity},
      {7, "GP energy conservation and phase rotation", gp_conservation},
      {8, "weighted energy identity convergence", weighted_identity},
      {9, "first moment identities after relaxation", moment_identities},
      {10, "motion law cross-validation", motion_law},
      {11, "Jacobian quantization", jacobian_quantization},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    if (!out.passed) ++failures;
    std::printf("%s criterion %d (%s): %s\n", out.passed ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
