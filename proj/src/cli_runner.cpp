#include "vortexflow/cli_runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include "vortexflow/error.hpp"

namespace vortexflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::PvRun:
      return "pv-run";
    case RunMode::PvAnnihilateScan:
      return "pv-annihilate-scan";
    case RunMode::GlEvolve:
      return "gl-evolve";
    case RunMode::GpEvolve:
      return "gp-evolve";
    case RunMode::Compare:
      return "compare";
  }
  return "unknown";
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "mode",         "output_dir",       "emit_plots",    "flow_kind",       "rk_rel_tol",
      "rk_abs_tol",   "collision_radius", "max_time",      "output_stride",   "hamiltonian_continuation",
      "vortices",     "vortices_sphere",  "n",             "s",               "seed",
      "trials",       "slack",            "epsilon",       "L",               "N",
      "dt",           "pde_time",         "sample_every",  "stepper",         "compare_flow",
      "horizon",      "samples",          "preparation_time"};
  return keys;
}

double number(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number()) config_error("'" + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) config_error("'" + key + "' must be finite");
  return x;
}

long long integer(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) config_error("'" + key + "' must be an integer");
  return v.get<long long>();
}

std::size_t positive_count(const json& j, const std::string& key) {
  const long long v = integer(j, key);
  if (v < 1) config_error("'" + key + "' must be at least 1");
  return static_cast<std::size_t>(v);
}

bool boolean(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_boolean()) config_error("'" + key + "' must be true or false");
  return v.get<bool>();
}

std::string text(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_string()) config_error("'" + key + "' must be a string");
  return v.get<std::string>();
}

int degree_entry(const json& row, std::size_t idx, const std::string& key) {
  if (!row.at(idx).is_number_integer()) config_error("'" + key + "' degrees must be integers");
  const long long d = row.at(idx).get<long long>();
  if (d != 1 && d != -1) config_error("'" + key + "' degrees must be +1 or -1");
  return static_cast<int>(d);
}

VortexConfiguration vortex_list(const json& j, const std::string& key, bool sphere) {
  const json& v = j.at(key);
  if (!v.is_array()) config_error("'" + key + "' must be an array");
  VortexConfiguration cfg;
  const std::size_t width = sphere ? 4 : 3;
  for (const json& row : v) {
    if (!row.is_array() || row.size() != width) {
      config_error("'" + key + "' entries must be arrays of " + std::to_string(width) + " numbers");
    }
    for (std::size_t i = 0; i + 1 < width; ++i) {
      if (!row[i].is_number()) config_error("'" + key + "' coordinates must be numbers");
    }
    const int d = degree_entry(row, width - 1, key);
    if (sphere) {
      const Vec3 x(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
      if (std::abs(x.norm() - 1.0) > 1e-9) config_error("'" + key + "' points must lie on the unit sphere");
      try {
        cfg.vortices.push_back({stereo_project(SpherePoint(x)), d});
      } catch (const Error& e) {
        config_error("'" + key + "': " + e.what());
      }
    } else {
      cfg.vortices.push_back({ChartPoint(row[0].get<double>(), row[1].get<double>()), d});
    }
  }
  return cfg;
}

RunMode parse_mode(const std::string& s) {
  for (RunMode m : {RunMode::PvRun, RunMode::PvAnnihilateScan, RunMode::GlEvolve, RunMode::GpEvolve,
                    RunMode::Compare}) {
    if (to_string(m) == s) return m;
  }
  config_error("unknown mode '" + s + "'");
}

void require(const json& j, std::initializer_list<const char*> keys, RunMode mode) {
  for (const char* k : keys) {
    if (!j.contains(k)) config_error("mode " + to_string(mode) + " requires '" + k + "'");
  }
}

// Checks are recorded as {passed, residual, tolerance}; booleans use
// residual 0 (pass) or 1 (fail) against tolerance 0.
struct Checks {
  json j = json::object();
  bool all = true;

  void add(const std::string& name, double residual, double tolerance) {
    const bool ok = std::isfinite(residual) ? residual <= tolerance : std::isnan(residual) ? true : false;
    j[name] = {{"passed", ok}, {"residual", finite_or_null(residual)}, {"tolerance", tolerance}};
    all = all && ok;
  }
  void flag(const std::string& name, bool ok) { add(name, ok ? 0.0 : 1.0, 0.0); }

  static json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
};

class Csv {
 public:
  Csv(const fs::path& path, std::initializer_list<std::string> header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    bool first = true;
    for (const auto& h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }

  Csv& operator<<(double x) { return cell(format_double(x)); }
  Csv& operator<<(int x) { return cell(std::to_string(x)); }
  Csv& operator<<(long x) { return cell(std::to_string(x)); }
  Csv& operator<<(std::size_t x) { return cell(std::to_string(x)); }
  Csv& operator<<(const std::string& x) { return cell(x); }
  void end() {
    out_ << '\n';
    first_ = true;
  }

 private:
  Csv& cell(const std::string& s) {
    out_ << (first_ ? "" : ",") << s;
    first_ = false;
    return *this;
  }
  std::ofstream out_;
  bool first_ = true;
};

// Minimal SVG plots: polylines, axes and a title.
struct Series {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

void write_line_plot(const fs::path& path, const std::string& title, const std::string& xlabel,
                     const std::vector<Series>& series) {
  const double W = 640, H = 400, m = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto sx = [&](double x) { return m + (W - 2 * m) * (x - x0) / (x1 - x0); };
  auto sy = [&](double y) { return H - m - (H - 2 * m) * (y - y0) / (y1 - y0); };
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  out << "<line x1=\"" << m << "\" y1=\"" << H - m << "\" x2=\"" << W - m << "\" y2=\"" << H - m
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << H - m
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << m << "\" y=\"" << H - m + 15 << "\">" << format_double(x0) << "</text>\n";
  out << "<text x=\"" << W - m << "\" y=\"" << H - m + 15 << "\" text-anchor=\"end\">"
      << format_double(x1) << "</text>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
  out << "<text x=\"5\" y=\"" << m << "\">" << format_double(y1) << "</text>\n";
  out << "<text x=\"5\" y=\"" << H - m << "\">" << format_double(y0) << "</text>\n";
  double legend_y = m;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      out << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << W - m << "\" y=\"" << legend_y << "\" text-anchor=\"end\" fill=\"" << s.color
        << "\">" << s.label << "</text>\n";
    legend_y += 15;
  }
  out << "</svg>\n";
}

// Orthographic view of the southern hemisphere from below: screen (x1, x2).
void write_sphere_plot(const fs::path& path, const std::string& title,
                       const std::vector<Series>& paths, const std::vector<Vec3>& markers) {
  const double S = 480, c = S / 2, R = S / 2 - 30;
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << S << "\" height=\"" << S << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << c << "\" y=\"18\" text-anchor=\"middle\">" << title << "</text>\n";
  out << "<circle cx=\"" << c << "\" cy=\"" << c << "\" r=\"" << R << "\" fill=\"none\" stroke=\"gray\"/>\n";
  for (const auto& p : paths) {
    out << "<polyline fill=\"none\" stroke=\"" << p.color << "\" points=\"";
    for (std::size_t i = 0; i < p.x.size(); ++i) out << c + R * p.x[i] << ',' << c - R * p.y[i] << ' ';
    out << "\"/>\n";
  }
  for (const Vec3& m : markers) {
    out << "<circle cx=\"" << c + R * m.x() << "\" cy=\"" << c - R * m.y()
        << "\" r=\"4\" fill=\"black\"/>\n";
  }
  out << "</svg>\n";
}

const char* degree_color(int d) { return d > 0 ? "crimson" : "royalblue"; }

json vortex_json(const VortexConfiguration& cfg) {
  json a = json::array();
  for (const auto& v : cfg.vortices) a.push_back({v.position.p.x(), v.position.p.y(), v.degree});
  return a;
}

json run_pv(const RunConfig& cfg, const fs::path& out, Checks& checks) {
  const TrajectoryTrace trace = integrate(cfg.vortices, cfg.flow);
  const DiagnosticsReport diag = diagnostics(trace);

  Csv traj(out / "trajectory.csv", {"t", "segment", "vortex_id", "degree", "x1", "x2", "x3", "p1", "p2",
                                    "W", "V0_norm", "pair_sum"});
  for (const auto& s : trace.samples) {
    for (std::size_t i = 0; i < s.config.size(); ++i) {
      const auto& v = s.config.vortices[i];
      const Vec3 P = stereo_unproject(v.position).x;
      traj << s.time << s.segment << s.ids[i] << v.degree << P.x() << P.y() << P.z() << v.position.p.x()
           << v.position.p.y() << s.W << s.V0.norm() << s.pair_sum;
      traj.end();
    }
  }
  Csv col(out / "collisions.csv",
          {"t", "x1", "x2", "x3", "participant_ids", "net_degree", "action", "applied"});
  for (const auto& ev : trace.collisions) {
    std::string ids;
    for (std::size_t i = 0; i < ev.participant_indices.size(); ++i) {
      ids += (i ? ";" : "") + std::to_string(ev.participant_indices[i]);
    }
    col << ev.time << ev.location.x.x() << ev.location.x.y() << ev.location.x.z() << ids << ev.net_degree
        << to_string(ev.action) << std::string(ev.applied ? "true" : "false");
    col.end();
  }

  if (cfg.flow.kind == FlowKind::Gradient) {
    checks.add("v0_growth", diag.max_r1_rel, 1e-6);
    checks.add("v0_direction", diag.max_r2, 1e-6);
    // d/dt pair_sum = -2|V0|^2 grows like e^{2t}, so the centered difference
    // over spacing h carries a truncation error of about (2/3) h^2 |rate|.
    double max_rate = 0.0;
    for (const auto& s : trace.samples) max_rate = std::max(max_rate, 2.0 * s.V0.squaredNorm());
    const double h = cfg.flow.output_stride;
    checks.add("pair_sum_decay_rate", diag.max_r3, 1e-5 + h * h * max_rate);
    checks.add("energy_monotone", diag.max_W_increase / diag.W_scale, 1e-9);
    checks.flag("collision_degree_bound", diag.collision_bound_ok);
  } else {
    checks.add("energy_conservation", diag.max_abs_dW / diag.W_scale, 1e-6);
  }
  checks.flag("degree_bookkeeping", diag.degree_bookkeeping_ok);

  if (cfg.emit_plots) {
    std::map<std::size_t, Series> paths;
    Series W{"W", "black", {}, {}};
    for (const auto& s : trace.samples) {
      for (std::size_t i = 0; i < s.config.size(); ++i) {
        Series& p = paths[s.ids[i]];
        p.color = degree_color(s.config.vortices[i].degree);
        const Vec3 P = stereo_unproject(s.config.vortices[i].position).x;
        p.x.push_back(P.x());
        p.y.push_back(P.y());
      }
      if (!s.config.empty()) {
        W.x.push_back(s.time);
        W.y.push_back(s.W);
      }
    }
    std::vector<Series> all;
    for (auto& [id, p] : paths) all.push_back(p);
    std::vector<Vec3> marks;
    for (const auto& ev : trace.collisions) marks.push_back(ev.location.x);
    write_sphere_plot(out / "trajectory.svg", "vortex paths (view from the south pole)", all, marks);
    write_line_plot(out / "energy.svg", "renormalized energy", "t", {W});
  }

  const auto t_ann = trace.annihilation_time();
  return {{"flow_kind", to_string(cfg.flow.kind)},
          {"initial_vortex_count", cfg.vortices.size()},
          {"final_vortex_count", trace.samples.back().config.size()},
          {"termination", to_string(trace.termination)},
          {"annihilation_time", t_ann ? json(*t_ann) : json(nullptr)},
          {"collisions", trace.collisions.size()},
          {"accepted_steps", trace.accepted_steps},
          {"rejected_steps", trace.rejected_steps},
          {"max_r1", Checks::finite_or_null(diag.max_r1)},
          {"max_r1_rel", Checks::finite_or_null(diag.max_r1_rel)},
          {"max_r2", Checks::finite_or_null(diag.max_r2)},
          {"max_r3", Checks::finite_or_null(diag.max_r3)},
          {"max_W_increase", diag.max_W_increase},
          {"max_abs_dW", diag.max_abs_dW},
          {"W_scale", diag.W_scale}};
}

json run_scan(const RunConfig& cfg, const fs::path& out, Checks& checks) {
  const ScanReport rep = annihilation_scan(cfg.n, cfg.s, cfg.trials, cfg.seed, cfg.flow, cfg.slack);
  Csv csv(out / "scan.csv", {"trial", "seed", "annihilation_time", "collisions", "within_bound", "error"});
  std::size_t failed = 0;
  for (std::size_t k = 0; k < rep.trials.size(); ++k) {
    const auto& t = rep.trials[k];
    if (!t.error.empty()) ++failed;
    csv << k << std::to_string(t.seed)
        << (t.annihilation_time ? format_double(*t.annihilation_time) : std::string("")) << t.collisions
        << std::string(t.within_bound ? "true" : "false") << t.error;
    csv.end();
  }
  checks.add("annihilated_within_bound", static_cast<double>(rep.trials.size() - rep.completed_within_bound),
             0.0);
  if (cfg.emit_plots) {
    Series s{"annihilation time", "black", {}, {}};
    Series bound{"bound", "crimson", {}, {}};
    for (std::size_t k = 0; k < rep.trials.size(); ++k) {
      s.x.push_back(static_cast<double>(k));
      s.y.push_back(rep.trials[k].annihilation_time.value_or(std::nan("")));
      bound.x.push_back(static_cast<double>(k));
      bound.y.push_back(rep.time_bound + rep.slack);
    }
    write_line_plot(out / "scan.svg", "annihilation times", "trial", {s, bound});
  }
  return {{"n", rep.n},
          {"s", rep.s},
          {"kappa", rep.kappa},
          {"time_bound", rep.time_bound},
          {"slack", rep.slack},
          {"trials", rep.trials.size()},
          {"failed_trials", failed},
          {"completed_within_bound", rep.completed_within_bound},
          {"fraction_within_bound", rep.fraction_within_bound},
          {"max_completion_time", rep.max_completion_time}};
}

double max_modulus(const ComplexField& u) {
  double m = 0.0;
  for (const Complex& z : u.values) m = std::max(m, std::abs(z));
  return m;
}

json run_field(const RunConfig& cfg, const fs::path& out, Checks& checks) {
  const bool gp = cfg.mode == RunMode::GpEvolve;
  ComplexField u = build_well_prepared(cfg.vortices, cfg.epsilon, cfg.grid);
  const HeatStepper stepper = gp ? HeatStepper::Explicit : cfg.stepper;
  double dt = cfg.dt;
  if (dt <= 0.0) {
    dt = (!gp && stepper == HeatStepper::Implicit) ? 0.5 * cfg.epsilon * cfg.epsilon
                                                   : recommended_explicit_dt(cfg.grid, cfg.epsilon);
  }
  FieldEvolver evolver(gp ? PdeFlow::GrossPitaevskii : PdeFlow::Heat, stepper, dt);
  const double every = cfg.sample_every > 0.0 ? cfg.sample_every : cfg.pde_time / 100.0;
  const auto samples = static_cast<std::size_t>(std::max(1.0, std::ceil(cfg.pde_time / every - 1e-9)));

  Csv energy_csv(out / "energy.csv", {"t", "E", "F1", "F2", "F3", "m1", "m2", "m3", "n_vortices"});
  Csv vortex_csv(out / "vortices.csv", {"t", "index", "degree", "p1", "p2"});
  Series E_series{"E", "black", {}, {}};
  std::vector<Series> F_series = {{"F1", "crimson", {}, {}}, {"F2", "seagreen", {}, {}},
                                  {"F3", "royalblue", {}, {}}};
  double E0 = 0.0, E_prev = 0.0, max_increase = 0.0, max_drift = 0.0, max_mod = max_modulus(u);
  std::optional<double> annihilation;
  std::size_t count = 0;
  for (std::size_t s = 0; s <= samples; ++s) {
    if (s > 0) {
      const double t = std::min(cfg.pde_time, every * static_cast<double>(s));
      evolver.advance(u, t - u.time);
      max_mod = std::max(max_mod, max_modulus(u));
    }
    const EnergyReport e = energy(u);
    const VortexConfiguration found = locate_vortices(u);
    if (s == 0) {
      E0 = e.E;
    } else {
      max_increase = std::max(max_increase, e.E - E_prev);
      max_drift = std::max(max_drift, std::abs(e.E - E0) / std::max(E0, 1e-300));
      if (count > 0 && found.empty() && !annihilation) annihilation = u.time;
    }
    E_prev = e.E;
    count = found.size();
    energy_csv << u.time << e.E << e.F[0] << e.F[1] << e.F[2] << e.moments[0] << e.moments[1]
               << e.moments[2] << found.size();
    energy_csv.end();
    for (std::size_t i = 0; i < found.size(); ++i) {
      vortex_csv << u.time << i << found.vortices[i].degree << found.vortices[i].position.p.x()
                 << found.vortices[i].position.p.y();
      vortex_csv.end();
    }
    E_series.x.push_back(u.time);
    E_series.y.push_back(e.E);
    for (std::size_t i = 0; i < 3; ++i) {
      F_series[i].x.push_back(u.time);
      F_series[i].y.push_back(e.F[i]);
    }
  }
  {
    Csv field(out / "field_final.csv", {"p1", "p2", "re_u", "im_u"});
    for (int j = 0; j <= u.grid.N; ++j) {
      for (int k = 0; k <= u.grid.N; ++k) {
        field << u.grid.coord(k) << u.grid.coord(j) << u.at(k, j).real() << u.at(k, j).imag();
        field.end();
      }
    }
  }
  if (gp) {
    checks.add("energy_conservation", E0 > 0.0 ? max_drift : std::abs(E_prev), 1e-6);
  } else {
    checks.add("energy_monotone", max_increase, 1e-10 * std::max(1.0, E0));
    checks.add("modulus_bound", std::max(0.0, max_mod - 1.0), 1e-6);
  }
  if (cfg.emit_plots) {
    std::vector<Series> all = {E_series};
    all.insert(all.end(), F_series.begin(), F_series.end());
    write_line_plot(out / "energy.svg", gp ? "GP energies" : "heat-flow energies", "t", all);
  }
  return {{"epsilon", cfg.epsilon},
          {"L", cfg.grid.L},
          {"N", cfg.grid.N},
          {"dt", dt},
          {"steps", evolver.steps()},
          {"stepper", gp ? "strang" : (stepper == HeatStepper::Implicit ? "implicit" : "explicit")},
          {"initial_vortex_count", cfg.vortices.size()},
          {"final_vortex_count", count},
          {"annihilation_time", annihilation ? json(*annihilation) : json(nullptr)},
          {"initial_energy", E0},
          {"final_energy", E_prev},
          {"max_energy_increase", max_increase},
          {"max_relative_energy_drift", max_drift},
          {"max_modulus", max_mod}};
}

json run_compare(const RunConfig& cfg, const fs::path& out, Checks& checks) {
  CompareSpec spec;
  spec.flow = cfg.compare_flow;
  spec.stepper = cfg.stepper;
  spec.epsilon = cfg.epsilon;
  spec.grid = cfg.grid;
  spec.horizon = cfg.horizon;
  spec.samples = cfg.samples;
  spec.dt = cfg.dt;
  spec.preparation_time = cfg.preparation_time;
  const CompareReport rep = compare_to_ode(cfg.vortices, spec);

  Csv csv(out / "comparison.csv", {"t_ode", "t_pde", "vortex_id", "degree", "tracked_p1", "tracked_p2",
                                   "predicted_p1", "predicted_p2", "chordal_deviation"});
  std::vector<Series> paths;
  for (std::size_t i = 0; i < rep.start.size(); ++i) {
    const std::string color = degree_color(rep.start.vortices[i].degree);
    paths.push_back({"tracked", color, {}, {}});
    paths.push_back({"predicted", "gray", {}, {}});
    const Vec3 P0 = stereo_unproject(rep.start.vortices[i].position).x;
    paths[2 * i].x.push_back(P0.x());
    paths[2 * i].y.push_back(P0.y());
    paths[2 * i + 1].x.push_back(P0.x());
    paths[2 * i + 1].y.push_back(P0.y());
  }
  std::size_t wrong_direction = 0;
  for (std::size_t s = 0; s < rep.times.size(); ++s) {
    for (std::size_t i = 0; i < rep.start.size(); ++i) {
      const auto& tv = rep.tracked[s].vortices[i];
      const auto& pv = rep.predicted[s].vortices[i];
      const double dev = chordal_distance(stereo_unproject(tv.position), stereo_unproject(pv.position));
      csv << rep.times[s] << rep.time_scale * rep.times[s] << i << tv.degree << tv.position.p.x()
          << tv.position.p.y() << pv.position.p.x() << pv.position.p.y() << dev;
      csv.end();
      const Vec3 T = stereo_unproject(tv.position).x;
      const Vec3 P = stereo_unproject(pv.position).x;
      paths[2 * i].x.push_back(T.x());
      paths[2 * i].y.push_back(T.y());
      paths[2 * i + 1].x.push_back(P.x());
      paths[2 * i + 1].y.push_back(P.y());
    }
  }
  for (std::size_t i = 0; i < rep.start.size() && !rep.times.empty(); ++i) {
    const Vec2 origin = rep.start.vortices[i].position.p;
    const Vec2 tracked = rep.tracked.back().vortices[i].position.p - origin;
    const Vec2 predicted = rep.predicted.back().vortices[i].position.p - origin;
    if (tracked.dot(predicted) <= 0.0) ++wrong_direction;
  }
  if (cfg.compare_flow == PdeFlow::Heat) {
    checks.add("motion_law_deviation", rep.max_deviation, 0.05);
  } else {
    checks.add("motion_direction", static_cast<double>(wrong_direction), 0.0);
  }
  if (cfg.emit_plots) {
    write_sphere_plot(out / "trajectory.svg", "tracked (color) and predicted (gray) paths", paths, {});
  }
  return {{"compare_flow", cfg.compare_flow == PdeFlow::Heat ? "heat" : "gp"},
          {"epsilon", cfg.epsilon},
          {"time_scale", rep.time_scale},
          {"max_deviation", rep.max_deviation},
          {"start", vortex_json(rep.start)},
          {"final_tracked", vortex_json(rep.tracked.back())},
          {"final_predicted", vortex_json(rep.predicted.back())},
          {"wrong_direction_count", wrong_direction}};
}

}  // namespace

RunConfig parse_config(const json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) config_error("unknown key '" + key + "'");
    if (value.is_object()) config_error("'" + key + "' must not be nested");
  }
  if (!j.contains("mode")) config_error("missing 'mode'");
  RunConfig c;
  c.mode = parse_mode(text(j, "mode"));
  if (j.contains("output_dir")) c.output_dir = text(j, "output_dir");
  if (j.contains("emit_plots")) c.emit_plots = boolean(j, "emit_plots");

  if (j.contains("flow_kind")) {
    const std::string k = text(j, "flow_kind");
    try {
      c.flow.kind = flow_kind_from_string(k);
    } catch (const Error&) {
      config_error("unknown flow_kind '" + k + "'");
    }
  }
  if (j.contains("rk_rel_tol")) c.flow.rk_rel_tol = number(j, "rk_rel_tol");
  if (j.contains("rk_abs_tol")) c.flow.rk_abs_tol = number(j, "rk_abs_tol");
  if (j.contains("collision_radius")) c.flow.collision_radius = number(j, "collision_radius");
  if (j.contains("max_time")) c.flow.max_time = number(j, "max_time");
  if (j.contains("output_stride")) c.flow.output_stride = number(j, "output_stride");
  if (j.contains("hamiltonian_continuation")) {
    c.flow.hamiltonian_continuation = boolean(j, "hamiltonian_continuation");
  }
  try {
    c.flow.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }

  if (j.contains("vortices") && j.contains("vortices_sphere")) {
    config_error("give either 'vortices' or 'vortices_sphere', not both");
  }
  if (j.contains("vortices")) c.vortices = vortex_list(j, "vortices", false);
  if (j.contains("vortices_sphere")) c.vortices = vortex_list(j, "vortices_sphere", true);
  if (!c.vortices.empty()) {
    try {
      validate_degrees(c.vortices);
    } catch (const Error& e) {
      config_error(e.what());
    }
  }

  if (j.contains("n")) c.n = positive_count(j, "n");
  if (j.contains("s")) c.s = number(j, "s");
  if (j.contains("seed")) {
    const long long seed = integer(j, "seed");
    if (seed < 0) config_error("'seed' must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
  }
  if (j.contains("trials")) c.trials = positive_count(j, "trials");
  if (j.contains("slack")) {
    c.slack = number(j, "slack");
    if (*c.slack < 0.0) config_error("'slack' must be non-negative");
  }
  if (c.s < 0.0 || c.s >= 1.0) config_error("'s' must lie in [0, 1)");

  if (j.contains("epsilon")) c.epsilon = number(j, "epsilon");
  if (!(c.epsilon > 0.0 && c.epsilon <= 0.5)) config_error("'epsilon' must lie in (0, 0.5]");
  if (j.contains("L")) c.grid.L = number(j, "L");
  if (j.contains("N")) c.grid.N = static_cast<int>(positive_count(j, "N"));
  try {
    c.grid.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (j.contains("dt")) c.dt = number(j, "dt");
  if (c.dt < 0.0) config_error("'dt' must be non-negative");
  if (j.contains("pde_time")) c.pde_time = number(j, "pde_time");
  if (j.contains("sample_every")) c.sample_every = number(j, "sample_every");
  if (c.sample_every < 0.0) config_error("'sample_every' must be non-negative");
  if (j.contains("stepper")) {
    const std::string s = text(j, "stepper");
    if (s == "implicit") {
      c.stepper = HeatStepper::Implicit;
    } else if (s == "explicit") {
      c.stepper = HeatStepper::Explicit;
    } else {
      config_error("'stepper' must be \"implicit\" or \"explicit\"");
    }
  }
  if (j.contains("compare_flow")) {
    const std::string s = text(j, "compare_flow");
    if (s == "heat") {
      c.compare_flow = PdeFlow::Heat;
    } else if (s == "gp") {
      c.compare_flow = PdeFlow::GrossPitaevskii;
    } else {
      config_error("'compare_flow' must be \"heat\" or \"gp\"");
    }
  }
  if (j.contains("horizon")) c.horizon = number(j, "horizon");
  if (!(c.horizon > 0.0)) config_error("'horizon' must be positive");
  if (j.contains("samples")) c.samples = positive_count(j, "samples");
  if (j.contains("preparation_time")) c.preparation_time = number(j, "preparation_time");

  switch (c.mode) {
    case RunMode::PvRun:
      if (!j.contains("vortices") && !j.contains("vortices_sphere")) {
        config_error("mode pv-run requires 'vortices' or 'vortices_sphere'");
      }
      break;
    case RunMode::PvAnnihilateScan:
      require(j, {"n", "s", "trials"}, c.mode);
      break;
    case RunMode::GlEvolve:
    case RunMode::GpEvolve:
      require(j, {"epsilon", "pde_time"}, c.mode);
      if (!(c.pde_time > 0.0)) config_error("'pde_time' must be positive");
      break;
    case RunMode::Compare:
      require(j, {"vortices", "epsilon", "horizon"}, c.mode);
      break;
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_error("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

RunOutcome execute(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Checks checks;
  json body;
  switch (cfg.mode) {
    case RunMode::PvRun:
      body = run_pv(cfg, out_dir, checks);
      break;
    case RunMode::PvAnnihilateScan:
      body = run_scan(cfg, out_dir, checks);
      break;
    case RunMode::GlEvolve:
    case RunMode::GpEvolve:
      body = run_field(cfg, out_dir, checks);
      break;
    case RunMode::Compare:
      body = run_compare(cfg, out_dir, checks);
      break;
  }
  RunOutcome outcome;
  outcome.summary = {{"mode", to_string(cfg.mode)}};
  outcome.summary.update(body);
  outcome.summary["checks"] = checks.j;
  outcome.summary["all_checks_passed"] = checks.all;
  std::ofstream(out_dir / "summary.json") << outcome.summary.dump(2) << '\n';
  outcome.exit_code = checks.all ? kExitSuccess : kExitInvariantViolation;
  return outcome;
}

int run(const fs::path& config_path, const RunOptions& options, std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const Error& e) {
    err << e.what() << '\n';
    return kExitConfigError;
  }
  const fs::path out = options.output_dir ? fs::path(*options.output_dir) : fs::path(cfg.output_dir);
  try {
    const RunOutcome outcome = execute(cfg, out);
    if (outcome.exit_code == kExitInvariantViolation) {
      for (const auto& [name, check] : outcome.summary["checks"].items()) {
        if (!check["passed"].get<bool>()) err << "invariant check failed: " << name << '\n';
      }
      return options.strict ? kExitInvariantViolation : kExitSuccess;
    }
    return kExitSuccess;
  } catch (const Error& e) {
    err << to_string(cfg.mode) << ": " << e.what() << '\n';
    return e.kind() == ErrorKind::ConfigError ? kExitConfigError : kExitNumericalFailure;
  } catch (const std::exception& e) {
    err << to_string(cfg.mode) << ": " << e.what() << '\n';
    return kExitNumericalFailure;
  }
}

}  // namespace vortexflow
