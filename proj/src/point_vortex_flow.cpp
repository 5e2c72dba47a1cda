#include "vortexflow/point_vortex_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "vortexflow/dopri5.hpp"
#include "vortexflow/error.hpp"
#include "vortexflow/parallel.hpp"

namespace vortexflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Vortices with x3 above this have effectively reached the north pole.
constexpr double kPoleEscapeX3 = 1.0 - 1e-6;
constexpr double kEventTimeTolerance = 1e-10;

// Gradient-flow chart velocity of vortex i, written out as the planar system
// (1 + r^2)^2 / 2 * (p / (1 + r^2) + d_i sum_j d_j (p_i - p_j) / |p_i - p_j|^2).
// Returns false if two positions coincide.
bool gradient_velocity(const std::vector<Vortex>& v, std::size_t i, Vec2& out) {
  const Vec2& p = v[i].position.p;
  const double q = 1.0 + p.squaredNorm();
  Vec2 interaction = Vec2::Zero();
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (j == i) continue;
    const Vec2 diff = p - v[j].position.p;
    const double r2 = diff.squaredNorm();
    if (!(r2 > kCoincidenceThreshold * kCoincidenceThreshold)) return false;
    interaction += v[j].degree * diff / r2;
  }
  out = 0.5 * q * q * (p / q + v[i].degree * interaction);
  return true;
}

bool velocities(const std::vector<Vortex>& v, FlowKind kind, std::vector<Vec2>& out) {
  out.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!gradient_velocity(v, i, out[i])) return false;
    // d_i pdot = J(-(1/pi) grad_g W) and d_i^{-1} = d_i.
    if (kind == FlowKind::Hamiltonian) out[i] = v[i].degree * perp(out[i]);
  }
  return true;
}

State pack(const VortexConfiguration& cfg) {
  State y(2 * cfg.size());
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    y[2 * i] = cfg.vortices[i].position.p.x();
    y[2 * i + 1] = cfg.vortices[i].position.p.y();
  }
  return y;
}

void unpack(const State& y, VortexConfiguration& cfg) {
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    cfg.vortices[i].position.p = Vec2(y[2 * i], y[2 * i + 1]);
  }
}

void check_pole(const VortexConfiguration& cfg, double t) {
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const double x3 = stereo_unproject(cfg.vortices[i].position).x.z();
    if (!(x3 < kPoleEscapeX3)) {
      std::ostringstream msg;
      msg << "vortex " << i << " reached x3 = " << x3 << " at t = " << t;
      throw Error(ErrorKind::PoleEscape, msg.str());
    }
  }
}

TraceSample make_sample(double t, std::size_t segment, const VortexConfiguration& cfg,
                        const std::vector<std::size_t>& ids) {
  TraceSample s;
  s.time = t;
  s.segment = segment;
  s.config = cfg;
  s.config.time = t;
  s.ids = ids;
  s.W = cfg.size() >= 2 ? renormalized_energy_chart(cfg) : 0.0;
  s.V0 = vortex_sum(cfg);
  s.pair_sum = pair_distance_sum(cfg);
  return s;
}

// Connected components of the graph "chordal distance <= radius".
std::vector<std::vector<std::size_t>> clusters(const std::vector<SpherePoint>& pts,
                                               double radius) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (chordal_distance(pts[i], pts[j]) <= radius) parent[find(i)] = find(j);
    }
  }
  std::vector<std::vector<std::size_t>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& g : groups) {
    if (g.size() >= 2) out.push_back(std::move(g));
  }
  return out;
}

SpherePoint centroid(const std::vector<Vortex>& cluster) {
  Vec3 sum = Vec3::Zero();
  for (const auto& v : cluster) sum += stereo_unproject(v.position).x;
  if (sum.norm() == 0.0) {
    throw Error(ErrorKind::DegreeAssumptionViolated, "cluster centroid is the sphere center");
  }
  return SpherePoint(sum.normalized());
}

}  // namespace

std::string to_string(FlowKind kind) {
  return kind == FlowKind::Gradient ? "gradient" : "hamiltonian";
}

FlowKind flow_kind_from_string(const std::string& s) {
  if (s == "gradient") return FlowKind::Gradient;
  if (s == "hamiltonian") return FlowKind::Hamiltonian;
  throw Error(ErrorKind::InvalidArgument, "unknown flow kind '" + s + "'");
}

std::string to_string(CollisionAction action) {
  return action == CollisionAction::Annihilate ? "annihilate" : "merge";
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxTime: return "max_time";
    case Termination::AllAnnihilated: return "all_annihilated";
    case Termination::HaltedAtCollision: return "halted_at_collision";
  }
  return "unknown";
}

void FlowSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
  if (!(rk_rel_tol > 0.0 && rk_rel_tol <= 1e-2)) fail("rk_rel_tol must lie in (0, 1e-2]");
  if (!(rk_abs_tol > 0.0 && rk_abs_tol <= 1e-2)) fail("rk_abs_tol must lie in (0, 1e-2]");
  if (!(collision_radius > 0.0 && collision_radius <= 0.1)) {
    fail("collision_radius must lie in (0, 0.1]");
  }
  if (!(max_time >= 0.0) || !std::isfinite(max_time)) fail("max_time must be finite and >= 0");
  if (!(output_stride > 0.0)) fail("output_stride must be positive");
}

std::optional<double> TrajectoryTrace::annihilation_time() const {
  if (termination != Termination::AllAnnihilated || collisions.empty()) return std::nullopt;
  return collisions.back().time;
}

Vec3 vortex_sum(const VortexConfiguration& cfg) {
  Vec3 sum = Vec3::Zero();
  for (const auto& v : cfg.vortices) sum += stereo_unproject(v.position).x;
  return sum;
}

double pair_distance_sum(const VortexConfiguration& cfg) {
  const auto pts = cfg.sphere_points();
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) sum += (pts[i].x - pts[j].x).squaredNorm();
  }
  return sum;
}

double min_chordal_distance(const VortexConfiguration& cfg) {
  const auto pts = cfg.sphere_points();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      best = std::min(best, chordal_distance(pts[i], pts[j]));
    }
  }
  return best;
}

std::vector<Vec2> flow_rhs(const VortexConfiguration& cfg, FlowKind kind,
                           double near_collision_distance) {
  const double dmin = min_chordal_distance(cfg);
  if (dmin < near_collision_distance) {
    std::ostringstream msg;
    msg << "vortices are " << dmin << " apart (threshold " << near_collision_distance << ")";
    throw Error(ErrorKind::NearCollision, msg.str());
  }
  std::vector<Vec2> out;
  if (!velocities(cfg.vortices, kind, out)) {
    throw Error(ErrorKind::NearCollision, "coincident vortices");
  }
  return out;
}

std::optional<Vortex> resolve_collision(const std::vector<Vortex>& cluster) {
  if (cluster.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "a collision needs at least two vortices");
  }
  int net = 0;
  for (const auto& v : cluster) net += v.degree;
  if (net < -1 || net > 1) {
    std::ostringstream msg;
    msg << "colliding cluster of " << cluster.size() << " vortices has net degree " << net;
    throw Error(ErrorKind::DegreeAssumptionViolated, msg.str());
  }
  if (net == 0) return std::nullopt;
  return Vortex{stereo_project(centroid(cluster)), net};
}

TrajectoryTrace integrate(const VortexConfiguration& cfg0, const FlowSpec& spec) {
  spec.validate();
  validate_degrees(cfg0);
  check_pole(cfg0, cfg0.time);
  if (min_chordal_distance(cfg0) <= spec.collision_radius) {
    throw Error(ErrorKind::NearCollision, "initial vortices are within the collision radius");
  }

  TrajectoryTrace trace;
  trace.kind = spec.kind;
  VortexConfiguration cfg = cfg0;
  std::vector<std::size_t> ids(cfg.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::size_t next_id = cfg.size();
  std::size_t segment = 0;

  const double t_start = cfg0.time;
  const double t_end = t_start + spec.max_time;
  double t = t_start;
  long stride_index = 1;
  auto stride_time = [&](long k) { return t_start + static_cast<double>(k) * spec.output_stride; };

  trace.samples.push_back(make_sample(t, segment, cfg, ids));

  const FlowKind kind = spec.kind;
  std::vector<Vortex> scratch;
  std::vector<Vec2> vel;
  OdeRhs rhs = [&](double, const State& y, State& dydt) {
    scratch = cfg.vortices;
    for (std::size_t i = 0; i < scratch.size(); ++i) {
      scratch[i].position.p = Vec2(y[2 * i], y[2 * i + 1]);
    }
    if (!velocities(scratch, kind, vel)) return false;
    dydt.resize(y.size());
    for (std::size_t i = 0; i < vel.size(); ++i) {
      dydt[2 * i] = vel[i].x();
      dydt[2 * i + 1] = vel[i].y();
    }
    return true;
  };
  DormandPrince45 solver(rhs, spec.rk_rel_tol, spec.rk_abs_tol);

  VortexConfiguration probe;
  auto distance_at = [&](const State& y) {
    probe.vortices = cfg.vortices;
    unpack(y, probe);
    return min_chordal_distance(probe);
  };
  auto emit_until = [&](double limit, bool inclusive) {
    while (true) {
      const double ts = stride_time(stride_index);
      if (ts > t_end || (inclusive ? ts > limit : ts >= limit)) break;
      probe.vortices = cfg.vortices;
      unpack(solver.interpolate(ts), probe);
      trace.samples.push_back(make_sample(ts, segment, probe, ids));
      ++stride_index;
    }
  };

  while (true) {
    if (cfg.empty()) {
      trace.termination = Termination::AllAnnihilated;
      break;
    }
    if (t >= t_end) {
      trace.termination = Termination::MaxTime;
      break;
    }
    solver.reset(t, pack(cfg), std::min(1e-4, t_end - t));

    bool collided = false;
    while (!collided) {
      if (!solver.step(t_end)) {
        std::ostringstream msg;
        msg << "step size underflow at t = " << solver.t();
        throw Error(ErrorKind::NearCollision, msg.str());
      }
      const double t0 = solver.last_t0();
      const double t1 = solver.t();

      // Look for the first crossing of the collision radius on this step.
      double lo = t0;
      std::optional<double> hi;
      for (double theta : {0.25, 0.5, 0.75, 1.0}) {
        const double ts = t0 + theta * (t1 - t0);
        if (distance_at(theta == 1.0 ? solver.y() : solver.interpolate(ts)) <
            spec.collision_radius) {
          hi = ts;
          break;
        }
        lo = ts;
      }

      if (!hi) {
        emit_until(t1, true);
        unpack(solver.y(), cfg);
        t = t1;
        check_pole(cfg, t);
        if (t >= t_end) break;
        continue;
      }

      double upper = *hi;
      while (upper - lo > kEventTimeTolerance) {
        const double mid = 0.5 * (lo + upper);
        if (distance_at(solver.interpolate(mid)) < spec.collision_radius) upper = mid;
        else lo = mid;
      }
      emit_until(upper, false);
      unpack(solver.interpolate(upper), cfg);
      t = upper;
      check_pole(cfg, t);
      collided = true;
    }
    trace.accepted_steps = solver.accepted();
    trace.rejected_steps = solver.rejected();

    if (!collided) {
      if (trace.samples.back().time < t_end) {
        trace.samples.push_back(make_sample(t_end, segment, cfg, ids));
      }
      trace.termination = Termination::MaxTime;
      break;
    }

    // Resolve every cluster at this instant; a merged vortex may land inside
    // the radius of another one, so repeat until the configuration is clear.
    const bool apply = kind == FlowKind::Gradient || spec.hamiltonian_continuation;
    while (true) {
      const auto groups = clusters(cfg.sphere_points(), spec.collision_radius);
      if (groups.empty()) break;
      std::vector<bool> removed(cfg.size(), false);
      std::vector<Vortex> added;
      std::vector<std::size_t> added_ids;
      for (const auto& g : groups) {
        std::vector<Vortex> members;
        CollisionEvent ev;
        ev.time = t;
        for (std::size_t idx : g) {
          members.push_back(cfg.vortices[idx]);
          ev.participant_indices.push_back(ids[idx]);
          ev.net_degree += cfg.vortices[idx].degree;
          (cfg.vortices[idx].degree > 0 ? ev.plus_count : ev.minus_count) += 1;
          removed[idx] = true;
        }
        ev.location = centroid(members);
        ev.action = ev.net_degree == 0 ? CollisionAction::Annihilate : CollisionAction::Merge;
        ev.applied = apply;
        trace.collisions.push_back(ev);
        if (!apply) continue;
        if (auto merged = resolve_collision(members)) {
          added.push_back(*merged);
          added_ids.push_back(next_id++);
        }
      }
      if (!apply) break;
      VortexConfiguration next;
      std::vector<std::size_t> next_ids;
      for (std::size_t i = 0; i < cfg.size(); ++i) {
        if (removed[i]) continue;
        next.vortices.push_back(cfg.vortices[i]);
        next_ids.push_back(ids[i]);
      }
      for (std::size_t i = 0; i < added.size(); ++i) {
        next.vortices.push_back(added[i]);
        next_ids.push_back(added_ids[i]);
      }
      cfg.vortices = std::move(next.vortices);
      ids = std::move(next_ids);
    }

    if (!apply) {
      trace.samples.push_back(make_sample(t, segment, cfg, ids));
      trace.termination = Termination::HaltedAtCollision;
      break;
    }
    validate_degrees(cfg);
    ++segment;
    trace.samples.push_back(make_sample(t, segment, cfg, ids));
  }
  return trace;
}

double collision_degree_form(std::size_t k, std::size_t k_plus_l) {
  auto c2 = [](std::size_t m) { return 0.5 * static_cast<double>(m) * (static_cast<double>(m) - 1.0); };
  return c2(k) + c2(k_plus_l) - static_cast<double>(k) * static_cast<double>(k_plus_l);
}

DiagnosticsReport diagnostics(const TrajectoryTrace& trace) {
  DiagnosticsReport rep;
  const auto& s = trace.samples;
  const std::size_t n = s.size();
  rep.times.resize(n);
  rep.r1.assign(n, 0.0);
  rep.r1_rel.assign(n, kNaN);
  rep.r2.assign(n, kNaN);
  rep.r3.assign(n, kNaN);
  if (n == 0) return rep;
  rep.W_scale = std::max(std::abs(s.front().W), kPi);

  std::size_t seg_start = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (s[k].segment != s[seg_start].segment) seg_start = k;
    const TraceSample& a = s[seg_start];
    const double grow = std::exp(s[k].time - a.time);
    rep.times[k] = s[k].time;
    rep.r1[k] = (s[k].V0 - grow * a.V0).norm();
    const double v0n = a.V0.norm();
    if (v0n > 0.0) {
      rep.r1_rel[k] = rep.r1[k] / (v0n * grow);
      if (s[k].V0.norm() > 0.0) {
        rep.r2[k] = (s[k].V0.normalized() - a.V0 / v0n).norm();
      }
    }
    rep.max_abs_dW = std::max(rep.max_abs_dW, std::abs(s[k].W - a.W));
    if (k > seg_start) {
      rep.max_W_increase = std::max(rep.max_W_increase, s[k].W - s[k - 1].W);
    }
    if (k > seg_start && k + 1 < n && s[k + 1].segment == s[k].segment) {
      // Second-order three-point derivative on a possibly uneven grid.
      const double h1 = s[k].time - s[k - 1].time;
      const double h2 = s[k + 1].time - s[k].time;
      const double deriv = -h2 / (h1 * (h1 + h2)) * s[k - 1].pair_sum +
                           (h2 - h1) / (h1 * h2) * s[k].pair_sum +
                           h1 / (h2 * (h1 + h2)) * s[k + 1].pair_sum;
      rep.r3[k] = std::abs(deriv + 2.0 * s[k].V0.squaredNorm());
    }
  }
  auto nanmax = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) {
      if (std::isfinite(x)) m = std::max(m, x);
    }
    return m;
  };
  rep.max_r1 = nanmax(rep.r1);
  rep.max_r1_rel = nanmax(rep.r1_rel);
  rep.max_r2 = nanmax(rep.r2);
  rep.max_r3 = nanmax(rep.r3);

  for (const auto& sample : s) {
    if (sample.config.total_degree() != 0 || sample.config.size() % 2 != 0) {
      rep.degree_bookkeeping_ok = false;
    }
  }
  for (const auto& ev : trace.collisions) {
    const std::size_t k = std::min(ev.plus_count, ev.minus_count);
    const std::size_t kl = std::max(ev.plus_count, ev.minus_count);
    if (!(collision_degree_form(k, kl) < 1.0)) rep.collision_bound_ok = false;
  }
  return rep;
}

double cap_kappa(std::size_t n, double s) {
  if (!(s >= 0.0 && s < 1.0)) {
    throw Error(ErrorKind::CapAssumptionViolated, "cap parameter s must lie in [0, 1)");
  }
  if (n == 0) throw Error(ErrorKind::CapAssumptionViolated, "n must be positive");
  const double c = std::sqrt(1.0 - s * s);
  const double nd = static_cast<double>(n);
  if (!(c > (nd - 1.0) / nd)) {
    std::ostringstream msg;
    msg << "sqrt(1 - s^2) = " << c << " does not exceed (n - 1)/n = " << (nd - 1.0) / nd;
    throw Error(ErrorKind::CapAssumptionViolated, msg.str());
  }
  return nd * c - (nd - 1.0);
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  // splitmix64 of the combined key.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(trial) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

VortexConfiguration sample_cap_configuration(std::size_t n, double s, std::uint64_t seed,
                                             double min_separation) {
  const double c = std::sqrt(1.0 - s * s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> z_dist(-1.0, -c);
  std::uniform_real_distribution<double> phi_dist(0.0, 2.0 * kPi);
  VortexConfiguration cfg;
  std::vector<SpherePoint> placed;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 100000 && !ok; ++attempt) {
      const double z = z_dist(rng);
      const double phi = phi_dist(rng);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const SpherePoint P(rho * std::cos(phi), rho * std::sin(phi), z);
      ok = std::all_of(placed.begin(), placed.end(), [&](const SpherePoint& Q) {
        return chordal_distance(P, Q) >= min_separation;
      });
      if (ok) {
        placed.push_back(P);
        cfg.vortices.push_back({stereo_project(P), i % 2 == 0 ? 1 : -1});
      }
    }
    if (!ok) throw Error(ErrorKind::SeparationError, "cannot place vortices with the requested separation");
  }
  return cfg;
}

ScanReport annihilation_scan(std::size_t n, double s, std::size_t trials, std::uint64_t seed,
                             FlowSpec spec, std::optional<double> slack) {
  ScanReport rep;
  rep.n = n;
  rep.s = s;
  rep.kappa = cap_kappa(n, s);
  rep.time_bound = std::log(1.0 / rep.kappa);
  rep.slack = slack.value_or(10.0 * spec.collision_radius);
  spec.kind = FlowKind::Gradient;
  spec.max_time = std::max(spec.max_time, 2.0 * (rep.time_bound + rep.slack));
  spec.output_stride = spec.max_time;
  spec.validate();

  rep.trials.resize(trials);
  parallel_for(trials, [&](std::size_t k) {
    ScanTrial& tr = rep.trials[k];
    tr.seed = trial_seed(seed, k);
    try {
      tr.initial = sample_cap_configuration(n, s, tr.seed, 10.0 * spec.collision_radius);
      const TrajectoryTrace trace = integrate(tr.initial, spec);
      tr.collisions = trace.collisions.size();
      tr.annihilation_time = trace.annihilation_time();
      tr.within_bound = tr.annihilation_time && *tr.annihilation_time <= rep.time_bound + rep.slack;
    } catch (const Error& e) {
      tr.error = e.what();
    }
  });
  for (const auto& tr : rep.trials) {
    if (tr.within_bound) ++rep.completed_within_bound;
    if (tr.annihilation_time) rep.max_completion_time = std::max(rep.max_completion_time, *tr.annihilation_time);
  }
  rep.fraction_within_bound =
      trials > 0 ? static_cast<double>(rep.completed_within_bound) / static_cast<double>(trials) : 0.0;
  return rep;
}

}  // namespace vortexflow
