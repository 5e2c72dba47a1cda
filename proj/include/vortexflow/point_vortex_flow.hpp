#pragma once

// Limiting point-vortex dynamics on the sphere, integrated in the
// stereographic chart:
//
//   gradient:     dp_i/dt = -(1/pi) grad_W(p)_i
//   hamiltonian:  d_i dp_i/dt = -(1/pi) skew_grad_W(p)_i
//
// Collisions (chordal distance below the collision radius) are resolved by
// annihilation (net degree 0) or merging (net degree +-1) and the flow is
// restarted from the collision time.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vortexflow/renormalized_energy.hpp"

namespace vortexflow {

enum class FlowKind { Gradient, Hamiltonian };

std::string to_string(FlowKind kind);
FlowKind flow_kind_from_string(const std::string& s);

struct FlowSpec {
  FlowKind kind = FlowKind::Gradient;
  double rk_rel_tol = 1e-9;
  double rk_abs_tol = 1e-12;
  double collision_radius = 1e-3;  // chordal
  double max_time = 1.0;
  double output_stride = 1e-2;
  // Hamiltonian runs halt at the first collision unless this is set.
  bool hamiltonian_continuation = false;

  /// Throws InvalidArgument if a field is out of range.
  void validate() const;
};

enum class CollisionAction { Annihilate, Merge };

std::string to_string(CollisionAction action);

struct CollisionEvent {
  double time = 0.0;
  SpherePoint location;
  std::vector<std::size_t> participant_indices;  // vortex ids, see TraceSample::ids
  int net_degree = 0;
  CollisionAction action = CollisionAction::Annihilate;
  std::size_t plus_count = 0;
  std::size_t minus_count = 0;
  bool applied = true;  // false when a Hamiltonian run halted instead
};

struct TraceSample {
  double time = 0.0;
  std::size_t segment = 0;  // index of the collision-free interval
  VortexConfiguration config;
  std::vector<std::size_t> ids;  // stable vortex ids; merged vortices get fresh ids
  double W = 0.0;
  Vec3 V0 = Vec3::Zero();
  double pair_sum = 0.0;
};

enum class Termination { MaxTime, AllAnnihilated, HaltedAtCollision };

std::string to_string(Termination t);

struct TrajectoryTrace {
  FlowKind kind = FlowKind::Gradient;
  std::vector<TraceSample> samples;
  std::vector<CollisionEvent> collisions;
  Termination termination = Termination::MaxTime;
  long accepted_steps = 0;
  long rejected_steps = 0;

  /// Time of the collision that removed the last vortex, if any.
  std::optional<double> annihilation_time() const;
};

/// Sum of sphere positions.
Vec3 vortex_sum(const VortexConfiguration& cfg);

/// Sum over unordered pairs of squared chordal distances.
double pair_distance_sum(const VortexConfiguration& cfg);

/// Smallest pairwise chordal distance (infinity for fewer than 2 vortices).
double min_chordal_distance(const VortexConfiguration& cfg);

/// Chart velocities of every vortex. Throws NearCollision when two vortices
/// are closer than `near_collision_distance` (chordal).
std::vector<Vec2> flow_rhs(const VortexConfiguration& cfg, FlowKind kind,
                           double near_collision_distance = 1e-4);

/// Removes (net degree 0) or merges (net degree +-1) a colliding cluster.
/// The merged vortex sits at the normalized chordal centroid.
std::optional<Vortex> resolve_collision(const std::vector<Vortex>& cluster);

/// Integrates from cfg0 until max_time, annihilation of every vortex or
/// (Hamiltonian default) the first collision.
TrajectoryTrace integrate(const VortexConfiguration& cfg0, const FlowSpec& spec);

struct DiagnosticsReport {
  std::vector<double> times;
  std::vector<double> r1;      // |V0(t) - e^{t - t0} V0(t0)|
  std::vector<double> r1_rel;  // r1 / (|V0(t0)| e^{t - t0}), NaN if V0(t0) = 0
  std::vector<double> r2;      // direction drift, NaN if V0(t0) = 0
  std::vector<double> r3;      // |d/dt pair_sum + 2|V0|^2|, NaN where undefined
  double max_r1 = 0.0;
  double max_r1_rel = 0.0;
  double max_r2 = 0.0;
  double max_r3 = 0.0;
  double max_W_increase = 0.0;  // largest W(t_{k+1}) - W(t_k) within a segment
  double max_abs_dW = 0.0;      // largest |W(t) - W(t_segment_start)|
  double W_scale = 0.0;         // max(|W(t0)|, pi)
  bool degree_bookkeeping_ok = true;
  bool collision_bound_ok = true;  // C(k,2) + C(k+l,2) - k(k+l) < 1 for every cluster
};

/// Residuals of the exponential growth of V0, the fixed direction of V0 and
/// the decay rate of the pairwise distance sum, plus energy monotonicity.
DiagnosticsReport diagnostics(const TrajectoryTrace& trace);

/// C(k,2) + C(k+l,2) - k(k+l) for a cluster of k vortices of one sign and
/// k + l of the other.
double collision_degree_form(std::size_t k, std::size_t k_plus_l);

struct ScanTrial {
  std::uint64_t seed = 0;
  VortexConfiguration initial;
  std::optional<double> annihilation_time;
  std::size_t collisions = 0;
  bool within_bound = false;
  std::string error;  // non-empty if the trial failed
};

struct ScanReport {
  std::size_t n = 0;
  double s = 0.0;
  double kappa = 0.0;
  double time_bound = 0.0;  // ln(1/kappa)
  double slack = 0.0;
  std::vector<ScanTrial> trials;
  std::size_t completed_within_bound = 0;
  double fraction_within_bound = 0.0;
  double max_completion_time = 0.0;
};

/// kappa = n sqrt(1 - s^2) - (n - 1); throws CapAssumptionViolated if <= 0.
double cap_kappa(std::size_t n, double s);

/// 2n vortices uniform in the cap {x3 <= -sqrt(1 - s^2)}, degrees +1, -1,
/// +1, ... and pairwise chordal separation at least `min_separation`.
VortexConfiguration sample_cap_configuration(std::size_t n, double s, std::uint64_t seed,
                                             double min_separation);

/// Per-trial seed derived from (seed, trial index).
std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial);

/// Runs `trials` gradient flows from cap samples and checks that every
/// vortex is gone by ln(1/kappa) + slack. spec.kind is forced to Gradient;
/// slack defaults to 10 collision radii.
ScanReport annihilation_scan(std::size_t n, double s, std::size_t trials, std::uint64_t seed,
                             FlowSpec spec, std::optional<double> slack = std::nullopt);

}  // namespace vortexflow
