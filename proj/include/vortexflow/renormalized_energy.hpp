#pragma once

// Renormalized energy of a finite vortex configuration on the sphere,
// evaluated either in the stereographic chart or from chordal distances.

#include <cstddef>
#include <vector>

#include "vortexflow/sphere_geometry.hpp"

namespace vortexflow {

struct Vortex {
  ChartPoint position;
  int degree = 1;
};

struct VortexConfiguration {
  std::vector<Vortex> vortices;
  double time = 0.0;

  std::size_t size() const { return vortices.size(); }
  bool empty() const { return vortices.empty(); }
  int total_degree() const;
  std::vector<SpherePoint> sphere_points() const;
};

/// Positions closer than this are treated as coincident.
inline constexpr double kCoincidenceThreshold = 1e-14;

/// Throws InvalidArgument unless every degree is +-1 and they sum to zero.
void validate_degrees(const VortexConfiguration& cfg);

/// W = pi sum d_i^2 f(b_i) - pi sum_{i != j} d_i d_j ln|b_i - b_j|.
double renormalized_energy_chart(const VortexConfiguration& cfg);

/// W = -pi sum_{i != j} d_i d_j ln|P_i - P_j| with chordal distances.
double renormalized_energy_chordal(const VortexConfiguration& cfg);

/// Metric gradient of W with respect to the chart position of vortex i.
Vec2 grad_W(const VortexConfiguration& cfg, std::size_t i);

/// Skew gradient J grad_W with J = [[0, 1], [-1, 0]].
Vec2 skew_grad_W(const VortexConfiguration& cfg, std::size_t i);

/// (a, b) -> (b, -a).
inline Vec2 perp(const Vec2& v) { return Vec2(v.y(), -v.x()); }

}  // namespace vortexflow
