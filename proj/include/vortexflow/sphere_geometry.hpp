#pragma once

// Stereographic chart of the unit sphere. The chart sends the south pole
// (0,0,-1) to the origin and the north pole to infinity; the pulled-back
// metric is e^{2f}|dx|^2 with f(x) = ln(2/(1+|x|^2)).

#include <Eigen/Core>

namespace vortexflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Point on the unit sphere embedded in R^3.
struct SpherePoint {
  Vec3 x = Vec3(0.0, 0.0, -1.0);

  SpherePoint() = default;
  explicit SpherePoint(const Vec3& v) : x(v) {}
  SpherePoint(double x1, double x2, double x3) : x(x1, x2, x3) {}

  /// Rescales onto the unit sphere.
  SpherePoint normalized() const { return SpherePoint(x.normalized()); }
};

/// Point in the stereographic chart.
struct ChartPoint {
  Vec2 p = Vec2::Zero();

  ChartPoint() = default;
  explicit ChartPoint(const Vec2& v) : p(v) {}
  ChartPoint(double p1, double p2) : p(p1, p2) {}
};

/// Points with x3 >= 1 - kPoleCutoff have no chart image.
inline constexpr double kPoleCutoff = 1e-9;

/// p = (x1, x2) / (1 - x3). Throws PoleSingularity near the north pole.
ChartPoint stereo_project(const SpherePoint& P);

/// P = (2p, r^2 - 1) / (1 + r^2).
SpherePoint stereo_unproject(const ChartPoint& p);

/// f(p) = ln(2 / (1 + |p|^2)).
double conformal_exponent(const ChartPoint& p);

/// e^{2f(p)} = 4 / (1 + |p|^2)^2, the area weight of the chart.
double conformal_weight(const ChartPoint& p);

/// Euclidean gradient of f: -2p / (1 + |p|^2).
Vec2 conformal_exponent_gradient(const ChartPoint& p);

/// |P - Q| measured in R^3.
double chordal_distance(const SpherePoint& P, const SpherePoint& Q);

/// Converts a Euclidean chart gradient to the metric gradient: e^{-2f} v.
Vec2 metric_gradient_from_euclidean(const ChartPoint& p, const Vec2& v);

/// Differential of stereo_unproject at p applied to a chart velocity.
Vec3 unproject_velocity(const ChartPoint& p, const Vec2& pdot);

/// Rotation of a sphere point about the x3 axis by `angle` radians.
SpherePoint rotate_about_x3(const SpherePoint& P, double angle);

}  // namespace vortexflow
