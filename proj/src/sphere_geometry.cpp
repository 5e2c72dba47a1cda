#include "vortexflow/sphere_geometry.hpp"

#include <cmath>
#include <sstream>

#include "vortexflow/error.hpp"

namespace vortexflow {

ChartPoint stereo_project(const SpherePoint& P) {
  const double x3 = P.x.z();
  if (!(x3 < 1.0 - kPoleCutoff)) {
    std::ostringstream msg;
    msg << "point with x3 = " << x3 << " is too close to the north pole";
    throw Error(ErrorKind::PoleSingularity, msg.str());
  }
  const double s = 1.0 / (1.0 - x3);
  return ChartPoint(P.x.x() * s, P.x.y() * s);
}

SpherePoint stereo_unproject(const ChartPoint& p) {
  const double r2 = p.p.squaredNorm();
  const double s = 1.0 / (1.0 + r2);
  return SpherePoint(2.0 * p.p.x() * s, 2.0 * p.p.y() * s, (r2 - 1.0) * s);
}

double conformal_exponent(const ChartPoint& p) {
  return std::log(2.0 / (1.0 + p.p.squaredNorm()));
}

double conformal_weight(const ChartPoint& p) {
  const double d = 1.0 + p.p.squaredNorm();
  return 4.0 / (d * d);
}

Vec2 conformal_exponent_gradient(const ChartPoint& p) {
  return -2.0 * p.p / (1.0 + p.p.squaredNorm());
}

double chordal_distance(const SpherePoint& P, const SpherePoint& Q) {
  return (P.x - Q.x).norm();
}

Vec2 metric_gradient_from_euclidean(const ChartPoint& p, const Vec2& v) {
  const double d = 1.0 + p.p.squaredNorm();
  return 0.25 * d * d * v;
}

Vec3 unproject_velocity(const ChartPoint& p, const Vec2& pdot) {
  const double r2 = p.p.squaredNorm();
  const double s = 1.0 / (1.0 + r2);
  const double pv = p.p.dot(pdot);
  const Vec2 horiz = 2.0 * s * pdot - 4.0 * s * s * pv * p.p;
  return Vec3(horiz.x(), horiz.y(), 4.0 * s * s * pv);
}

SpherePoint rotate_about_x3(const SpherePoint& P, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return SpherePoint(c * P.x.x() - s * P.x.y(), s * P.x.x() + c * P.x.y(), P.x.z());
}

}  // namespace vortexflow
