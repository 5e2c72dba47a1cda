#include "vortexflow/renormalized_energy.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "vortexflow/error.hpp"

namespace vortexflow {

namespace {

constexpr double kPi = std::numbers::pi;

[[noreturn]] void throw_coincident(std::size_t i, std::size_t j) {
  std::ostringstream msg;
  msg << "vortices " << i << " and " << j << " coincide";
  throw Error(ErrorKind::CoincidentVortices, msg.str());
}

}  // namespace

int VortexConfiguration::total_degree() const {
  int sum = 0;
  for (const auto& v : vortices) sum += v.degree;
  return sum;
}

std::vector<SpherePoint> VortexConfiguration::sphere_points() const {
  std::vector<SpherePoint> out;
  out.reserve(vortices.size());
  for (const auto& v : vortices) out.push_back(stereo_unproject(v.position));
  return out;
}

void validate_degrees(const VortexConfiguration& cfg) {
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    const int d = cfg.vortices[i].degree;
    if (d != 1 && d != -1) {
      std::ostringstream msg;
      msg << "vortex " << i << " has degree " << d << "; only +-1 is supported";
      throw Error(ErrorKind::InvalidArgument, msg.str());
    }
  }
  if (cfg.total_degree() != 0) {
    throw Error(ErrorKind::InvalidArgument, "vortex degrees must sum to zero");
  }
}

double renormalized_energy_chart(const VortexConfiguration& cfg) {
  const auto& v = cfg.vortices;
  double self = 0.0;
  double pair = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double di = v[i].degree;
    self += di * di * conformal_exponent(v[i].position);
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double r = (v[i].position.p - v[j].position.p).norm();
      if (r < kCoincidenceThreshold) throw_coincident(i, j);
      // Each unordered pair appears twice in the i != j sum.
      pair += 2.0 * di * v[j].degree * std::log(r);
    }
  }
  return kPi * self - kPi * pair;
}

double renormalized_energy_chordal(const VortexConfiguration& cfg) {
  const auto pts = cfg.sphere_points();
  const auto& v = cfg.vortices;
  double pair = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double r = chordal_distance(pts[i], pts[j]);
      if (r < kCoincidenceThreshold) throw_coincident(i, j);
      pair += 2.0 * v[i].degree * v[j].degree * std::log(r);
    }
  }
  return -kPi * pair;
}

Vec2 grad_W(const VortexConfiguration& cfg, std::size_t i) {
  const auto& v = cfg.vortices;
  if (i >= v.size()) throw Error(ErrorKind::InvalidArgument, "vortex index out of range");
  const ChartPoint& bi = v[i].position;
  const double di = v[i].degree;
  Vec2 interaction = Vec2::Zero();
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (j == i) continue;
    const Vec2 diff = bi.p - v[j].position.p;
    const double r2 = diff.squaredNorm();
    if (std::sqrt(r2) < kCoincidenceThreshold) throw_coincident(i, j);
    interaction += v[j].degree * diff / r2;
  }
  const Vec2 euclid = kPi * (di * di * conformal_exponent_gradient(bi) - 2.0 * di * interaction);
  return metric_gradient_from_euclidean(bi, euclid);
}

Vec2 skew_grad_W(const VortexConfiguration& cfg, std::size_t i) {
  return perp(grad_W(cfg, i));
}

}  // namespace vortexflow
