#include "vortexflow/dopri5.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vortexflow {

namespace {

constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

bool all_finite(const State& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

DormandPrince45::DormandPrince45(OdeRhs rhs, double rel_tol, double abs_tol)
    : rhs_(std::move(rhs)), rtol_(rel_tol), atol_(abs_tol) {}

void DormandPrince45::reset(double t, const State& y, double h0) {
  t_ = t;
  t0_ = t;
  y_ = y;
  h_ = h0;
  h_last_ = 0.0;
  const std::size_t n = y.size();
  for (State* s : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &ytmp_, &ynew_, &err_}) {
    s->assign(n, 0.0);
  }
  cont_.assign(5, State(n, 0.0));
  k1_valid_ = false;
}

bool DormandPrince45::eval(double t, const State& y, State& out) {
  return rhs_(t, y, out) && all_finite(out);
}

bool DormandPrince45::step(double t_end) {
  const std::size_t n = y_.size();
  if (!k1_valid_) {
    if (!eval(t_, y_, k1_)) return false;
    k1_valid_ = true;
  }
  const double h_min = 16.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::abs(t_));
  while (true) {
    double h = std::min(h_, t_end - t_);
    if (h < h_min) {
      if (t_end - t_ <= h_min) h = t_end - t_;
      else return false;
    }
    bool ok = true;
    auto stage = [&](State& k, double c, auto&& combine) {
      if (!ok) return;
      for (std::size_t i = 0; i < n; ++i) ytmp_[i] = y_[i] + h * combine(i);
      ok = eval(t_ + c * h, ytmp_, k);
    };
    stage(k2_, c2, [&](std::size_t i) { return a21 * k1_[i]; });
    stage(k3_, c3, [&](std::size_t i) { return a31 * k1_[i] + a32 * k2_[i]; });
    stage(k4_, c4, [&](std::size_t i) { return a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]; });
    stage(k5_, c5, [&](std::size_t i) {
      return a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i];
    });
    stage(k6_, 1.0, [&](std::size_t i) {
      return a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i];
    });
    if (ok) {
      for (std::size_t i = 0; i < n; ++i) {
        ynew_[i] = y_[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] +
                                a76 * k6_[i]);
      }
      ok = eval(t_ + h, ynew_, k7_);
    }
    double err = std::numeric_limits<double>::infinity();
    if (ok) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] +
                              e6 * k6_[i] + e7 * k7_[i]);
        const double sc = atol_ + rtol_ * std::max(std::abs(y_[i]), std::abs(ynew_[i]));
        sum += (e / sc) * (e / sc);
      }
      err = n > 0 ? std::sqrt(sum / static_cast<double>(n)) : 0.0;
    }
    if (!ok || !std::isfinite(err)) {
      ++rejected_;
      h_ = 0.25 * h;
      if (h_ < h_min) return false;
      continue;
    }
    const double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 10.0);
    if (err <= 1.0) {
      for (std::size_t i = 0; i < n; ++i) {
        const double ydiff = ynew_[i] - y_[i];
        const double bspl = h * k1_[i] - ydiff;
        cont_[0][i] = y_[i];
        cont_[1][i] = ydiff;
        cont_[2][i] = bspl;
        cont_[3][i] = ydiff - h * k7_[i] - bspl;
        cont_[4][i] = h * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] +
                           d6 * k6_[i] + d7 * k7_[i]);
      }
      t0_ = t_;
      t_ += h;
      h_last_ = h;
      y_.swap(ynew_);
      k1_.swap(k7_);
      ++accepted_;
      // A step clipped at t_end says nothing about the proposal being too long.
      const bool clipped = h < h_;
      h_ = (clipped && fac >= 1.0) ? h_ : h * fac;
      return true;
    }
    ++rejected_;
    h_ = h * std::max(fac, 0.2);
  }
}

State DormandPrince45::interpolate(double t) const {
  const std::size_t n = y_.size();
  State out(n);
  if (h_last_ == 0.0) {
    out = y_;
    return out;
  }
  const double theta = (t - t0_) / h_last_;
  const double theta1 = 1.0 - theta;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = cont_[0][i] +
             theta * (cont_[1][i] +
                      theta1 * (cont_[2][i] + theta * (cont_[3][i] + theta1 * cont_[4][i])));
  }
  return out;
}

}  // namespace vortexflow
