#pragma once

// Embedded Runge-Kutta 5(4) pair of Dormand and Prince with FSAL stages,
// PI-free step control and the Hairer-Wanner 4th order continuous extension.

#include <functional>
#include <vector>

namespace vortexflow {

using State = std::vector<double>;

/// Right-hand side. Returns false when the state is outside the domain of
/// the vector field; the step is then rejected and retried with a smaller h.
using OdeRhs = std::function<bool(double t, const State& y, State& dydt)>;

class DormandPrince45 {
 public:
  DormandPrince45(OdeRhs rhs, double rel_tol, double abs_tol);

  /// Resets the integrator at (t, y) with a proposed first step.
  void reset(double t, const State& y, double h0);

  /// Advances by one accepted step, never beyond t_end. Returns false if the
  /// step size underflowed.
  bool step(double t_end);

  double t() const { return t_; }
  const State& y() const { return y_; }
  double last_t0() const { return t0_; }
  double last_h() const { return h_last_; }
  double next_h() const { return h_; }

  /// Dense output on the last accepted step, t in [last_t0, t].
  State interpolate(double t) const;

  long accepted() const { return accepted_; }
  long rejected() const { return rejected_; }

 private:
  bool eval(double t, const State& y, State& out);

  OdeRhs rhs_;
  double rtol_;
  double atol_;
  double t_ = 0.0;
  double t0_ = 0.0;
  double h_ = 0.0;
  double h_last_ = 0.0;
  State y_;
  State k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_, ynew_, err_;
  std::vector<State> cont_;
  bool k1_valid_ = false;
  long accepted_ = 0;
  long rejected_ = 0;
};

}  // namespace vortexflow
