#pragma once

// Dynamics/barrier data model and assembly of disturbance-robust barrier
// constraints for control-affine systems  x' = f(x) + g(x) u + M w.

#include "cbfd/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cbfd {

struct DynamicsModel {
  int n = 0;   // state dimension
  int mu = 0;  // control dimension
  int l = 0;   // disturbance dimension

  std::function<Vec(const Vec&)> f;
  std::function<Mat(const Vec&)> g;  // n x mu
  Mat M;                             // n x l, zero-one, <= 1 nonzero per row
  std::function<Mat(const Vec&)> jac_f;
  std::optional<Box> u_box;

  // f(x) + g(x) u + M w
  Vec rate(const Vec& x, const Vec& u, const Vec& w) const;

  // Checks dimensions and the structure of M. Throws InvalidArgument.
  void validate() const;
};

struct BarrierSpec {
  std::string id;
  std::function<double(const Vec&)> h;
  std::function<Vec(const Vec&)> grad_h;
  std::function<Mat(const Vec&)> hess_h;  // required for degree 2
  int degree = 1;
  std::vector<double> gains;  // linear class-K gains, alpha_i(y) = gains[i-1] * y

  void validate() const;
};

// a . u >= b
struct ConstraintRow {
  Vec a;
  double b = 0.0;
  std::string barrier_id;

  double slack(const Vec& u) const { return a.dot(u) - b; }
};

// psi_2(x, u, w) = a_u.u + w'Qw w + cw.w + psi_const, with w held constant.
struct Deg2Terms {
  Vec a_u;
  Mat q_w;
  Vec c_w;
  double psi_const = 0.0;

  // P(x, w): the disturbance-dependent part of psi_2.
  double disturbance_term(const Vec& w) const { return w.dot(q_w * w) + c_w.dot(w); }
  double psi2(const Vec& u, const Vec& w) const {
    return a_u.dot(u) + disturbance_term(w) + psi_const;
  }
};

struct LieTerms {
  double lf_h = 0.0;
  Vec lg_h;
  Vec lm_h;
};

struct PsiChain {
  double psi0 = 0.0;
  double psi1 = 0.0;
  std::optional<double> psi2;
};

inline constexpr double kSeparabilityTol = 1e-9;

LieTerms lie_first(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x);

ConstraintRow assemble_deg1(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                            const DisturbanceBox& box);

Deg2Terms assemble_deg2_terms(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x);

// Worst-case robust degree-2 row. Optionally reports the maximizing disturbance.
ConstraintRow assemble_deg2(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                            const DisturbanceBox& box, Vec* w_opt = nullptr);

// Dispatches on bar.degree.
ConstraintRow assemble_row(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                           const DisturbanceBox& box, Vec* w_opt = nullptr);

PsiChain psi_chain_eval(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                        const Vec& u, const Vec& w);

// Largest |d/dt psi_{i-1} + k_i psi_{i-1} - psi_i| over the chain, with the
// time derivative taken by central differences of one RK4 step forward and
// one backward (u, w held constant).
double validate_fd(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                   const Vec& u, const Vec& w, double dt = 1e-5);

// Finite-difference checks for user-supplied derivatives. Each returns the
// largest relative error max|a-b| / max(1, |b|) over all entries.
double jacobian_fd_error(const DynamicsModel& dyn, const Vec& x, double step = 1e-6);
double gradient_fd_error(const BarrierSpec& bar, const Vec& x, double step = 1e-6);
double hessian_fd_error(const BarrierSpec& bar, const Vec& x, double step = 1e-6);

// |g' H M| max entry; zero when the u.w cross term vanishes.
double separability_residual(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x);

}  // namespace cbfd
