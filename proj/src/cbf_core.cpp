#include "cbfd/cbf_core.hpp"

#include "cbfd/sim.hpp"
#include "cbfd/wopt.hpp"

#include <algorithm>
#include <cmath>

namespace cbfd {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what);
}
void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string("non-finite ") + what);
}
void require_finite(const Mat& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string("non-finite ") + what);
}

void require_degree(const BarrierSpec& bar, int degree) {
  if (bar.degree != degree) {
    throw InvalidArgument("barrier '" + bar.id + "' has degree " + std::to_string(bar.degree) +
                          ", expected " + std::to_string(degree));
  }
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

Vec DynamicsModel::rate(const Vec& x, const Vec& u, const Vec& w) const {
  Vec r = f(x) + g(x) * u;
  if (l > 0) r += M * w;
  return r;
}

void DynamicsModel::validate() const {
  if (n <= 0 || mu <= 0 || l < 0) throw InvalidArgument("dynamics: bad dimensions");
  if (!f || !g || !jac_f) throw InvalidArgument("dynamics: missing callback");
  if (M.rows() != n || M.cols() != l) throw InvalidArgument("dynamics: M must be n x l");
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    int nonzero = 0;
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      const double v = M(r, c);
      if (v != 0.0 && v != 1.0) throw InvalidArgument("dynamics: M entries must be 0 or 1");
      nonzero += v != 0.0;
    }
    if (nonzero > 1) throw InvalidArgument("dynamics: M has more than one nonzero in a row");
  }
  if (u_box) {
    u_box->validate();
    if (u_box->dim() != mu) throw InvalidArgument("dynamics: u_box dimension");
  }
}

void BarrierSpec::validate() const {
  if (degree != 1 && degree != 2) throw InvalidArgument("barrier: degree must be 1 or 2");
  if (!h || !grad_h) throw InvalidArgument("barrier: missing callback");
  if (degree == 2 && !hess_h) throw InvalidArgument("barrier: degree 2 needs hess_h");
  if (static_cast<int>(gains.size()) != degree) {
    throw InvalidArgument("barrier: need one gain per degree");
  }
  for (double k : gains) {
    if (!(k > 0.0) || !std::isfinite(k)) throw InvalidArgument("barrier: gains must be > 0");
  }
}

LieTerms lie_first(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x) {
  require_finite(x, "state");
  const Vec grad = bar.grad_h(x);
  LieTerms t;
  t.lf_h = grad.dot(dyn.f(x));
  t.lg_h = dyn.g(x).transpose() * grad;
  t.lm_h = dyn.M.transpose() * grad;
  require_finite(t.lf_h, "L_f h");
  require_finite(t.lg_h, "L_g h");
  require_finite(t.lm_h, "L_M h");
  return t;
}

ConstraintRow assemble_deg1(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                            const DisturbanceBox& box) {
  require_degree(bar, 1);
  const LieTerms t = lie_first(dyn, bar, x);
  const Vec w_opt = solve_linear_wopt(t.lm_h, box);
  const double hx = bar.h(x);
  require_finite(hx, "h");
  ConstraintRow row;
  row.a = t.lg_h;
  row.b = -t.lf_h - bar.gains[0] * hx - t.lm_h.dot(w_opt);
  row.barrier_id = bar.id;
  return row;
}

double separability_residual(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x) {
  if (dyn.l == 0) return 0.0;
  const Mat cross = dyn.g(x).transpose() * bar.hess_h(x) * dyn.M;
  return cross.size() ? cross.cwiseAbs().maxCoeff() : 0.0;
}

Deg2Terms assemble_deg2_terms(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x) {
  require_degree(bar, 2);
  require_finite(x, "state");
  const Vec fx = dyn.f(x);
  const Mat gx = dyn.g(x);
  const Mat& m = dyn.M;
  const Mat hess = bar.hess_h(x);
  const Vec grad = bar.grad_h(x);
  const Mat jac = dyn.jac_f(x);
  const double hx = bar.h(x);
  const double k1 = bar.gains[0];
  const double k2 = bar.gains[1];

  if (dyn.l > 0) {
    const Mat cross = gx.transpose() * hess * m;
    const double worst = cross.size() ? cross.cwiseAbs().maxCoeff() : 0.0;
    if (!(worst <= kSeparabilityTol)) {
      throw SeparabilityViolation("barrier '" + bar.id + "': g' H M = " + std::to_string(worst));
    }
  }

  const Vec hf = hess * fx;
  const Vec grad_j = jac.transpose() * grad;  // (grad' J)'

  Deg2Terms t;
  t.a_u = gx.transpose() * hf + gx.transpose() * grad_j;
  t.q_w = m.transpose() * hess * m;
  t.c_w = 2.0 * m.transpose() * hf + m.transpose() * grad_j + (k1 + k2) * (m.transpose() * grad);
  t.psi_const = fx.dot(hf) + grad_j.dot(fx) + (k1 + k2) * grad.dot(fx) + k1 * k2 * hx;

  require_finite(t.a_u, "a_u");
  require_finite(t.q_w, "Qw");
  require_finite(t.c_w, "cw");
  require_finite(t.psi_const, "psi_const");
  return t;
}

ConstraintRow assemble_deg2(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                            const DisturbanceBox& box, Vec* w_opt) {
  const Deg2Terms t = assemble_deg2_terms(dyn, bar, x);
  double worst_p = 0.0;
  Vec w;
  if (dyn.l > 0) {
    const BoxQpSolution s = solve_box_qp_wopt({t.q_w, t.c_w, box});
    w = s.w;
    worst_p = t.disturbance_term(w);
  } else {
    w = Vec(0);
  }
  if (w_opt) *w_opt = w;
  ConstraintRow row;
  row.a = t.a_u;
  row.b = -t.psi_const - worst_p;
  row.barrier_id = bar.id;
  return row;
}

ConstraintRow assemble_row(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                           const DisturbanceBox& box, Vec* w_opt) {
  if (bar.degree == 1) {
    if (w_opt) *w_opt = solve_linear_wopt(lie_first(dyn, bar, x).lm_h, box);
    return assemble_deg1(dyn, bar, x, box);
  }
  if (bar.degree == 2) return assemble_deg2(dyn, bar, x, box, w_opt);
  throw InvalidArgument("barrier degree must be 1 or 2");
}

PsiChain psi_chain_eval(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x,
                        const Vec& u, const Vec& w) {
  PsiChain c;
  c.psi0 = bar.h(x);
  const Vec grad = bar.grad_h(x);
  Vec drift = dyn.f(x);
  if (dyn.l > 0) drift += dyn.M * w;
  if (bar.degree == 1) drift += dyn.g(x) * u;
  c.psi1 = grad.dot(drift) + bar.gains[0] * c.psi0;
  if (bar.degree == 2) {
    c.psi2 = assemble_deg2_terms(dyn, bar, x).psi2(u, w);
  }
  if (!std::isfinite(c.psi0) || !std::isfinite(c.psi1) || (c.psi2 && !std::isfinite(*c.psi2))) {
    throw NumericalError("non-finite psi chain");
  }
  return c;
}

double validate_fd(const DynamicsModel& dyn, const BarrierSpec& bar, const Vec& x, const Vec& u,
                   const Vec& w, double dt) {
  const Vec fwd = rk4_step(dyn, x, u, w, dt);
  const Vec bwd = rk4_step(dyn, x, u, w, -dt);
  const PsiChain here = psi_chain_eval(dyn, bar, x, u, w);
  const PsiChain plus = psi_chain_eval(dyn, bar, fwd, u, w);
  const PsiChain minus = psi_chain_eval(dyn, bar, bwd, u, w);

  const double dpsi0 = (plus.psi0 - minus.psi0) / (2.0 * dt);
  double err = std::abs(dpsi0 + bar.gains[0] * here.psi0 - here.psi1);
  if (bar.degree == 2) {
    const double dpsi1 = (plus.psi1 - minus.psi1) / (2.0 * dt);
    err = std::max(err, std::abs(dpsi1 + bar.gains[1] * here.psi1 - *here.psi2));
  }
  return err;
}

double jacobian_fd_error(const DynamicsModel& dyn, const Vec& x, double step) {
  const Mat jac = dyn.jac_f(x);
  double worst = 0.0;
  for (int j = 0; j < dyn.n; ++j) {
    Vec xp = x, xm = x;
    const double hj = step * std::max(1.0, std::abs(x[j]));
    xp[j] += hj;
    xm[j] -= hj;
    const Vec col = (dyn.f(xp) - dyn.f(xm)) / (2.0 * hj);
    for (int i = 0; i < dyn.n; ++i) worst = std::max(worst, rel_err(jac(i, j), col[i]));
  }
  return worst;
}

double gradient_fd_error(const BarrierSpec& bar, const Vec& x, double step) {
  const Vec grad = bar.grad_h(x);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    const double hj = step * std::max(1.0, std::abs(x[j]));
    xp[j] += hj;
    xm[j] -= hj;
    worst = std::max(worst, rel_err(grad[j], (bar.h(xp) - bar.h(xm)) / (2.0 * hj)));
  }
  return worst;
}

double hessian_fd_error(const BarrierSpec& bar, const Vec& x, double step) {
  const Mat hess = bar.hess_h(x);
  double worst = (hess - hess.transpose()).cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    const double hj = step * std::max(1.0, std::abs(x[j]));
    xp[j] += hj;
    xm[j] -= hj;
    const Vec col = (bar.grad_h(xp) - bar.grad_h(xm)) / (2.0 * hj);
    for (Eigen::Index i = 0; i < x.size(); ++i) worst = std::max(worst, rel_err(hess(i, j), col[i]));
  }
  return worst;
}

}  // namespace cbfd
