#include "cbfd/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cbfd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroCoeff = 1e-12;

void check_problem(const ControlQp& p, const std::vector<ConstraintRow>& rows) {
  const Eigen::Index mu = p.u_ref.size();
  if (mu < 1) throw InvalidArgument("control QP: empty u_ref");
  if (!p.u_ref.allFinite()) throw InvalidArgument("control QP: non-finite u_ref");
  for (const auto& r : rows) {
    if (r.a.size() != mu) throw DimMismatch("control QP: row '" + r.barrier_id + "' has wrong size");
    if (!r.a.allFinite() || !std::isfinite(r.b)) {
      throw InvalidArgument("control QP: non-finite row '" + r.barrier_id + "'");
    }
  }
}

// Interval intersection for a scalar control.
ControlQpSolution solve_scalar(const ControlQp& p, const std::vector<ConstraintRow>& rows) {
  double lower = -kInf;
  double upper = kInf;
  int lower_row = -1;
  int upper_row = -1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double a = rows[i].a[0];
    const double b = rows[i].b;
    if (std::abs(a) <= kZeroCoeff) {
      if (b > kQpFeasTol) {
        throw Infeasible("row '" + rows[i].barrier_id + "' requires 0 >= " + std::to_string(b));
      }
      continue;
    }
    const double bound = b / a;
    if (a > 0.0 && bound > lower) {
      lower = bound;
      lower_row = static_cast<int>(i);
    } else if (a < 0.0 && bound < upper) {
      upper = bound;
      upper_row = static_cast<int>(i);
    }
  }
  if (lower > upper) {
    throw Infeasible("empty interval [" + std::to_string(lower) + ", " + std::to_string(upper) + "]");
  }
  ControlQpSolution s;
  s.u = Vec::Constant(1, std::clamp(p.u_ref[0], lower, upper));
  s.multipliers = Vec::Zero(static_cast<Eigen::Index>(rows.size()));
  const double shift = s.u[0] - p.u_ref[0];
  if (shift > 0.0 && lower_row >= 0) s.multipliers[lower_row] = shift / rows[lower_row].a[0];
  if (shift < 0.0 && upper_row >= 0) s.multipliers[upper_row] = shift / rows[upper_row].a[0];
  return s;
}

// Dual active-set method (Goldfarb-Idnani) for the identity Hessian. Starts at
// the unconstrained minimizer u_ref and adds violated rows one at a time,
// dropping active rows whose multipliers would turn negative.
ControlQpSolution solve_active_set(const ControlQp& p, const std::vector<ConstraintRow>& rows) {
  const Eigen::Index mu = p.u_ref.size();
  const int m = static_cast<int>(rows.size());
  Vec u = p.u_ref;
  Vec lambda = Vec::Zero(m);
  std::vector<int> active;
  const int max_iter = 50 * (m + static_cast<int>(mu)) + 100;
  int iter = 0;

  auto slack = [&](int i) { return rows[i].a.dot(u) - rows[i].b; };

  while (true) {
    int add = -1;
    double worst = -kQpFeasTol;
    for (int i = 0; i < m; ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      const double s = slack(i);
      if (s < worst) {
        worst = s;
        add = i;
      }
    }
    if (add < 0) break;

    const Vec& ap = rows[add].a;
    while (true) {
      if (++iter > max_iter) throw NumericalError("control QP: active-set iteration limit");
      const int k = static_cast<int>(active.size());
      Vec r = Vec::Zero(k);
      Vec z = ap;
      if (k > 0) {
        Mat n(mu, k);
        for (int j = 0; j < k; ++j) n.col(j) = rows[active[j]].a;
        r = n.colPivHouseholderQr().solve(ap);
        z = ap - n * r;
      }
      const double zz = z.squaredNorm();
      double full_step = kInf;
      if (zz > 1e-24 * std::max(1.0, ap.squaredNorm())) full_step = -slack(add) / z.dot(ap);

      double partial_step = kInf;
      int drop = -1;
      for (int j = 0; j < k; ++j) {
        if (r[j] <= 1e-14) continue;
        const double ratio = lambda[active[j]] / r[j];
        // Bland-style tie break on row index
        if (ratio < partial_step || (ratio == partial_step && active[j] < active[drop])) {
          partial_step = ratio;
          drop = j;
        }
      }

      if (full_step == kInf && partial_step == kInf) {
        throw Infeasible("row '" + rows[add].barrier_id +
                         "' is inconsistent with the active constraints");
      }

      const double t = std::min(full_step, partial_step);
      if (full_step < kInf) u += t * z;
      for (int j = 0; j < k; ++j) lambda[active[j]] -= t * r[j];
      lambda[add] += t;

      if (partial_step < full_step) {
        lambda[active[drop]] = 0.0;
        active.erase(active.begin() + drop);
        continue;
      }
      active.push_back(add);
      break;
    }
  }

  for (int i = 0; i < m; ++i) {
    if (slack(i) < -1e-8) throw Infeasible("control QP: residual violation after solve");
  }
  ControlQpSolution s;
  s.u = u;
  s.multipliers = lambda;
  s.iterations = iter;
  return s;
}

}  // namespace

std::vector<ConstraintRow> expanded_rows(const ControlQp& p) {
  std::vector<ConstraintRow> rows = p.rows;
  if (p.u_box) {
    const Eigen::Index mu = p.u_ref.size();
    if (p.u_box->dim() != mu) throw DimMismatch("control QP: u_box dimension");
    for (Eigen::Index i = 0; i < mu; ++i) {
      Vec e = Vec::Zero(mu);
      e[i] = 1.0;
      rows.push_back({e, p.u_box->lo[i], "u_lo_" + std::to_string(i + 1)});
      rows.push_back({-e, -p.u_box->hi[i], "u_hi_" + std::to_string(i + 1)});
    }
  }
  return rows;
}

ControlQpSolution solve_control_qp_detailed(const ControlQp& p) {
  const std::vector<ConstraintRow> rows = expanded_rows(p);
  check_problem(p, rows);
  if (p.u_ref.size() == 1) return solve_scalar(p, rows);
  return solve_active_set(p, rows);
}

Vec solve_control_qp(const ControlQp& p) { return solve_control_qp_detailed(p).u; }

Vec min_max_violation(const ControlQp& p) {
  const std::vector<ConstraintRow> rows = expanded_rows(p);
  check_problem(p, rows);
  auto worst_violation = [&](const Vec& u) {
    double v = -kInf;
    for (const auto& r : rows) v = std::max(v, r.b - r.a.dot(u));
    return v;
  };
  if (rows.empty()) return p.u_ref;

  if (p.u_ref.size() == 1) {
    std::vector<double> candidates{p.u_ref[0]};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double ai = rows[i].a[0];
      if (std::abs(ai) > kZeroCoeff) candidates.push_back(rows[i].b / ai);
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        const double da = ai - rows[j].a[0];
        if (std::abs(da) > kZeroCoeff) candidates.push_back((rows[i].b - rows[j].b) / da);
      }
    }
    double best_u = p.u_ref[0];
    double best_v = kInf;
    for (double c : candidates) {
      if (p.u_box) c = std::clamp(c, p.u_box->lo[0], p.u_box->hi[0]);
      const double v = worst_violation(Vec::Constant(1, c));
      if (v < best_v - 1e-15 ||
          (std::abs(v - best_v) <= 1e-15 && std::abs(c - p.u_ref[0]) < std::abs(best_u - p.u_ref[0]))) {
        best_v = v;
        best_u = c;
      }
    }
    return Vec::Constant(1, best_u);
  }

  // Normalized subgradient descent on the worst violation.
  Vec u = p.u_box ? p.u_box->clamp(p.u_ref) : p.u_ref;
  Vec best = u;
  double best_v = worst_violation(u);
  const double step0 = std::max(1.0, std::abs(best_v));
  for (int k = 1; k <= 4000; ++k) {
    int arg = 0;
    double v = -kInf;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double vi = rows[i].b - rows[i].a.dot(u);
      if (vi > v) {
        v = vi;
        arg = static_cast<int>(i);
      }
    }
    const double norm = rows[arg].a.norm();
    if (norm <= kZeroCoeff) break;
    u += (step0 / std::sqrt(static_cast<double>(k))) * rows[arg].a / norm;
    if (p.u_box) u = p.u_box->clamp(u);
    const double nv = worst_violation(u);
    if (nv < best_v) {
      best_v = nv;
      best = u;
    }
  }
  return best;
}

}  // namespace cbfd
