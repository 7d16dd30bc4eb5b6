#include "cbfd/wopt.hpp"

#include <cmath>
#include <vector>

namespace cbfd {

Vec solve_linear_wopt(const Vec& c, const DisturbanceBox& box) {
  if (c.size() != box.dim()) throw DimMismatch("solve_linear_wopt: c and box differ in size");
  Vec w(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i) w[i] = c[i] < 0.0 ? box.hi[i] : box.lo[i];
  return w;
}

double box_qp_objective(const BoxQpProblem& p, const Vec& w) {
  return -w.dot(p.q * w) - p.c.dot(w);
}

BoxQpSolution solve_box_qp_wopt(const BoxQpProblem& p) {
  const int l = p.box.dim();
  if (l > kMaxBoxQpDim) throw InvalidArgument("solve_box_qp_wopt: dimension above 4");
  if (p.q.rows() != l || p.q.cols() != l || p.c.size() != l) {
    throw DimMismatch("solve_box_qp_wopt: Q, c and box differ in size");
  }
  // Only the symmetric part matters for the objective.
  const Mat q = 0.5 * (p.q + p.q.transpose());

  int patterns = 1;
  for (int i = 0; i < l; ++i) patterns *= 3;

  BoxQpSolution best;
  bool have_best = false;
  std::vector<int> digit(l);
  std::vector<int> free_idx;
  std::vector<int> fixed_idx;

  for (int code = 0; code < patterns; ++code) {
    // coordinate 0 is the most significant base-3 digit: 0 = lo, 1 = hi, 2 = free
    int rest = code;
    for (int i = l - 1; i >= 0; --i) {
      digit[i] = rest % 3;
      rest /= 3;
    }
    Vec w(l);
    free_idx.clear();
    fixed_idx.clear();
    for (int i = 0; i < l; ++i) {
      if (digit[i] == 2) {
        free_idx.push_back(i);
      } else {
        fixed_idx.push_back(i);
        w[i] = digit[i] == 0 ? p.box.lo[i] : p.box.hi[i];
      }
    }

    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      Mat qff(nf, nf);
      Vec rhs(nf);
      for (int a = 0; a < nf; ++a) {
        double s = p.c[free_idx[a]];
        for (int j : fixed_idx) s += 2.0 * q(free_idx[a], j) * w[j];
        rhs[a] = -s;
        for (int b = 0; b < nf; ++b) qff(a, b) = 2.0 * q(free_idx[a], free_idx[b]);
      }
      Eigen::FullPivLU<Mat> lu(qff);
      if (!lu.isInvertible()) continue;
      const Vec wf = lu.solve(rhs);
      if (!wf.allFinite()) continue;
      bool inside = true;
      for (int a = 0; a < nf && inside; ++a) {
        const int i = free_idx[a];
        inside = wf[a] > p.box.lo[i] && wf[a] < p.box.hi[i];
        w[i] = wf[a];
      }
      if (!inside) continue;
    }

    const double value = box_qp_objective(p, w);
    if (!have_best || value > best.value) {
      best.w = w;
      best.value = value;
      have_best = true;
    }
  }
  return best;
}

}  // namespace cbfd
