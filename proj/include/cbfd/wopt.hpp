#pragma once

// Exact worst-case disturbance over a box.

#include "cbfd/types.hpp"

namespace cbfd {

// maximize -w'Q w - c.w  over box
struct BoxQpProblem {
  Mat q;
  Vec c;
  DisturbanceBox box;
};

struct BoxQpSolution {
  Vec w;
  double value = 0.0;
};

inline constexpr int kMaxBoxQpDim = 4;

// argmax_{w in box} -c.w ; coordinates with c_i == 0 go to lo_i.
Vec solve_linear_wopt(const Vec& c, const DisturbanceBox& box);

// Global maximizer by enumerating all 3^l faces of the box (each coordinate
// pinned low, pinned high, or free at its stationary value). Works for
// indefinite Q. Ties resolve to the first pattern in enumeration order,
// where coordinate 0 is the most significant digit and lo < hi < free.
BoxQpSolution solve_box_qp_wopt(const BoxQpProblem& p);

double box_qp_objective(const BoxQpProblem& p, const Vec& w);

}  // namespace cbfd
