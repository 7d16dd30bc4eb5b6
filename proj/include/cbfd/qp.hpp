#pragma once

// min ||u - u_ref||^2  s.t.  a_i . u >= b_i,  u in u_box

#include "cbfd/cbf_core.hpp"

#include <optional>
#include <vector>

namespace cbfd {

struct ControlQp {
  Vec u_ref;
  std::vector<ConstraintRow> rows;
  std::optional<Box> u_box;
};

struct ControlQpSolution {
  Vec u;
  // One multiplier per row of expanded_rows(); zero for inactive rows.
  Vec multipliers;
  int iterations = 0;
};

inline constexpr double kQpFeasTol = 1e-9;
inline constexpr double kQpMultTol = 1e-10;

// Rows of the problem with u_box appended as bound rows.
std::vector<ConstraintRow> expanded_rows(const ControlQp& p);

// Throws Infeasible when the feasible set is empty.
Vec solve_control_qp(const ControlQp& p);
ControlQpSolution solve_control_qp_detailed(const ControlQp& p);

// Minimizer of the largest violation max_i (b_i - a_i.u) over u (with u_box
// respected as hard bounds when present); used when the QP is infeasible.
Vec min_max_violation(const ControlQp& p);

}  // namespace cbfd
