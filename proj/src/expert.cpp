#include "cbfd/expert.hpp"

namespace cbfd {

std::string to_string(InfeasibleFallback f) {
  return f == InfeasibleFallback::BestEffort ? "best_effort" : "error";
}

InfeasibleFallback fallback_from_string(const std::string& s) {
  if (s == "error") return InfeasibleFallback::Error;
  if (s == "best_effort") return InfeasibleFallback::BestEffort;
  throw InvalidArgument("unknown fallback '" + s + "'");
}

ExpertPolicy::ExpertPolicy(std::shared_ptr<const Scenario> scenario, InfeasibleFallback fallback)
    : scenario_(std::move(scenario)), fallback_(fallback), stats_(std::make_shared<ExpertStats>()) {
  if (!scenario_) throw InvalidArgument("expert: null scenario");
}

std::pair<Vec, ExpertDiagnostics> ExpertPolicy::control(const Vec& x) const {
  if (!x.allFinite()) throw InvalidArgument("expert: non-finite state");
  const Scenario& sc = *scenario_;
  ExpertDiagnostics diag;
  diag.u_ref = sc.u_ref(x);

  ControlQp qp;
  qp.u_ref = diag.u_ref;
  qp.u_box = sc.dynamics.u_box;
  qp.rows.reserve(sc.barriers.size());
  diag.barriers.reserve(sc.barriers.size());
  for (const auto& bar : sc.barriers) {
    BarrierDiagnostics bd;
    bd.barrier_id = bar.id;
    bd.row = assemble_row(sc.dynamics, bar, x, sc.dist_box(), &bd.w_opt);
    qp.rows.push_back(bd.row);
    diag.barriers.push_back(std::move(bd));
  }

  ++stats_->solves;
  Vec u;
  try {
    u = solve_control_qp(qp);
  } catch (const Infeasible&) {
    ++stats_->infeasible;
    if (fallback_ == InfeasibleFallback::Error) throw;
    ++stats_->fallbacks;
    u = min_max_violation(qp);
    diag.fallback_used = true;
  }
  for (auto& bd : diag.barriers) bd.slack = bd.row.slack(u);
  return {u, std::move(diag)};
}

Policy ExpertPolicy::as_policy() const {
  ExpertPolicy self = *this;
  return [self](const Vec& x) { return self(x); };
}

}  // namespace cbfd
