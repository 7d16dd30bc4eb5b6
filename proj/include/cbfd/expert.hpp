#pragma once

// The QP expert: robust barrier rows for every barrier, then the control QP.

#include "cbfd/qp.hpp"
#include "cbfd/sim.hpp"

#include <atomic>
#include <memory>

namespace cbfd {

enum class InfeasibleFallback { Error, BestEffort };

std::string to_string(InfeasibleFallback f);
InfeasibleFallback fallback_from_string(const std::string& s);

struct BarrierDiagnostics {
  std::string barrier_id;
  Vec w_opt;
  ConstraintRow row;
  double slack = 0.0;
};

struct ExpertDiagnostics {
  Vec u_ref;
  std::vector<BarrierDiagnostics> barriers;
  bool fallback_used = false;
};

struct ExpertStats {
  std::atomic<std::uint64_t> solves{0};
  std::atomic<std::uint64_t> infeasible{0};
  std::atomic<std::uint64_t> fallbacks{0};
};

class ExpertPolicy {
 public:
  explicit ExpertPolicy(std::shared_ptr<const Scenario> scenario,
                        InfeasibleFallback fallback = InfeasibleFallback::Error);

  // Throws Infeasible under the Error fallback.
  std::pair<Vec, ExpertDiagnostics> control(const Vec& x) const;
  Vec operator()(const Vec& x) const { return control(x).first; }

  const Scenario& scenario() const { return *scenario_; }
  InfeasibleFallback fallback() const { return fallback_; }
  const ExpertStats& stats() const { return *stats_; }
  Policy as_policy() const;

 private:
  std::shared_ptr<const Scenario> scenario_;
  InfeasibleFallback fallback_;
  std::shared_ptr<ExpertStats> stats_;
};

}  // namespace cbfd
