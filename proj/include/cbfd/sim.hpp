#pragma once

// Fixed-step simulation of the disturbed system, scenarios and trajectories.

#include "cbfd/cbf_core.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace cbfd {

enum class FeatureMapId { Identity, UnicycleSinCos };

std::string to_string(FeatureMapId id);
FeatureMapId feature_map_from_string(const std::string& s);

// Squared-distance goal region on a subset of coordinates.
struct GoalSet {
  std::vector<int> coords;
  Vec center;
  double threshold = 0.0;  // member iff squared distance < threshold

  bool contains(const Vec& x) const;
};

struct Obstacle {
  Vec center;
  double threshold = 0.0;  // unsafe iff squared distance < threshold
};

// Serializable parameters of a builtin scenario. The analytic callbacks are
// compiled in and selected by `builtin`.
struct ScenarioConfig {
  std::string builtin;  // "unicycle" or "example1"
  double dt = 0.01;
  double t_max = 30.0;
  DisturbanceBox dist_box;
  Box x0_box;
  std::optional<GoalSet> goal;
  std::vector<double> gains;
  std::vector<Obstacle> obstacles;  // unicycle only
  double speed = 1.0;               // unicycle only
  double heading_gain = 1.0;        // unicycle only
  Vec u_ref_constant;               // example1 only
  std::optional<Box> u_box;
  FeatureMapId feature_map = FeatureMapId::Identity;
};

struct Scenario {
  std::string name;
  ScenarioConfig config;
  DynamicsModel dynamics;
  std::vector<BarrierSpec> barriers;
  std::function<Vec(const Vec&)> u_ref;

  const DisturbanceBox& dist_box() const { return config.dist_box; }
  double dt() const { return config.dt; }
  double t_max() const { return config.t_max; }
  void validate() const;
};

// Builds a scenario from its parameters. Throws InvalidArgument.
Scenario make_scenario(const ScenarioConfig& cfg);

ScenarioConfig unicycle_config();
ScenarioConfig example1_config(double w_lo = -1.0, double w_hi = 1.0);

struct BundledScenarios {
  Scenario example1;
  Scenario unicycle;
};
BundledScenarios bundled_scenarios();

// Heading error wrapped to (-pi, pi].
double wrap_angle(double a);

Vec rk4_step(const DynamicsModel& dyn, const Vec& x, const Vec& u, const Vec& w, double dt);

struct DisturbanceSignal {
  enum class Kind { Zero, Constant, PiecewiseRandom };
  Kind kind = Kind::Zero;
  Vec value;           // Constant
  int hold_steps = 10; // PiecewiseRandom

  static DisturbanceSignal zero() { return {}; }
  static DisturbanceSignal constant(Vec w) { return {Kind::Constant, std::move(w), 10}; }
  static DisturbanceSignal piecewise_random(int hold_steps = 10) {
    return {Kind::PiecewiseRandom, Vec(), hold_steps};
  }
};

// Stateful sampler; every emitted value lies inside the box.
class DisturbanceGenerator {
 public:
  DisturbanceGenerator(const DisturbanceSignal& sig, const DisturbanceBox& box, std::uint64_t seed);
  Vec operator()(long step);

 private:
  DisturbanceSignal sig_;
  DisturbanceBox box_;
  std::uint64_t seed_;
  long held_block_ = -1;
  Vec held_;
};

enum class Termination { GoalReached, Horizon, UnsafeEntered, ExpertInfeasible };
std::string to_string(Termination t);

// Row k holds the state at times[k] together with the control and disturbance
// applied over [t_k, t_k + dt). The terminal row has NaN control/disturbance.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<Vec> disturbances;
  std::vector<std::vector<PsiChain>> psi;  // psi[k][barrier]
  Termination termination = Termination::Horizon;
  std::string failure_message;

  std::size_t size() const { return times.size(); }
  // min over time of h_i for each barrier.
  std::vector<double> min_barrier_values() const;
  double min_barrier_value() const;
  bool safe() const { return min_barrier_value() >= 0.0; }
  bool reached_goal() const { return termination == Termination::GoalReached; }
};

using Policy = std::function<Vec(const Vec&)>;

Vec sample_initial_state(const Scenario& sc, std::uint64_t seed);

struct RolloutOptions {
  std::optional<Vec> x0;
  bool log_psi = true;
};

// Steps until the goal is reached, the horizon elapses, some h_i < 0, or the
// policy throws Infeasible. The initial state (if not given) and the
// disturbance stream are both derived from `seed`.
Trajectory rollout(const Scenario& sc, const Policy& policy, const DisturbanceSignal& dist,
                   std::uint64_t seed, const RolloutOptions& opts = {});

struct RolloutJob {
  std::uint64_t seed = 0;
  std::optional<Vec> x0;
};

// Runs independent rollouts on a thread pool. `make_policy(k)` is called once
// per job; results are ordered like `jobs` and do not depend on thread count.
std::vector<Trajectory> run_rollouts(const Scenario& sc,
                                     const std::function<Policy(std::size_t)>& make_policy,
                                     const DisturbanceSignal& dist,
                                     const std::vector<RolloutJob>& jobs, bool log_psi = true,
                                     unsigned threads = 0);

// Calls fn(i) for i in [0, n) over a small thread pool.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

}  // namespace cbfd
