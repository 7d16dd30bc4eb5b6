#pragma once

// Dataset aggregation with the QP expert as the labeler.

#include "cbfd/expert.hpp"
#include "cbfd/policy_nn.hpp"

#include <json.hpp>

namespace cbfd {

struct DaggerConfig {
  double p = 0.8;
  int iterations = 15;
  int n_init_samples = 20;
  int rollouts_per_sample = 1;
  // Every `record_stride`-th visited state is relabeled and stored.
  int record_stride = 10;
  double val_fraction = 0.1;
  std::vector<int> hidden = {32, 32};
  std::optional<std::pair<double, double>> saturation;
  TrainConfig train;
  bool warm_start = false;
  // Disturbance during the pure-expert seed pass and during mixed-policy passes.
  DisturbanceSignal seed_disturbance = DisturbanceSignal::zero();
  DisturbanceSignal collect_disturbance = DisturbanceSignal::zero();
  // Closed-loop evaluation of each trained policy from X0s.
  DisturbanceSignal eval_disturbance = DisturbanceSignal::piecewise_random();
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void validate() const;
};

struct DaggerIteration {
  int index = 0;
  double beta = 1.0;
  std::size_t new_rows = 0;
  std::size_t dataset_size = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  // MSE on the held-out rows of the final aggregated dataset; the selection metric.
  double final_val_mse = 0.0;
  double safety_rate = 0.0;
  double goal_rate = 0.0;
  double safe_and_goal_rate = 0.0;
  std::size_t expert_infeasible_rollouts = 0;
  double max_mixing_error = 0.0;
};

struct DaggerReport {
  std::vector<DaggerIteration> iterations;
  int selected = -1;
  std::vector<Vec> initial_states;
};

struct DaggerResult {
  MlpPolicy policy;
  DaggerReport report;
  Dataset dataset;
};

double dagger_beta(double p, int i);

// Observer called after each iteration with (iteration, trained policy).
using DaggerObserver = std::function<void(const DaggerIteration&, const MlpPolicy&)>;

DaggerResult run_dagger(std::shared_ptr<const Scenario> sc, const ExpertPolicy& expert,
                        const DaggerConfig& cfg, const DaggerObserver& observer = {});

nlohmann::json to_json(const DaggerReport& r);
nlohmann::json to_json(const DaggerConfig& c);

}  // namespace cbfd
