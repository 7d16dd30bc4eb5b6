#pragma once

// Derivative and assembly self-checks over sampled states of a scenario.

#include "cbfd/sim.hpp"

#include <json.hpp>

namespace cbfd {

struct CheckTolerances {
  double derivative = 1e-5;
  double separability = kSeparabilityTol;
  double chain = 1e-4;
};

struct CheckItem {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::string detail;
};

struct CheckReport {
  std::vector<CheckItem> items;
  int states_checked = 0;
  bool passed() const;
};

CheckReport check_scenario(const Scenario& sc, int n_states = 200, std::uint64_t seed = 0,
                           const CheckTolerances& tol = {});

nlohmann::json to_json(const CheckReport& r);

}  // namespace cbfd
