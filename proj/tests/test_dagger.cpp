#include "cbfd/dagger.hpp"
#include "cbfd/io.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace cbfd;
using namespace cbfd::testing;

namespace {

DaggerConfig small_config() {
  DaggerConfig cfg;
  cfg.iterations = 3;
  cfg.n_init_samples = 4;
  cfg.record_stride = 25;
  cfg.train.epochs = 5;
  cfg.threads = 2;
  return cfg;
}

Vec state_of(const Vec& features) { return vec({features[0], features[1], std::atan2(features[2], features[3])}); }

}  // namespace

TEST_CASE("mixing weights") {
  CHECK(dagger_beta(0.8, 3) == doctest::Approx(0.512));
  CHECK(dagger_beta(0.8, 0) == 1.0);
}

TEST_CASE("config validation") {
  DaggerConfig cfg;
  cfg.p = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = DaggerConfig{};
  cfg.record_stride = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("aggregation invariants on a small run") {
  auto sc = std::make_shared<const Scenario>(make_scenario(unicycle_config()));
  const ExpertPolicy expert(sc);
  const DaggerConfig cfg = small_config();

  std::vector<std::size_t> sizes;
  const DaggerResult res = run_dagger(sc, expert, cfg, [&](const DaggerIteration& it, const MlpPolicy&) {
    sizes.push_back(it.dataset_size);
  });
  const DaggerReport& r = res.report;
  REQUIRE(r.iterations.size() == 4);
  CHECK(r.initial_states.size() == 4);
  for (std::size_t i = 0; i < r.iterations.size(); ++i) {
    const auto& it = r.iterations[i];
    CHECK(it.beta == doctest::Approx(i == 0 ? 1.0 : std::pow(0.8, static_cast<double>(i))));
    CHECK(it.max_mixing_error < 1e-12);
    if (i > 0) CHECK(it.dataset_size == r.iterations[i - 1].dataset_size + it.new_rows);
  }
  CHECK(std::is_sorted(sizes.begin(), sizes.end()));
  CHECK(res.dataset.size() == sizes.back());

  // Every stored label is the pure expert output at the stored state.
  for (std::size_t k = 0; k < res.dataset.size(); ++k) {
    const Vec u = expert(state_of(res.dataset.features(k)));
    CHECK(std::abs(u[0] - res.dataset.label(k)[0]) < 1e-6);
  }

  // The returned policy has the lowest error on the final held-out rows.
  double best = INFINITY;
  for (const auto& it : r.iterations) best = std::min(best, it.final_val_mse);
  CHECK(r.iterations[static_cast<std::size_t>(r.selected)].final_val_mse == best);
  const auto [xv, yv] = res.dataset.matrices(Dataset::Split::Val);
  CHECK(res.policy.loss(xv, yv) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("seed pass stores exact expert labels") {
  auto sc = std::make_shared<const Scenario>(make_scenario(unicycle_config()));
  const ExpertPolicy expert(sc);
  DaggerConfig cfg = small_config();
  cfg.iterations = 1;
  const DaggerResult res = run_dagger(sc, expert, cfg);
  REQUIRE(res.report.iterations[0].new_rows > 0);
  CHECK(res.report.iterations[0].expert_infeasible_rollouts == 0);
  // The first row of the first seed rollout is its initial state.
  const Vec& x0 = res.report.initial_states[0];
  CHECK(res.dataset.features(0) == apply_feature_map(FeatureMapId::UnicycleSinCos, x0));
  CHECK(res.dataset.label(0) == expert(x0));
}

TEST_CASE("reruns are identical") {
  auto sc = std::make_shared<const Scenario>(make_scenario(unicycle_config()));
  const ExpertPolicy expert(sc);
  DaggerConfig cfg = small_config();
  const DaggerResult a = run_dagger(sc, expert, cfg);
  cfg.threads = 1;
  const DaggerResult b = run_dagger(sc, expert, cfg);
  CHECK(to_json(a.report).dump() == to_json(b.report).dump());
  CHECK(to_json(a.policy).dump() == to_json(b.policy).dump());
}

TEST_CASE("expert failure on the seed pass") {
  ScenarioConfig sc_cfg = unicycle_config();
  sc_cfg.u_box = Box(vec({-0.01}), vec({0.01}));
  auto sc = std::make_shared<const Scenario>(make_scenario(sc_cfg));
  const ExpertPolicy expert(sc);
  DaggerConfig cfg = small_config();
  cfg.n_init_samples = 20;
  CHECK_THROWS_AS(run_dagger(sc, expert, cfg), ExpertFailure);
}
