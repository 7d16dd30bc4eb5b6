// cbfd: robust HOCBF expert, simulator and DAgger training from the command line.

#include "cbfd/check.hpp"
#include "cbfd/dagger.hpp"
#include "cbfd/io.hpp"
#include "cbfd/rng.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cbfd;

namespace {

constexpr double kSafetySlack = 1e-3;

struct Common {
  std::string scenario = "unicycle";
  std::uint64_t seed = 0;
  std::string out = "out";
  std::optional<double> dt;
  std::optional<double> t_max;
  unsigned threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "Builtin scenario name or scenario JSON file")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
  cmd->add_option("--dt", c.dt, "Override the integration step (s)");
  cmd->add_option("--tmax", c.t_max, "Override the horizon (s)");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = hardware concurrency)");
}

ScenarioConfig resolve_config(const Common& c) {
  ScenarioConfig cfg = load_scenario_config(c.scenario);
  if (c.dt) cfg.dt = *c.dt;
  if (c.t_max) cfg.t_max = *c.t_max;
  return cfg;
}

// Writes the manifest before anything else lands in the output directory.
void write_manifest(const std::string& command, const Common& c, const ScenarioConfig& cfg,
                    const json& options) {
  fs::create_directories(c.out);
  const json inputs{{"command", command},
                    {"scenario", c.scenario},
                    {"scenario_config", to_json(cfg)},
                    {"seed", c.seed},
                    {"options", options}};
  json manifest = inputs;
  manifest["output_directory"] = c.out;
  manifest["tool_version"] = CBFD_VERSION;
  manifest["config_hash"] = fnv1a_hex(inputs.dump());
  write_json(fs::path(c.out) / "manifest.json", manifest);
  write_json(fs::path(c.out) / "scenario.json", to_json(cfg));
}

json summarize(const Scenario& sc, const std::vector<Trajectory>& trajs) {
  json rows = json::array();
  std::size_t safe = 0, reach = 0, both = 0, slack_safe = 0;
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const Trajectory& t = trajs[k];
    const auto mins = t.min_barrier_values();
    json per = json::object();
    for (std::size_t b = 0; b < mins.size(); ++b) per[sc.barriers[b].id] = mins[b];
    const bool s = t.safe();
    safe += s;
    slack_safe += t.min_barrier_value() >= -kSafetySlack;
    reach += t.reached_goal();
    both += s && t.reached_goal();
    rows.push_back({{"index", k},
                    {"termination", to_string(t.termination)},
                    {"steps", t.size() ? t.size() - 1 : 0},
                    {"final_time", t.times.empty() ? 0.0 : t.times.back()},
                    {"min_h", t.min_barrier_value()},
                    {"min_h_per_barrier", per},
                    {"safe", s},
                    {"reached_goal", t.reached_goal()},
                    {"failure", t.failure_message}});
  }
  const double n = std::max<std::size_t>(1, trajs.size());
  return {{"rollouts", rows},
          {"count", trajs.size()},
          {"safe_rate", safe / n},
          {"safe_within_slack_rate", slack_safe / n},
          {"safety_slack", kSafetySlack},
          {"reach_rate", reach / n},
          {"safe_and_reach_rate", both / n}};
}

void write_rollouts(const fs::path& out, const Scenario& sc, const std::vector<Trajectory>& trajs) {
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    write_trajectory_csv(out / fmt::format("rollout_{:03d}.csv", k), sc, trajs[k]);
  }
  std::ofstream svg(out / "trajectories.svg", std::ios::binary);
  svg << render_svg(sc, trajs);
}

std::vector<RolloutJob> make_jobs(std::uint64_t seed, int n) {
  std::vector<RolloutJob> jobs;
  for (int k = 0; k < n; ++k) jobs.push_back({derive_seed(seed, static_cast<std::uint64_t>(k)), std::nullopt});
  return jobs;
}

int exit_for_rate(const json& summary, std::optional<double> required) {
  if (required && summary["safe_and_reach_rate"].get<double>() < *required) {
    std::cerr << fmt::format("safe-and-reach rate {} below required {}\n",
                             summary["safe_and_reach_rate"].get<double>(), *required);
    return 1;
  }
  return 0;
}

int cmd_check(const Common& c, int states) {
  const ScenarioConfig cfg = resolve_config(c);
  write_manifest("check", c, cfg, {{"states", states}});
  const Scenario sc = make_scenario(cfg);
  const CheckReport report = check_scenario(sc, states, c.seed);
  write_json(fs::path(c.out) / "check.json", to_json(report));
  for (const auto& item : report.items) {
    std::cout << fmt::format("{:<24} worst {:<12.3e} tol {:<8.1e} {}\n", item.name, item.worst, item.tolerance,
                             item.passed ? "PASS" : "FAIL");
  }
  std::cout << (report.passed() ? "check passed\n" : "check FAILED\n");
  return report.passed() ? 0 : 1;
}

int cmd_expert_run(const Common& c, int rollouts, const std::string& dist_s, const std::string& fallback_s,
                   bool diagnostics, std::optional<double> require) {
  const ScenarioConfig cfg = resolve_config(c);
  const InfeasibleFallback fallback = fallback_from_string(fallback_s);
  write_manifest("expert-run", c, cfg,
                 {{"rollouts", rollouts}, {"dist", dist_s}, {"fallback", fallback_s}, {"diagnostics", diagnostics}});
  auto sc = std::make_shared<const Scenario>(make_scenario(cfg));
  const DisturbanceSignal dist = disturbance_from_string(dist_s, sc->dynamics.l);
  const ExpertPolicy expert(sc, fallback);

  std::vector<std::vector<json>> diag(static_cast<std::size_t>(rollouts));
  auto make_policy = [&](std::size_t k) -> Policy {
    if (!diagnostics) return expert.as_policy();
    return [&, k](const Vec& x) {
      auto [u, d] = expert.control(x);
      json rec = to_json(d);
      rec["step"] = diag[k].size();
      rec["x"] = std::vector<double>(x.data(), x.data() + x.size());
      rec["u"] = std::vector<double>(u.data(), u.data() + u.size());
      diag[k].push_back(std::move(rec));
      return u;
    };
  };
  const auto trajs = run_rollouts(*sc, make_policy, dist, make_jobs(c.seed, rollouts), true, c.threads);
  const fs::path out(c.out);
  write_rollouts(out, *sc, trajs);
  if (diagnostics) {
    for (std::size_t k = 0; k < diag.size(); ++k) {
      std::ofstream os(out / fmt::format("diagnostics_{:03d}.jsonl", k), std::ios::binary);
      for (const auto& rec : diag[k]) os << rec.dump() << '\n';
    }
  }
  json summary = summarize(*sc, trajs);
  summary["expert"] = {{"solves", expert.stats().solves.load()},
                       {"infeasible", expert.stats().infeasible.load()},
                       {"fallbacks", expert.stats().fallbacks.load()},
                       {"fallback", fallback_s}};
  write_json(out / "summary.json", summary);
  std::cout << fmt::format("{} rollouts: safe {:.3f}, reach {:.3f}, safe-and-reach {:.3f}\n", trajs.size(),
                           summary["safe_rate"].get<double>(), summary["reach_rate"].get<double>(),
                           summary["safe_and_reach_rate"].get<double>());
  return exit_for_rate(summary, require);
}

int cmd_dagger(const Common& c, DaggerConfig dc, const std::string& fallback_s, bool dump_dataset) {
  const ScenarioConfig cfg = resolve_config(c);
  dc.seed = c.seed;
  dc.threads = c.threads;
  dc.validate();
  write_manifest("dagger", c, cfg, {{"dagger", to_json(dc)}, {"fallback", fallback_s}});
  auto sc = std::make_shared<const Scenario>(make_scenario(cfg));
  const ExpertPolicy expert(sc, fallback_from_string(fallback_s));

  const auto start = std::chrono::steady_clock::now();
  const DaggerResult res = run_dagger(sc, expert, dc, [&](const DaggerIteration& it, const MlpPolicy&) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << fmt::format("iter {:2d}  beta {:.4f}  rows {:6d}  train {:.5f}  val {:.5f}  closed-loop {:.2f}  [{:.0f}s]\n",
                             it.index, it.beta, it.dataset_size, it.train_mse, it.val_mse, it.safe_and_goal_rate,
                             secs);
  });

  const fs::path out(c.out);
  MlpPolicy model = res.policy;
  model.training_meta["selected_iteration"] = res.report.selected;
  model.training_meta["dagger_seed"] = c.seed;
  write_json(out / "model.json", to_json(model));
  json report = to_json(res.report);
  report["config"] = to_json(dc);
  report["scenario"] = to_json(cfg);
  write_json(out / "report.json", report);
  if (dump_dataset) write_dataset_csv(out / "dataset.csv", res.dataset);
  const auto& sel = res.report.iterations[static_cast<std::size_t>(res.report.selected)];
  std::cout << fmt::format("selected iteration {} (val mse {:.5f}, {} rows)\n", res.report.selected, sel.val_mse,
                           sel.dataset_size);
  return 0;
}

int cmd_nn_run(const Common& c, const std::string& model_path, int rollouts, const std::string& dist_s,
               std::optional<double> require) {
  const ScenarioConfig cfg = resolve_config(c);
  write_manifest("nn-run", c, cfg, {{"model", model_path}, {"rollouts", rollouts}, {"dist", dist_s}});
  const Scenario sc = make_scenario(cfg);
  const MlpPolicy net = mlp_from_json(read_json(model_path));
  if (net.layer_dims().front() != feature_dim(net.feature_map(), sc.dynamics.n) ||
      net.layer_dims().back() != sc.dynamics.mu) {
    throw DimMismatch("model dimensions do not match the scenario");
  }
  const DisturbanceSignal dist = disturbance_from_string(dist_s, sc.dynamics.l);
  const Policy policy = net.as_policy();
  const auto trajs = run_rollouts(
      sc, [&](std::size_t) { return policy; }, dist, make_jobs(c.seed, rollouts), true, c.threads);
  const fs::path out(c.out);
  write_rollouts(out, sc, trajs);
  const json summary = summarize(sc, trajs);
  write_json(out / "summary.json", summary);
  std::cout << fmt::format("{} rollouts: safe {:.3f}, reach {:.3f}, safe-and-reach {:.3f}\n", trajs.size(),
                           summary["safe_rate"].get<double>(), summary["reach_rate"].get<double>(),
                           summary["safe_and_reach_rate"].get<double>());
  return exit_for_rate(summary, require);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust high-order control barrier function expert and DAgger policy distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CBFD_VERSION);

  Common common;
  std::string dist = "zero";
  std::string fallback = "error";
  int rollouts = 20;
  bool diagnostics = false;
  std::optional<double> require;

  auto* check = app.add_subcommand("check", "Finite-difference and separability checks over sampled states");
  add_common(check, common);
  int states = 200;
  check->add_option("--states", states, "Number of sampled states")->capture_default_str();

  auto* expert = app.add_subcommand("expert-run", "Roll out the QP expert");
  add_common(expert, common);
  expert->add_option("--rollouts", rollouts, "Number of rollouts")->capture_default_str();
  expert->add_option("--dist", dist, "zero | const:<v> | random | random:<hold_steps>")->capture_default_str();
  expert->add_option("--fallback", fallback, "error | best_effort")->capture_default_str();
  expert->add_flag("--diagnostics", diagnostics, "Write per-step expert diagnostics as JSON lines");
  expert->add_option("--require-rate", require, "Exit 1 if the safe-and-reach rate is below this");

  auto* dagger = app.add_subcommand("dagger", "Train an MLP policy from the expert with DAgger");
  add_common(dagger, common);
  DaggerConfig dc;
  bool dump_dataset = false;
  std::string train_dist = "zero";
  dagger->add_option("--p", dc.p, "Mixing base, beta = p^i")->capture_default_str();
  dagger->add_option("--iters", dc.iterations, "Maximum DAgger iterations N")->capture_default_str();
  dagger->add_option("--rollouts", dc.n_init_samples, "Number of sampled initial states")->capture_default_str();
  dagger->add_option("--epochs", dc.train.epochs, "Training epochs per iteration")->capture_default_str();
  dagger->add_option("--batch", dc.train.batch, "Minibatch size")->capture_default_str();
  dagger->add_option("--lr", dc.train.lr, "Adam learning rate")->capture_default_str();
  dagger->add_option("--stride", dc.record_stride, "Record every n-th visited state")->capture_default_str();
  dagger->add_option("--hidden", dc.hidden, "Hidden layer widths")->capture_default_str();
  dagger->add_option("--dist", train_dist, "Disturbance while collecting data")->capture_default_str();
  dagger->add_option("--fallback", fallback, "error | best_effort")->capture_default_str();
  dagger->add_flag("--warm-start", dc.warm_start, "Continue from the previous iteration's weights");
  dagger->add_flag("--dataset", dump_dataset, "Also write the aggregated dataset as CSV");

  auto* nn = app.add_subcommand("nn-run", "Roll out a trained policy");
  add_common(nn, common);
  std::string model = "out/model.json";
  nn->add_option("--model", model, "Model JSON")->capture_default_str();
  nn->add_option("--rollouts", rollouts, "Number of rollouts")->capture_default_str();
  nn->add_option("--dist", dist, "zero | const:<v> | random | random:<hold_steps>")->capture_default_str();
  nn->add_option("--require-rate", require, "Exit 1 if the safe-and-reach rate is below this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*check) return cmd_check(common, states);
    if (*expert) return cmd_expert_run(common, rollouts, dist, fallback, diagnostics, require);
    if (*dagger) {
      const auto sc = make_scenario(resolve_config(common));
      dc.collect_disturbance = disturbance_from_string(train_dist, sc.dynamics.l);
      return cmd_dagger(common, dc, fallback, dump_dataset);
    }
    if (*nn) return cmd_nn_run(common, model, rollouts, dist, require);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DimMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
