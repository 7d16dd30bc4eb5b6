#include "cbfd/dagger.hpp"

#include "cbfd/rng.hpp"

#include <cmath>
#include <limits>

namespace cbfd {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitStates = 1;
constexpr std::uint64_t kRollouts = 2;
constexpr std::uint64_t kInit = 3;
constexpr std::uint64_t kTrain = 4;
constexpr std::uint64_t kEval = 5;
constexpr std::uint64_t kSplit = 6;

struct Collected {
  Trajectory traj;
  std::vector<Vec> states;
  std::vector<Vec> labels;
  double mixing_error = 0.0;
};

std::uint64_t stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return derive_seed(derive_seed(seed, tag), index);
}

std::vector<Collected> collect(const Scenario& sc, const ExpertPolicy& expert,
                               const MlpPolicy* learner, double beta, const DaggerConfig& cfg,
                               const std::vector<RolloutJob>& jobs) {
  std::vector<Collected> out(jobs.size());
  parallel_for(
      jobs.size(),
      [&](std::size_t j) {
        Collected& c = out[j];
        // Labels are recorded per executed step, so labels[k] matches traj row k.
        std::vector<Vec> step_labels;
        Policy mixed = [&](const Vec& x) -> Vec {
          Vec label = expert(x);
          step_labels.push_back(label);
          if (!learner) return label;
          return beta * label + (1.0 - beta) * learner->act(x);
        };
        RolloutOptions opts;
        opts.x0 = jobs[j].x0;
        opts.log_psi = false;
        c.traj = rollout(sc, mixed, learner ? cfg.collect_disturbance : cfg.seed_disturbance, jobs[j].seed, opts);

        const std::size_t executed = step_labels.size();
        for (std::size_t k = 0; k < executed; ++k) {
          if (learner) {
            const Vec expect = beta * step_labels[k] + (1.0 - beta) * learner->act(c.traj.states[k]);
            c.mixing_error = std::max(c.mixing_error, (c.traj.controls[k] - expect).cwiseAbs().maxCoeff());
          }
          if (k % static_cast<std::size_t>(cfg.record_stride) == 0) {
            c.states.push_back(c.traj.states[k]);
            c.labels.push_back(step_labels[k]);
          }
        }
      },
      cfg.threads);
  return out;
}

}  // namespace

void DaggerConfig::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("dagger: p must lie in (0, 1)");
  if (iterations < 1) throw InvalidArgument("dagger: iterations must be >= 1");
  if (n_init_samples < 1) throw InvalidArgument("dagger: n_init_samples must be >= 1");
  if (rollouts_per_sample < 1) throw InvalidArgument("dagger: rollouts_per_sample must be >= 1");
  if (record_stride < 1) throw InvalidArgument("dagger: record_stride must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw InvalidArgument("dagger: hidden widths must be positive");
  }
}

double dagger_beta(double p, int i) { return std::pow(p, i); }

DaggerResult run_dagger(std::shared_ptr<const Scenario> scp, const ExpertPolicy& expert,
                        const DaggerConfig& cfg, const DaggerObserver& observer) {
  cfg.validate();
  const Scenario& sc = *scp;
  const FeatureMapId fmap = sc.config.feature_map;
  std::vector<int> dims{feature_dim(fmap, sc.dynamics.n)};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(sc.dynamics.mu);

  DaggerResult result;
  DaggerReport& report = result.report;
  for (int s = 0; s < cfg.n_init_samples; ++s) {
    report.initial_states.push_back(sample_initial_state(sc, stream(cfg.seed, kInitStates, s)));
  }

  auto jobs_for = [&](int iteration) {
    std::vector<RolloutJob> jobs;
    for (int s = 0; s < cfg.n_init_samples; ++s) {
      for (int r = 0; r < cfg.rollouts_per_sample; ++r) {
        const auto idx = static_cast<std::uint64_t>(iteration) * 1000003ULL +
                         static_cast<std::uint64_t>(s * cfg.rollouts_per_sample + r);
        jobs.push_back({stream(cfg.seed, kRollouts, idx), report.initial_states[s]});
      }
    }
    return jobs;
  };

  Dataset& data = result.dataset;
  data = Dataset(dims.front(), dims.back(), cfg.val_fraction, derive_seed(cfg.seed, kSplit));

  std::vector<MlpPolicy> trained;
  trained.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  const MlpPolicy* learner = nullptr;

  for (int i = 0; i <= cfg.iterations; ++i) {
    DaggerIteration it;
    it.index = i;
    it.beta = i == 0 ? 1.0 : dagger_beta(cfg.p, i);

    const auto collected = collect(sc, expert, i == 0 ? nullptr : learner, it.beta, cfg, jobs_for(i));
    for (const auto& c : collected) {
      if (c.traj.termination == Termination::ExpertInfeasible) {
        ++it.expert_infeasible_rollouts;
        if (i == 0) {
          throw ExpertFailure("expert infeasible on a seed rollout: " + c.traj.failure_message);
        }
      }
      it.max_mixing_error = std::max(it.max_mixing_error, c.mixing_error);
      for (std::size_t k = 0; k < c.states.size(); ++k) {
        data.add(apply_feature_map(fmap, c.states[k]), c.labels[k]);
        ++it.new_rows;
      }
    }
    it.dataset_size = data.size();

    MlpPolicy net = (cfg.warm_start && !trained.empty())
                        ? trained.back()
                        : MlpPolicy(dims, stream(cfg.seed, kInit, static_cast<std::uint64_t>(i)), fmap);
    net.set_saturation(cfg.saturation);
    TrainConfig tc = cfg.train;
    tc.seed = stream(cfg.seed ^ cfg.train.seed, kTrain, static_cast<std::uint64_t>(i));
    const auto history = train(net, data, tc);
    if (!history.empty()) {
      it.train_mse = history.back().train_mse;
      it.val_mse = history.back().val_mse;
    } else {
      const auto [xt, yt] = data.matrices(Dataset::Split::Train);
      const auto [xv, yv] = data.matrices(Dataset::Split::Val);
      it.train_mse = net.loss(xt, yt);
      it.val_mse = xv.cols() ? net.loss(xv, yv) : it.train_mse;
    }

    // Closed-loop evaluation of the freshly trained learner from X0s.
    std::vector<RolloutJob> eval_jobs;
    for (int s = 0; s < cfg.n_init_samples; ++s) {
      eval_jobs.push_back({stream(cfg.seed, kEval, static_cast<std::uint64_t>(i) * 1000003ULL + s),
                           report.initial_states[s]});
    }
    const Policy learner_policy = net.as_policy();
    const auto evals = run_rollouts(
        sc, [&](std::size_t) { return learner_policy; }, cfg.eval_disturbance, eval_jobs, false,
        cfg.threads);
    std::size_t safe = 0, goal = 0, both = 0;
    for (const auto& t : evals) {
      safe += t.safe();
      goal += t.reached_goal();
      both += t.safe() && t.reached_goal();
    }
    const double ne = static_cast<double>(evals.size());
    it.safety_rate = safe / ne;
    it.goal_rate = goal / ne;
    it.safe_and_goal_rate = both / ne;

    net.training_meta = {{"iteration", i},
                         {"beta", it.beta},
                         {"dataset_size", it.dataset_size},
                         {"train_mse", it.train_mse},
                         {"val_mse", it.val_mse}};
    trained.push_back(std::move(net));
    learner = &trained.back();
    report.iterations.push_back(it);
    if (observer) observer(it, trained.back());
  }

  // Each iteration validates on a split that grows with the states it adds, so
  // the per-iteration numbers are not comparable. Every candidate is scored on
  // the final held-out rows instead, none of which any candidate trained on.
  const auto [xv, yv] = data.matrices(Dataset::Split::Val);
  const auto [xt, yt] = data.matrices(Dataset::Split::Train);
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trained.size(); ++i) {
    auto& it = report.iterations[i];
    it.final_val_mse = xv.cols() ? trained[i].loss(xv, yv) : trained[i].loss(xt, yt);
    trained[i].training_meta["final_val_mse"] = it.final_val_mse;
    if (it.final_val_mse < best_val) {
      best_val = it.final_val_mse;
      report.selected = static_cast<int>(i);
    }
  }

  result.policy = trained[static_cast<std::size_t>(report.selected)];
  return result;
}

nlohmann::json to_json(const DaggerConfig& c) {
  auto dist = [](const DisturbanceSignal& s) {
    switch (s.kind) {
      case DisturbanceSignal::Kind::Zero: return nlohmann::json{{"kind", "zero"}};
      case DisturbanceSignal::Kind::Constant:
        return nlohmann::json{{"kind", "constant"},
                              {"value", std::vector<double>(s.value.data(), s.value.data() + s.value.size())}};
      case DisturbanceSignal::Kind::PiecewiseRandom:
        return nlohmann::json{{"kind", "piecewise_random"}, {"hold_steps", s.hold_steps}};
    }
    return nlohmann::json{};
  };
  nlohmann::json j{{"p", c.p},
                   {"iterations", c.iterations},
                   {"n_init_samples", c.n_init_samples},
                   {"rollouts_per_sample", c.rollouts_per_sample},
                   {"record_stride", c.record_stride},
                   {"val_fraction", c.val_fraction},
                   {"hidden", c.hidden},
                   {"warm_start", c.warm_start},
                   {"seed_disturbance", dist(c.seed_disturbance)},
                   {"collect_disturbance", dist(c.collect_disturbance)},
                   {"eval_disturbance", dist(c.eval_disturbance)},
                   {"seed", c.seed},
                   {"train",
                    {{"epochs", c.train.epochs},
                     {"batch", c.train.batch},
                     {"lr", c.train.lr},
                     {"beta1", c.train.beta1},
                     {"beta2", c.train.beta2},
                     {"eps", c.train.eps},
                     {"final_lr_fraction", c.train.final_lr_fraction},
                     {"seed", c.train.seed}}}};
  j["saturation"] = c.saturation ? nlohmann::json::array({c.saturation->first, c.saturation->second})
                                 : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const DaggerReport& r) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    iters.push_back({{"index", it.index},
                     {"beta", it.beta},
                     {"new_rows", it.new_rows},
                     {"dataset_size", it.dataset_size},
                     {"train_mse", it.train_mse},
                     {"val_mse", it.val_mse},
                     {"final_val_mse", it.final_val_mse},
                     {"safety_rate", it.safety_rate},
                     {"goal_rate", it.goal_rate},
                     {"safe_and_goal_rate", it.safe_and_goal_rate},
                     {"expert_infeasible_rollouts", it.expert_infeasible_rollouts},
                     {"max_mixing_error", it.max_mixing_error}});
  }
  nlohmann::json x0 = nlohmann::json::array();
  for (const auto& x : r.initial_states) x0.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  return {{"iterations", iters}, {"selected", r.selected}, {"initial_states", x0}};
}

}  // namespace cbfd
