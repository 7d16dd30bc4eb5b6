#include "cbfd/sim.hpp"

#include "cbfd/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

namespace cbfd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

BarrierSpec disk_barrier(std::string id, const Vec& center, double threshold, int n,
                         std::vector<double> gains, int degree) {
  // h(x) = |x[0:2] - c|^2 - threshold
  BarrierSpec b;
  b.id = std::move(id);
  b.degree = degree;
  b.gains = std::move(gains);
  const double cx = center[0];
  const double cy = center[1];
  b.h = [=](const Vec& x) {
    const double dx = x[0] - cx;
    const double dy = x[1] - cy;
    return dx * dx + dy * dy - threshold;
  };
  b.grad_h = [=](const Vec& x) {
    Vec g = Vec::Zero(n);
    g[0] = 2.0 * (x[0] - cx);
    g[1] = 2.0 * (x[1] - cy);
    return g;
  };
  b.hess_h = [=](const Vec&) {
    Mat h = Mat::Zero(n, n);
    h(0, 0) = 2.0;
    h(1, 1) = 2.0;
    return h;
  };
  return b;
}

Scenario make_unicycle(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.name = "unicycle";
  sc.config = cfg;
  const double v = cfg.speed;

  DynamicsModel& d = sc.dynamics;
  d.n = 3;
  d.mu = 1;
  d.l = 1;
  d.f = [v](const Vec& x) {
    Vec r(3);
    r << v * std::cos(x[2]), v * std::sin(x[2]), 0.0;
    return r;
  };
  d.g = [](const Vec&) {
    Mat g = Mat::Zero(3, 1);
    g(2, 0) = 1.0;
    return g;
  };
  d.M = Mat::Zero(3, 1);
  d.M(0, 0) = 1.0;
  d.M(1, 0) = 1.0;
  d.jac_f = [v](const Vec& x) {
    Mat j = Mat::Zero(3, 3);
    j(0, 2) = -v * std::sin(x[2]);
    j(1, 2) = v * std::cos(x[2]);
    return j;
  };
  d.u_box = cfg.u_box;

  if (cfg.gains.size() != 2) throw InvalidArgument("unicycle: gains must have two entries");
  for (std::size_t i = 0; i < cfg.obstacles.size(); ++i) {
    const Obstacle& o = cfg.obstacles[i];
    if (o.center.size() != 2) throw InvalidArgument("unicycle: obstacle centers are 2-D");
    sc.barriers.push_back(
        disk_barrier("h" + std::to_string(i + 1), o.center, o.threshold, 3, cfg.gains, 2));
  }

  if (!cfg.goal) throw InvalidArgument("unicycle: goal required");
  const double gx = cfg.goal->center[0];
  const double gy = cfg.goal->center[1];
  const double k = cfg.heading_gain;
  sc.u_ref = [=](const Vec& x) {
    const double theta_ref = std::atan2(gy - x[1], gx - x[0]);
    return Vec::Constant(1, k * wrap_angle(theta_ref - x[2]));
  };
  return sc;
}

Scenario make_example1(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.name = "example1";
  sc.config = cfg;

  DynamicsModel& d = sc.dynamics;
  d.n = 2;
  d.mu = 1;
  d.l = 1;
  d.f = [](const Vec& x) {
    Vec r(2);
    r << x[1], 0.0;
    return r;
  };
  d.g = [](const Vec&) {
    Mat g = Mat::Zero(2, 1);
    g(1, 0) = 1.0;
    return g;
  };
  d.M = Mat::Zero(2, 1);
  d.M(0, 0) = 1.0;
  d.jac_f = [](const Vec&) {
    Mat j = Mat::Zero(2, 2);
    j(0, 1) = 1.0;
    return j;
  };
  d.u_box = cfg.u_box;

  if (cfg.gains.size() != 2) throw InvalidArgument("example1: gains must have two entries");
  BarrierSpec b;
  b.id = "h1";
  b.degree = 2;
  b.gains = cfg.gains;
  b.h = [](const Vec& x) { return x[0] * x[0] - 1.0; };
  b.grad_h = [](const Vec& x) {
    Vec g(2);
    g << 2.0 * x[0], 0.0;
    return g;
  };
  b.hess_h = [](const Vec&) {
    Mat h = Mat::Zero(2, 2);
    h(0, 0) = 2.0;
    return h;
  };
  sc.barriers.push_back(std::move(b));

  const Vec u0 = cfg.u_ref_constant.size() ? cfg.u_ref_constant : Vec::Zero(1);
  if (u0.size() != 1) throw InvalidArgument("example1: u_ref_constant must be scalar");
  sc.u_ref = [u0](const Vec&) { return u0; };
  return sc;
}

}  // namespace

std::string to_string(FeatureMapId id) {
  return id == FeatureMapId::UnicycleSinCos ? "unicycle_sincos" : "identity";
}

FeatureMapId feature_map_from_string(const std::string& s) {
  if (s == "identity") return FeatureMapId::Identity;
  if (s == "unicycle_sincos") return FeatureMapId::UnicycleSinCos;
  throw InvalidArgument("unknown feature map '" + s + "'");
}

bool GoalSet::contains(const Vec& x) const {
  double d2 = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double d = x[coords[i]] - center[static_cast<Eigen::Index>(i)];
    d2 += d * d;
  }
  return d2 < threshold;
}

void Scenario::validate() const {
  dynamics.validate();
  if (!(config.dt > 0.0)) throw InvalidArgument("scenario: dt must be > 0");
  if (!(config.t_max >= config.dt)) throw InvalidArgument("scenario: t_max must be >= dt");
  config.dist_box.validate();
  config.x0_box.validate();
  if (config.dist_box.dim() != dynamics.l) throw InvalidArgument("scenario: dist_box dimension");
  if (config.x0_box.dim() != dynamics.n) throw InvalidArgument("scenario: x0_box dimension");
  if (config.goal) {
    if (config.goal->coords.size() != static_cast<std::size_t>(config.goal->center.size())) {
      throw InvalidArgument("scenario: goal coords/center mismatch");
    }
    for (int c : config.goal->coords) {
      if (c < 0 || c >= dynamics.n) throw InvalidArgument("scenario: goal coordinate out of range");
    }
  }
  for (const auto& b : barriers) b.validate();
  if (!u_ref) throw InvalidArgument("scenario: missing u_ref");
}

Scenario make_scenario(const ScenarioConfig& cfg) {
  Scenario sc;
  if (cfg.builtin == "unicycle") {
    sc = make_unicycle(cfg);
  } else if (cfg.builtin == "example1") {
    sc = make_example1(cfg);
  } else {
    throw InvalidArgument("unknown builtin scenario '" + cfg.builtin + "'");
  }
  sc.validate();
  return sc;
}

ScenarioConfig unicycle_config() {
  constexpr double pi = std::numbers::pi;
  ScenarioConfig c;
  c.builtin = "unicycle";
  c.dt = 0.01;
  c.t_max = 30.0;
  c.dist_box = Box::symmetric(1, 0.1);
  c.x0_box = Box(Vec{{8.0, 5.0, -pi}}, Vec{{9.0, 11.0, pi}});
  c.goal = GoalSet{{0, 1}, Vec{{1.0, 1.0}}, 0.3};
  c.gains = {2.0, 2.0};
  c.obstacles = {
      {Vec{{4.0, 2.5}}, 0.7}, {Vec{{5.0, 6.5}}, 0.5}, {Vec{{7.0, 4.75}}, 0.4},
      {Vec{{2.5, 5.0}}, 0.3}, {Vec{{7.5, 2.5}}, 0.5},
  };
  c.speed = 1.0;
  c.heading_gain = 1.0;
  c.feature_map = FeatureMapId::UnicycleSinCos;
  return c;
}

ScenarioConfig example1_config(double w_lo, double w_hi) {
  ScenarioConfig c;
  c.builtin = "example1";
  c.dt = 0.01;
  c.t_max = 5.0;
  c.dist_box = Box(Vec::Constant(1, w_lo), Vec::Constant(1, w_hi));
  c.x0_box = Box(Vec{{1.5, 0.0}}, Vec{{2.5, 1.0}});
  c.gains = {1.0, 1.0};
  c.u_ref_constant = Vec::Zero(1);
  c.feature_map = FeatureMapId::Identity;
  return c;
}

BundledScenarios bundled_scenarios() {
  return {make_scenario(example1_config()), make_scenario(unicycle_config())};
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  if (r <= -pi) r += 2.0 * pi;
  return r;
}

Vec rk4_step(const DynamicsModel& dyn, const Vec& x, const Vec& u, const Vec& w, double dt) {
  const Vec k1 = dyn.rate(x, u, w);
  const Vec k2 = dyn.rate(x + 0.5 * dt * k1, u, w);
  const Vec k3 = dyn.rate(x + 0.5 * dt * k2, u, w);
  const Vec k4 = dyn.rate(x + dt * k3, u, w);
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalError("rk4_step: non-finite state");
  return next;
}

DisturbanceGenerator::DisturbanceGenerator(const DisturbanceSignal& sig, const DisturbanceBox& box,
                                           std::uint64_t seed)
    : sig_(sig), box_(box), seed_(seed) {
  if (sig_.kind == DisturbanceSignal::Kind::Constant && !box_.contains(sig_.value)) {
    throw InvalidArgument("constant disturbance outside the disturbance box");
  }
  if (sig_.kind == DisturbanceSignal::Kind::PiecewiseRandom && sig_.hold_steps < 1) {
    throw InvalidArgument("hold_steps must be >= 1");
  }
}

Vec DisturbanceGenerator::operator()(long step) {
  switch (sig_.kind) {
    case DisturbanceSignal::Kind::Zero:
      return box_.clamp(Vec::Zero(box_.dim()));
    case DisturbanceSignal::Kind::Constant:
      return sig_.value;
    case DisturbanceSignal::Kind::PiecewiseRandom: {
      const long block = step / sig_.hold_steps;
      if (block != held_block_) {
        Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(block)));
        held_ = Vec(box_.dim());
        for (int i = 0; i < box_.dim(); ++i) held_[i] = rng.uniform(box_.lo[i], box_.hi[i]);
        held_block_ = block;
      }
      return held_;
    }
  }
  return Vec::Zero(box_.dim());
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::GoalReached: return "goal_reached";
    case Termination::Horizon: return "horizon";
    case Termination::UnsafeEntered: return "unsafe_entered";
    case Termination::ExpertInfeasible: return "expert_infeasible";
  }
  return "unknown";
}

std::vector<double> Trajectory::min_barrier_values() const {
  if (psi.empty()) return {};
  std::vector<double> out(psi.front().size(), std::numeric_limits<double>::infinity());
  for (const auto& row : psi) {
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = std::min(out[i], row[i].psi0);
  }
  return out;
}

double Trajectory::min_barrier_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : min_barrier_values()) m = std::min(m, v);
  return m;
}

Vec sample_initial_state(const Scenario& sc, std::uint64_t seed) {
  Rng rng(seed);
  const Box& b = sc.config.x0_box;
  Vec x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x[i] = rng.uniform(b.lo[i], b.hi[i]);
  return x;
}

Trajectory rollout(const Scenario& sc, const Policy& policy, const DisturbanceSignal& dist,
                   std::uint64_t seed, const RolloutOptions& opts) {
  const DynamicsModel& dyn = sc.dynamics;
  Vec x = opts.x0 ? *opts.x0 : sample_initial_state(sc, derive_seed(seed, 0));
  if (x.size() != dyn.n) throw DimMismatch("rollout: initial state dimension");
  DisturbanceGenerator gen(dist, sc.dist_box(), derive_seed(seed, 1));
  const double dt = sc.dt();
  const long steps = std::max(1L, std::lround(sc.t_max() / dt));
  const Vec nan_u = Vec::Constant(dyn.mu, kNaN);
  const Vec nan_w = Vec::Constant(dyn.l, kNaN);

  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);

  auto terminal_row = [&](Termination why) {
    std::vector<PsiChain> row;
    for (const auto& b : sc.barriers) {
      PsiChain c;
      c.psi0 = b.h(x);
      c.psi1 = kNaN;
      if (b.degree == 2) c.psi2 = kNaN;
      row.push_back(c);
    }
    traj.controls.push_back(nan_u);
    traj.disturbances.push_back(nan_w);
    traj.psi.push_back(std::move(row));
    traj.termination = why;
  };

  for (long k = 0;; ++k) {
    traj.times.push_back(static_cast<double>(k) * dt);
    traj.states.push_back(x);

    bool unsafe = false;
    for (const auto& b : sc.barriers) unsafe = unsafe || b.h(x) < 0.0;
    if (unsafe) {
      terminal_row(Termination::UnsafeEntered);
      break;
    }
    if (sc.config.goal && sc.config.goal->contains(x)) {
      terminal_row(Termination::GoalReached);
      break;
    }
    if (k >= steps) {
      terminal_row(Termination::Horizon);
      break;
    }

    Vec u;
    try {
      u = policy(x);
    } catch (const Error& e) {
      traj.failure_message = e.what();
      terminal_row(Termination::ExpertInfeasible);
      break;
    }
    if (u.size() != dyn.mu) throw DimMismatch("rollout: policy output dimension");
    const Vec w = gen(k);

    std::vector<PsiChain> row;
    row.reserve(sc.barriers.size());
    for (const auto& b : sc.barriers) {
      if (opts.log_psi) {
        row.push_back(psi_chain_eval(dyn, b, x, u, w));
      } else {
        PsiChain c;
        c.psi0 = b.h(x);
        c.psi1 = kNaN;
        if (b.degree == 2) c.psi2 = kNaN;
        row.push_back(c);
      }
    }
    traj.controls.push_back(u);
    traj.disturbances.push_back(w);
    traj.psi.push_back(std::move(row));

    x = rk4_step(dyn, x, u, w, dt);
  }
  return traj;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<Trajectory> run_rollouts(const Scenario& sc,
                                     const std::function<Policy(std::size_t)>& make_policy,
                                     const DisturbanceSignal& dist,
                                     const std::vector<RolloutJob>& jobs, bool log_psi,
                                     unsigned threads) {
  std::vector<Trajectory> out(jobs.size());
  parallel_for(
      jobs.size(),
      [&](std::size_t i) {
        RolloutOptions opts;
        opts.x0 = jobs[i].x0;
        opts.log_psi = log_psi;
        out[i] = rollout(sc, make_policy(i), dist, jobs[i].seed, opts);
      },
      threads);
  return out;
}

}  // namespace cbfd
