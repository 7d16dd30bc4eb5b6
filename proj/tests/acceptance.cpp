// Acceptance checks A1-A9. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "cbfd/dagger.hpp"
#include "cbfd/io.hpp"
#include "cbfd/qp.hpp"
#include "cbfd/rng.hpp"
#include "cbfd/wopt.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace cbfd;

namespace {

constexpr std::uint64_t kSeed = 0;

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  double limit_s;  // runtime limit, 0 = none
  std::function<Outcome()> run;
};

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

Vec sample(Rng& rng, const Box& b) {
  Vec v(b.dim());
  for (int i = 0; i < b.dim(); ++i) v[i] = rng.uniform(b.lo[i], b.hi[i]);
  return v;
}

// psi_2 straight from the chain definition with w held constant:
// psi_1 = grad_h.(f + M w) + k1 h,  psi_2 = grad(psi_1).(f + g u + M w) + k2 psi_1.
double psi2_direct(const DynamicsModel& d, const BarrierSpec& b, const Vec& x, const Vec& u, const Vec& w) {
  const Vec drift = d.f(x) + d.M * w;
  const Vec grad_h = b.grad_h(x);
  const double psi1 = grad_h.dot(drift) + b.gains[0] * b.h(x);
  const Vec grad_psi1 = b.hess_h(x) * drift + d.jac_f(x).transpose() * grad_h + b.gains[0] * grad_h;
  return grad_psi1.dot(drift + d.g(x) * u) + b.gains[1] * psi1;
}

// ---------------------------------------------------------------- A1, A2

Outcome a1_example1_symbolic() {
  const Scenario sc = make_scenario(example1_config());
  Rng rng(derive_seed(kSeed, 1));
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vec x = sample(rng, Box(Vec::Constant(2, -5), Vec::Constant(2, 5)));
    const double x1 = x[0], x2 = x[1];
    const Deg2Terms t = assemble_deg2_terms(sc.dynamics, sc.barriers[0], x);
    // 2 x1 u + (4 x2 + 4 x1) w + 2 w^2 + 2 x2^2 + 4 x1 x2 + x1^2 - 1
    worst = std::max({worst, rel_err(t.a_u[0], 2 * x1), rel_err(t.c_w[0], 4 * x2 + 4 * x1),
                      rel_err(t.q_w(0, 0), 2.0), rel_err(t.psi_const, 2 * x2 * x2 + 4 * x1 * x2 + x1 * x1 - 1)});
  }
  return {worst <= 1e-9, fmt::format("100 states, worst rel. error {:.2e} (tol 1e-9)", worst)};
}

Outcome a2_unicycle_symbolic() {
  const Scenario sc = make_scenario(unicycle_config());
  Rng rng(derive_seed(kSeed, 2));
  const Box domain(Eigen::Vector3d(0, 0, -M_PI), Eigen::Vector3d(10, 12, M_PI));
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Vec x = sample(rng, domain);
    const double s = std::sin(x[2]), c = std::cos(x[2]), dx = x[0] - 4, dy = x[1] - 2.5;
    const Deg2Terms t = assemble_deg2_terms(sc.dynamics, sc.barriers[0], x);
    const double u_coef = -(2 * s * dx - 2 * c * dy);
    const double w_lin = 4 * (c + s + 2 * (dx + dy));
    const double state = 4 * dx * dx + 4 * dy * dy + 4 * c * (2 * x[0] - 8) + 4 * s * (2 * x[1] - 5) - 0.8;
    worst = std::max({worst, rel_err(t.a_u[0], u_coef), rel_err(t.q_w(0, 0), 4.0), rel_err(t.c_w[0], w_lin),
                      rel_err(t.psi_const, state)});
  }
  return {worst <= 1e-9, fmt::format("100 states, worst rel. error {:.2e} (tol 1e-9)", worst)};
}

// ---------------------------------------------------------------- A3

Outcome a3_inner_solver() {
  Rng rng(derive_seed(kSeed, 3));
  constexpr int kGrid = 101;
  int box_fail = 0, lin_fail = 0;
  double worst_excess = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int l = 1 + k % 3;
    Mat a(l, l);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-2, 2);
    const Mat q = 0.5 * (a + a.transpose());
    Vec c(l), lo(l), hi(l);
    for (int i = 0; i < l; ++i) {
      c[i] = rng.uniform(-2, 2);
      lo[i] = rng.uniform(-1, 0);
      hi[i] = lo[i] + rng.uniform(0.01, 1.5);
    }
    const BoxQpProblem p{q, c, Box(lo, hi)};
    const BoxQpSolution sol = solve_box_qp_wopt(p);

    // Dense grid maximum of -w'Qw - c.w, padded to three axes and expanded
    // along the last axis so the inner loop is a plain quadratic in one variable.
    Mat q3 = Mat::Zero(3, 3);
    q3.topLeftCorner(l, l) = q;
    Vec c3 = Vec::Zero(3);
    c3.head(l) = c;
    std::array<std::vector<double>, 3> axis;
    for (int i = 0; i < 3; ++i) {
      if (i >= l) {
        axis[static_cast<std::size_t>(i)] = {0.0};
        continue;
      }
      for (int g = 0; g < kGrid; ++g) axis[static_cast<std::size_t>(i)].push_back(lo[i] + (hi[i] - lo[i]) * g / (kGrid - 1.0));
    }
    std::vector<double> sq;
    for (double v : axis[2]) sq.push_back(v * v);
    double grid_best = -INFINITY;
    for (double w0 : axis[0]) {
      for (double w1 : axis[1]) {
        const double base = -(q3(0, 0) * w0 * w0 + 2 * q3(0, 1) * w0 * w1 + q3(1, 1) * w1 * w1) - c3[0] * w0 - c3[1] * w1;
        const double lin = -2 * (q3(0, 2) * w0 + q3(1, 2) * w1) - c3[2];
        const double quad = -q3(2, 2);
        for (std::size_t k2 = 0; k2 < sq.size(); ++k2)
          grid_best = std::max(grid_best, base + lin * axis[2][k2] + quad * sq[k2]);
      }
    }
    // Resolution bound: sup-gradient over the box times half a cell per axis.
    double resolution = 0.0;
    for (int i = 0; i < l; ++i) {
      double g = std::abs(c[i]);
      for (int j = 0; j < l; ++j) g += 2 * std::abs(q(i, j)) * std::max(std::abs(lo[j]), std::abs(hi[j]));
      resolution += g * (hi[i] - lo[i]) / (2.0 * (kGrid - 1));
    }
    const double excess = sol.value - grid_best;
    worst_excess = std::max(worst_excess, excess / std::max(resolution, 1e-300));
    const bool ok = p.box.contains(sol.w, 1e-12) && excess >= -1e-12 && excess <= resolution + 1e-12 &&
                    std::abs(sol.value - box_qp_objective(p, sol.w)) <= 1e-12 * std::max(1.0, std::abs(sol.value));
    box_fail += !ok;

    // Linear case against vertex enumeration.
    double vert_best = -INFINITY;
    for (int mask = 0; mask < (1 << l); ++mask) {
      Vec v(l);
      for (int i = 0; i < l; ++i) v[i] = (mask >> i) & 1 ? hi[i] : lo[i];
      vert_best = std::max(vert_best, -c.dot(v));
    }
    lin_fail += -c.dot(solve_linear_wopt(c, p.box)) != vert_best;
  }
  return {box_fail == 0 && lin_fail == 0,
          fmt::format("1000 instances (l = 1..3): box-QP mismatches {}, worst gap {:.2f} of grid resolution; "
                      "linear mismatches vs vertices {}",
                      box_fail, worst_excess, lin_fail)};
}

// ---------------------------------------------------------------- A4

// Exact oracle for min ||u - u_ref||^2 s.t. A u >= b: best feasible projection
// onto every face spanned by at most mu rows.
std::optional<Vec> face_oracle(const ControlQp& p) {
  const auto rows = expanded_rows(p);
  const int m = static_cast<int>(rows.size());
  const Eigen::Index mu = p.u_ref.size();
  std::optional<Vec> best;
  double best_obj = INFINITY;
  for (int mask = 0; mask < (1 << m); ++mask) {
    if (__builtin_popcount(static_cast<unsigned>(mask)) > mu) continue;
    std::vector<int> s;
    for (int i = 0; i < m; ++i)
      if ((mask >> i) & 1) s.push_back(i);
    Vec u = p.u_ref;
    if (!s.empty()) {
      Mat a(static_cast<Eigen::Index>(s.size()), mu);
      Vec b(static_cast<Eigen::Index>(s.size()));
      for (std::size_t k = 0; k < s.size(); ++k) {
        a.row(static_cast<Eigen::Index>(k)) = rows[static_cast<std::size_t>(s[k])].a.transpose();
        b[static_cast<Eigen::Index>(k)] = rows[static_cast<std::size_t>(s[k])].b;
      }
      const Mat gram = a * a.transpose();
      Eigen::FullPivLU<Mat> lu(gram);
      if (lu.rank() < gram.rows()) continue;
      u += a.transpose() * lu.solve(b - a * p.u_ref);
    }
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.slack(u) >= -1e-9 * std::max(1.0, std::abs(r.b));
    const double obj = (u - p.u_ref).squaredNorm();
    if (ok && obj < best_obj) {
      best_obj = obj;
      best = u;
    }
  }
  return best;
}

// Scalar case in closed form: clamp u_ref to the intersection of half-lines.
std::optional<double> interval_oracle(const ControlQp& p) {
  double lo = -INFINITY, hi = INFINITY;
  for (const auto& r : expanded_rows(p)) {
    if (r.a[0] > 0) lo = std::max(lo, r.b / r.a[0]);
    if (r.a[0] < 0) hi = std::min(hi, r.b / r.a[0]);
  }
  if (lo > hi) return std::nullopt;
  return std::clamp(p.u_ref[0], lo, hi);
}

Outcome a4_outer_qp() {
  Rng rng(derive_seed(kSeed, 4));
  int mismatches = 0, false_infeasible = 0;
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int mu = 1 + k % 3;
    const int m = 1 + static_cast<int>(rng.below(6));
    ControlQp p{Vec(mu), {}, std::nullopt};
    for (int i = 0; i < mu; ++i) p.u_ref[i] = rng.uniform(-5, 5);
    Vec inside(mu);
    for (int i = 0; i < mu; ++i) inside[i] = rng.uniform(-1, 1);
    for (int r = 0; r < m; ++r) {
      Vec a(mu);
      for (int i = 0; i < mu; ++i) a[i] = rng.uniform(-3, 3);
      p.rows.push_back({a, a.dot(inside) - rng.uniform(0, 2), fmt::format("r{}", r)});
    }
    if (k % 4 == 0) p.u_box = Box::symmetric(mu, 2.0);
    Vec u;
    try {
      u = solve_control_qp(p);
    } catch (const Infeasible&) {
      ++false_infeasible;
      continue;
    }
    double oracle_obj;
    if (mu == 1) {
      oracle_obj = std::pow(*interval_oracle(p) - p.u_ref[0], 2);
    } else {
      oracle_obj = (*face_oracle(p) - p.u_ref).squaredNorm();
    }
    const double diff = std::abs((u - p.u_ref).squaredNorm() - oracle_obj);
    worst = std::max(worst, diff);
    bool feasible = true;
    for (const auto& r : expanded_rows(p)) feasible = feasible && r.slack(u) >= -1e-8;
    mismatches += diff > 1e-6 || !feasible;
  }

  int reported = 0;
  for (int k = 0; k < 100; ++k) {
    const int mu = 1 + k % 3;
    ControlQp p{Vec(mu), {}, std::nullopt};
    for (int i = 0; i < mu; ++i) p.u_ref[i] = rng.uniform(-5, 5);
    Vec a(mu);
    for (int i = 0; i < mu; ++i) a[i] = rng.uniform(-3, 3);
    a[0] += a[0] >= 0 ? 0.2 : -0.2;
    const double b = rng.uniform(-2, 2);
    // a.u >= b and a.u <= b - gap cannot both hold.
    p.rows.push_back({a, b, "lower"});
    p.rows.push_back({-a, -(b - rng.uniform(0.01, 2)), "upper"});
    for (int r = 0; r < static_cast<int>(rng.below(3)); ++r) {
      Vec e(mu);
      for (int i = 0; i < mu; ++i) e[i] = rng.uniform(-3, 3);
      p.rows.push_back({e, rng.uniform(-2, 2), "extra"});
    }
    try {
      solve_control_qp(p);
    } catch (const Infeasible&) {
      ++reported;
    }
  }
  return {mismatches == 0 && false_infeasible == 0 && reported == 100,
          fmt::format("1000 feasible: {} mismatches (worst objective gap {:.1e}, tol 1e-6), {} spurious "
                      "infeasible; infeasible reported {}/100",
                      mismatches, worst, false_infeasible, reported)};
}

// ---------------------------------------------------------------- A5, A6

struct ExpertRun {
  std::vector<Trajectory> trajectories;
  std::vector<std::string> csv;
  std::string summary;
};

ExpertRun expert_rollouts(const std::shared_ptr<const Scenario>& sc) {
  const ExpertPolicy expert(sc);
  std::vector<RolloutJob> jobs;
  for (std::uint64_t k = 0; k < 20; ++k) jobs.push_back({derive_seed(kSeed, k), std::nullopt});
  ExpertRun run;
  run.trajectories = run_rollouts(
      *sc, [&](std::size_t) { return expert.as_policy(); }, DisturbanceSignal::zero(), jobs);
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& t : run.trajectories) {
    std::ostringstream os;
    write_trajectory_csv(os, *sc, t);
    run.csv.push_back(os.str());
    summary.push_back({{"termination", to_string(t.termination)}, {"min_h", t.min_barrier_values()}});
  }
  run.summary = summary.dump();
  return run;
}

std::shared_ptr<const Scenario> unicycle() {
  static const auto sc = std::make_shared<const Scenario>(make_scenario(unicycle_config()));
  return sc;
}

std::optional<ExpertRun> a5_run;

Outcome a5_expert_invariance(const fs::path& out) {
  a5_run = expert_rollouts(unicycle());
  int safe = 0, reached = 0;
  double min_h = INFINITY;
  std::string failures;
  for (std::size_t k = 0; k < a5_run->trajectories.size(); ++k) {
    const Trajectory& t = a5_run->trajectories[k];
    safe += t.safe();
    reached += t.reached_goal();
    min_h = std::min(min_h, t.min_barrier_value());
    if (!t.safe() || !t.reached_goal()) {
      failures += fmt::format(" [rollout {}: {}, t = {:.2f} s]", k, to_string(t.termination), t.times.back());
    }
    std::ofstream(out / fmt::format("a5_rollout_{:03d}.csv", k), std::ios::binary) << a5_run->csv[k];
  }
  const bool ok = safe == 20 && reached == 20;
  return {ok, fmt::format("20 rollouts, w = 0: safe {}/20, reached goal {}/20, min h {:.4f}{}", safe, reached,
                          min_h, failures)};
}

Outcome a6_worst_case_dominance() {
  if (!a5_run) a5_run = expert_rollouts(unicycle());
  const Scenario& sc = *unicycle();
  Rng rng(derive_seed(kSeed, 6));
  double worst = INFINITY;
  std::size_t steps = 0;
  for (const auto& t : a5_run->trajectories) {
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
      ++steps;
      for (int s = 0; s < 100; ++s) {
        const Vec w = sample(rng, sc.dist_box());
        for (const auto& b : sc.barriers) {
          worst = std::min(worst, psi2_direct(sc.dynamics, b, t.states[k], t.controls[k], w));
        }
      }
    }
  }
  return {worst >= -1e-8, fmt::format("{} steps x 100 disturbances x {} barriers: min psi2 {:.3e} (tol -1e-8)", steps,
                                      sc.barriers.size(), worst)};
}

// ---------------------------------------------------------------- A7

Outcome a7_gradients() {
  Rng rng(derive_seed(kSeed, 7));
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int in = 1 + static_cast<int>(rng.below(5));
    const int out = 1 + static_cast<int>(rng.below(2));
    std::vector<int> dims{in};
    for (int h = 0; h < 1 + static_cast<int>(rng.below(2)); ++h) dims.push_back(2 + static_cast<int>(rng.below(8)));
    dims.push_back(out);
    MlpPolicy net(dims, rng.next());
    Mat x(in, 8), y(out, 8);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1, 1);
    MlpGradients g;
    net.loss_and_gradient(x, y, g);
    const Vec analytic = net.flatten(g);
    const Vec p0 = net.parameters();
    for (Eigen::Index i = 0; i < p0.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(p0[i]));
      Vec p = p0;
      p[i] = p0[i] + h;
      net.set_parameters(p);
      const double lp = net.loss(x, y);
      p[i] = p0[i] - h;
      net.set_parameters(p);
      const double lm = net.loss(x, y);
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
    }
    net.set_parameters(p0);
  }
  return {worst < 1e-5, fmt::format("20 random nets, max rel. error {:.2e} (tol 1e-5)", worst)};
}

// ---------------------------------------------------------------- A8, A9

struct DaggerRun {
  std::string report;
  std::string model;
  std::vector<std::string> csv;
  int successes = 0;
  int unsafe = 0;
  int missed_goal = 0;
  double min_h = INFINITY;
  int selected = -1;
  double val_mse = 0.0;
};

DaggerRun dagger_run() {
  const auto sc = unicycle();
  const ExpertPolicy expert(sc);
  const DaggerConfig cfg;  // defaults
  const DaggerResult res = run_dagger(sc, expert, cfg);
  DaggerRun run;
  nlohmann::json report = to_json(res.report);
  report["config"] = to_json(cfg);
  run.report = report.dump(2);
  run.model = to_json(res.policy).dump(2);
  run.selected = res.report.selected;
  run.val_mse = res.report.iterations[static_cast<std::size_t>(run.selected)].final_val_mse;

  // Fresh initial states and disturbance streams, disjoint from training.
  std::vector<RolloutJob> jobs;
  for (std::uint64_t k = 0; k < 50; ++k) jobs.push_back({derive_seed(derive_seed(kSeed, 8), k), std::nullopt});
  const Policy policy = res.policy.as_policy();
  const auto trajs = run_rollouts(
      *sc, [&](std::size_t) { return policy; }, DisturbanceSignal::piecewise_random(), jobs);
  for (const auto& t : trajs) {
    run.successes += t.safe() && t.reached_goal();
    run.unsafe += !t.safe();
    run.missed_goal += t.safe() && !t.reached_goal();
    run.min_h = std::min(run.min_h, t.min_barrier_value());
    std::ostringstream os;
    write_trajectory_csv(os, *sc, t);
    run.csv.push_back(os.str());
  }
  return run;
}

std::optional<DaggerRun> a8_run;

Outcome a8_dagger_closed_loop(const fs::path& out) {
  a8_run = dagger_run();
  std::ofstream(out / "a8_report.json", std::ios::binary) << a8_run->report;
  std::ofstream(out / "a8_model.json", std::ios::binary) << a8_run->model;
  const double rate = a8_run->successes / 50.0;
  return {rate >= 0.9,
          fmt::format("selected iteration {} (held-out MSE {:.5f}); safe-and-reach {}/50 = {:.0f}% under "
                      "piecewise-random disturbance (need >= 90%); unsafe {}, safe but no goal {}, min h {:.4f}",
                      a8_run->selected, a8_run->val_mse, a8_run->successes, 100 * rate, a8_run->unsafe,
                      a8_run->missed_goal, a8_run->min_h)};
}

Outcome a9_determinism() {
  if (!a5_run) a5_run = expert_rollouts(unicycle());
  if (!a8_run) a8_run = dagger_run();
  const ExpertRun e2 = expert_rollouts(unicycle());
  const DaggerRun d2 = dagger_run();
  const bool expert_same = e2.csv == a5_run->csv && e2.summary == a5_run->summary;
  const bool dagger_same = d2.report == a8_run->report && d2.model == a8_run->model && d2.csv == a8_run->csv;
  return {expert_same && dagger_same,
          fmt::format("expert CSVs {} ({} files, hash {}); DAgger report/model/eval CSVs {} (report hash {})",
                      expert_same ? "identical" : "DIFFER", e2.csv.size(),
                      fnv1a_hex(fmt::format("{}", fmt::join(e2.csv, ""))), dagger_same ? "identical" : "DIFFER",
                      fnv1a_hex(d2.report))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_out";
  std::vector<std::string> only;
  app.add_option("--out", out, "Directory for artifacts");
  app.add_option("--only", only, "Run only these criteria (e.g. A1 A5)");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);
  const fs::path dir(out);

  const std::vector<Criterion> criteria{
      {"A1", "example1 symbolic match", 1, a1_example1_symbolic},
      {"A2", "Unicycle symbolic match", 1, a2_unicycle_symbolic},
      {"A3", "Inner-solver oracle", 5, a3_inner_solver},
      {"A4", "Outer-QP oracle", 5, a4_outer_qp},
      {"A5", "Expert forward invariance", 30, [&] { return a5_expert_invariance(dir); }},
      {"A6", "Worst-case dominance", 60, a6_worst_case_dominance},
      {"A7", "Gradient correctness", 5, a7_gradients},
      {"A8", "DAgger closed loop", 600, [&] { return a8_dagger_closed_loop(dir); }},
      {"A9", "Determinism", 0, a9_determinism},
  };
  const std::set<std::string> selected(only.begin(), only.end());

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_s <= 0 || secs < c.limit_s;
    const bool ok = o.passed && in_time;
    failed += !ok;
    const std::string limit = c.limit_s > 0 ? fmt::format(" < {:g} s", c.limit_s) : "";
    std::printf("%s %s  %s: %s [%.2f s%s%s]\n", c.id.c_str(), ok ? "PASS" : "FAIL", c.title.c_str(), o.detail.c_str(),
                secs, limit.c_str(), in_time ? "" : ", over time limit");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
