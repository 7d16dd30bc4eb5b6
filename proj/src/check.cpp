#include "cbfd/check.hpp"

#include "cbfd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cbfd {

namespace {

// Box covering the initial set, obstacles and goal, padded by one unit.
Box domain_box(const Scenario& sc) {
  Box d = sc.config.x0_box;
  auto grow = [&](int i, double v) {
    d.lo[i] = std::min(d.lo[i], v);
    d.hi[i] = std::max(d.hi[i], v);
  };
  for (const auto& o : sc.config.obstacles) {
    for (Eigen::Index i = 0; i < o.center.size() && i < d.lo.size(); ++i) grow(static_cast<int>(i), o.center[i]);
  }
  if (sc.config.goal) {
    const auto& g = *sc.config.goal;
    for (std::size_t i = 0; i < g.coords.size(); ++i) grow(g.coords[i], g.center[static_cast<Eigen::Index>(i)]);
  }
  d.lo.array() -= 1.0;
  d.hi.array() += 1.0;
  return d;
}

Vec sample(Rng& rng, const Box& b) {
  Vec v(b.dim());
  for (int i = 0; i < b.dim(); ++i) v[i] = rng.uniform(b.lo[i], b.hi[i]);
  return v;
}

}  // namespace

bool CheckReport::passed() const {
  return std::all_of(items.begin(), items.end(), [](const CheckItem& c) { return c.passed; });
}

CheckReport check_scenario(const Scenario& sc, int n_states, std::uint64_t seed, const CheckTolerances& tol) {
  CheckReport report;
  const DynamicsModel& dyn = sc.dynamics;

  CheckItem structure{"dynamics_structure", 0.0, 0.0, true, ""};
  try {
    sc.validate();
  } catch (const Error& e) {
    structure.passed = false;
    structure.detail = e.what();
  }
  report.items.push_back(structure);
  if (!structure.passed) return report;

  const Box domain = domain_box(sc);
  const Box u_box = dyn.u_box ? *dyn.u_box : Box::symmetric(dyn.mu, 2.0);
  Rng rng(seed);

  CheckItem jac{"jac_f", 0.0, tol.derivative, true, ""};
  struct PerBarrier {
    CheckItem grad, hess, sep, chain;
  };
  std::vector<PerBarrier> per;
  for (const auto& b : sc.barriers) {
    per.push_back({{b.id + ".grad_h", 0.0, tol.derivative, true, ""},
                   {b.id + ".hess_h", 0.0, tol.derivative, true, ""},
                   {b.id + ".separability", 0.0, tol.separability, true, ""},
                   {b.id + ".psi_chain", 0.0, tol.chain, true, ""}});
  }

  auto record = [](CheckItem& item, double value, const Vec& x) {
    if (std::isfinite(value) && value <= item.worst) return;
    item.worst = std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
    item.detail = "worst at x = [";
    for (Eigen::Index i = 0; i < x.size(); ++i) item.detail += (i ? ", " : "") + std::to_string(x[i]);
    item.detail += "]";
  };

  for (int s = 0; s < n_states; ++s) {
    const Vec x = sample(rng, s % 2 == 0 ? sc.config.x0_box : domain);
    const Vec u = sample(rng, u_box);
    const Vec w = sample(rng, sc.dist_box());
    record(jac, jacobian_fd_error(dyn, x), x);
    for (std::size_t i = 0; i < sc.barriers.size(); ++i) {
      const BarrierSpec& b = sc.barriers[i];
      record(per[i].grad, gradient_fd_error(b, x), x);
      if (b.degree == 2) {
        record(per[i].hess, hessian_fd_error(b, x), x);
        record(per[i].sep, separability_residual(dyn, b, x), x);
        if (per[i].sep.worst > tol.separability) continue;
      }
      try {
        record(per[i].chain, validate_fd(dyn, b, x, u, w), x);
      } catch (const Error& e) {
        per[i].chain.worst = std::numeric_limits<double>::infinity();
        per[i].chain.detail = e.what();
      }
    }
    ++report.states_checked;
  }

  auto finish = [&](CheckItem item) {
    item.passed = item.worst <= item.tolerance;
    report.items.push_back(std::move(item));
  };
  finish(jac);
  for (std::size_t i = 0; i < sc.barriers.size(); ++i) {
    finish(per[i].grad);
    if (sc.barriers[i].degree == 2) {
      finish(per[i].hess);
      finish(per[i].sep);
    }
    finish(per[i].chain);
  }
  return report;
}

nlohmann::json to_json(const CheckReport& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& c : r.items) {
    items.push_back({{"name", c.name},
                     {"worst", std::isfinite(c.worst) ? nlohmann::json(c.worst) : nlohmann::json("inf")},
                     {"tolerance", c.tolerance},
                     {"passed", c.passed},
                     {"detail", c.detail}});
  }
  return {{"passed", r.passed()}, {"states_checked", r.states_checked}, {"items", items}};
}

}  // namespace cbfd
