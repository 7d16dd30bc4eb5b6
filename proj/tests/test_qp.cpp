#include "cbfd/qp.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace cbfd;
using namespace cbfd::testing;

namespace {

ControlQp scalar_qp(double u_ref, std::vector<std::pair<double, double>> rows) {
  ControlQp p{vec({u_ref}), {}, std::nullopt};
  for (auto [a, b] : rows) p.rows.push_back({vec({a}), b, "r"});
  return p;
}

// Exact oracle: best feasible projection onto every face spanned by at most mu rows.
std::optional<Vec> face_oracle(const ControlQp& p) {
  const auto rows = expanded_rows(p);
  const int m = static_cast<int>(rows.size());
  const Eigen::Index mu = p.u_ref.size();
  std::optional<Vec> best;
  double best_obj = INFINITY;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> s;
    for (int i = 0; i < m; ++i)
      if ((mask >> i) & 1) s.push_back(i);
    if (static_cast<Eigen::Index>(s.size()) > mu) continue;
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
    for (const auto& r : rows) ok = ok && r.slack(u) >= -1e-9;
    const double obj = (u - p.u_ref).squaredNorm();
    if (ok && obj < best_obj) {
      best_obj = obj;
      best = u;
    }
  }
  return best;
}

ControlQp random_qp(Rng& rng, int mu, int m, bool with_box) {
  ControlQp p{Vec(mu), {}, std::nullopt};
  for (int i = 0; i < mu; ++i) p.u_ref[i] = rng.uniform(-3, 3);
  // Rows are built to contain a known interior point so the instance is feasible.
  Vec inside(mu);
  for (int i = 0; i < mu; ++i) inside[i] = rng.uniform(-1, 1);
  for (int k = 0; k < m; ++k) {
    Vec a(mu);
    for (int i = 0; i < mu; ++i) a[i] = rng.uniform(-2, 2);
    p.rows.push_back({a, a.dot(inside) - rng.uniform(0, 1), "r" + std::to_string(k)});
  }
  if (with_box) p.u_box = Box::symmetric(mu, 2.0);
  return p;
}

}  // namespace

TEST_CASE("scalar worked cases") {
  CHECK(solve_control_qp(scalar_qp(0, {{2, -4}}))[0] == doctest::Approx(0.0));
  CHECK(solve_control_qp(scalar_qp(-3, {{1, -2}}))[0] == doctest::Approx(-2.0));
  CHECK_THROWS_AS(solve_control_qp(scalar_qp(0, {{1, 1}, {-1, 1}})), Infeasible);
}

TEST_CASE("projection onto a half-plane") {
  ControlQp p{vec({0, 0}), {{vec({1, 1}), 2.0, "r"}}, std::nullopt};
  const Vec u = solve_control_qp(p);
  CHECK(u[0] == doctest::Approx(1.0));
  CHECK(u[1] == doctest::Approx(1.0));
  const ControlQpSolution s = solve_control_qp_detailed(p);
  CHECK(s.multipliers[0] == doctest::Approx(1.0));
}

TEST_CASE("input bounds are honoured") {
  ControlQp p = scalar_qp(5, {});
  p.u_box = Box(vec({-1}), vec({1}));
  CHECK(solve_control_qp(p)[0] == doctest::Approx(1.0));
  p.rows.push_back({vec({1}), 1.5, "r"});
  CHECK_THROWS_AS(solve_control_qp(p), Infeasible);
}

TEST_CASE("zero row with positive requirement is infeasible") {
  ControlQp p{vec({0, 0}), {{vec({0, 0}), 1.0, "r"}}, std::nullopt};
  CHECK_THROWS_AS(solve_control_qp(p), Infeasible);
  p.rows[0].b = -1.0;
  CHECK(solve_control_qp(p).isZero());
}

TEST_CASE("random instances match the face oracle") {
  Rng rng(7);
  for (int k = 0; k < 300; ++k) {
    const int mu = 1 + static_cast<int>(rng.below(3));
    const int m = 1 + static_cast<int>(rng.below(5));
    const ControlQp p = random_qp(rng, mu, m, k % 3 == 0);
    const auto oracle = face_oracle(p);
    REQUIRE(oracle.has_value());
    const ControlQpSolution s = solve_control_qp_detailed(p);
    CHECK((s.u - p.u_ref).squaredNorm() == doctest::Approx((*oracle - p.u_ref).squaredNorm()).epsilon(1e-6));
    // KKT: stationarity with nonnegative multipliers and complementarity.
    const auto rows = expanded_rows(p);
    Vec grad = s.u - p.u_ref;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].slack(s.u) >= -1e-8);
      CHECK(s.multipliers[static_cast<Eigen::Index>(i)] >= 0.0);
      CHECK(std::abs(s.multipliers[static_cast<Eigen::Index>(i)] * rows[i].slack(s.u)) < 1e-7);
      grad -= s.multipliers[static_cast<Eigen::Index>(i)] * rows[i].a;
    }
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("constructed infeasible instances are reported") {
  Rng rng(8);
  for (int k = 0; k < 100; ++k) {
    const int mu = 1 + static_cast<int>(rng.below(3));
    ControlQp p = random_qp(rng, mu, static_cast<int>(rng.below(3)), false);
    Vec a(mu);
    for (int i = 0; i < mu; ++i) a[i] = rng.uniform(-2, 2);
    a[0] += a[0] >= 0 ? 0.1 : -0.1;
    const double b = rng.uniform(-1, 1);
    p.rows.push_back({a, b, "lo"});
    p.rows.push_back({-a, -b + rng.uniform(0.01, 1), "hi"});
    CHECK_THROWS_AS(solve_control_qp(p), Infeasible);
  }
}

TEST_CASE("min-max violation fallback") {
  const ControlQp p = scalar_qp(0, {{1, 1}, {-1, 1}});
  // a.u >= 1 and -u >= 1: the balanced point u = 0 violates both by 1.
  CHECK(min_max_violation(p)[0] == doctest::Approx(0.0).epsilon(1e-6));

  ControlQp q{vec({0, 0}), {{vec({1, 0}), 1, "a"}, {vec({-1, 0}), 1, "b"}, {vec({0, 1}), 3, "c"}}, std::nullopt};
  const Vec u = min_max_violation(q);
  double worst = 0;
  for (const auto& r : q.rows) worst = std::max(worst, -r.slack(u));
  CHECK(worst == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("non-finite input is rejected") {
  CHECK_THROWS_AS(solve_control_qp(scalar_qp(NAN, {})), InvalidArgument);
  CHECK_THROWS_AS(solve_control_qp(scalar_qp(0, {{1, INFINITY}})), InvalidArgument);
}
