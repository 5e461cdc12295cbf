#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "corrsched/random.hpp"
#include "corrsched/simplex.hpp"

using namespace corrsched;
using lp::RowSense;

TEST(Simplex, TextbookMaximisation) {
  // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
  lp::Problem p;
  const auto x = p.add_variable(0, lp::kInf, -3);
  const auto y = p.add_variable(0, lp::kInf, -5);
  p.add_row({{x, 1}}, RowSense::LessEqual, 4);
  p.add_row({{y, 2}}, RowSense::LessEqual, 12);
  p.add_row({{x, 3}, {y, 2}}, RowSense::LessEqual, 18);
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::Optimal);
  EXPECT_NEAR(s.objective, -36, 1e-9);
  EXPECT_NEAR(s.x[x], 2, 1e-9);
  EXPECT_NEAR(s.x[y], 6, 1e-9);
  EXPECT_LE(s.max_dual_infeasibility, 1e-9);
}

TEST(Simplex, EqualityAndGreaterRows) {
  // min x + 2y + 3z, x + y + z = 10, y + z >= 4, z >= 1
  lp::Problem p;
  const auto x = p.add_variable(0, lp::kInf, 1);
  const auto y = p.add_variable(0, lp::kInf, 2);
  const auto z = p.add_variable(1, lp::kInf, 3);
  p.add_row({{x, 1}, {y, 1}, {z, 1}}, RowSense::Equal, 10);
  p.add_row({{y, 1}, {z, 1}}, RowSense::GreaterEqual, 4);
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::Optimal);
  EXPECT_NEAR(s.objective, 6 + 6 + 3, 1e-9);
}

TEST(Simplex, FreeVariablesEpigraph) {
  // min t, t >= a_i - x, with x free in [-inf, inf] and x <= 2 -> t = max(a) - 2
  lp::Problem p;
  const auto t = p.add_variable(-lp::kInf, lp::kInf, 1);
  const auto x = p.add_variable(-lp::kInf, 2, 0);
  for (double a : {1.0, 7.0, -3.0}) {
    p.add_row({{t, 1}, {x, 1}}, RowSense::GreaterEqual, a);
  }
  const auto s = lp::solve(p);
  ASSERT_EQ(s.status, lp::Status::Optimal);
  EXPECT_NEAR(s.objective, 5, 1e-9);
}

TEST(Simplex, DetectsInfeasible) {
  lp::Problem p;
  const auto x = p.add_variable(0, 1, 1);
  p.add_row({{x, 1}}, RowSense::GreaterEqual, 2);
  EXPECT_EQ(lp::solve(p).status, lp::Status::Infeasible);
}

TEST(Simplex, DetectsUnbounded) {
  lp::Problem p;
  const auto x = p.add_variable(0, lp::kInf, -1);
  const auto y = p.add_variable(0, lp::kInf, 0);
  p.add_row({{x, 1}, {y, -1}}, RowSense::LessEqual, 1);
  EXPECT_EQ(lp::solve(p).status, lp::Status::Unbounded);
}

TEST(Simplex, StartHintsDoNotChangeOptimum) {
  lp::Problem p;
  const auto x = p.add_variable(0, 10, -1);
  const auto y = p.add_variable(0, 10, -1);
  p.add_row({{x, 1}, {y, 2}}, RowSense::LessEqual, 12);
  p.add_row({{x, 3}, {y, 1}}, RowSense::LessEqual, 15);
  const auto cold = lp::solve(p);
  p.set_start(x, 10);
  p.set_start(y, 0);
  const auto warm = lp::solve(p);
  ASSERT_EQ(cold.status, lp::Status::Optimal);
  ASSERT_EQ(warm.status, lp::Status::Optimal);
  EXPECT_NEAR(cold.objective, warm.objective, 1e-9);
  EXPECT_NEAR(cold.objective, -(18.0 / 5 + 21.0 / 5), 1e-9);
}

TEST(Simplex, FractionalKnapsackOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    std::vector<double> v(n);
    std::vector<double> w(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = rng.uniform(0.1, 10);
      w[i] = rng.uniform(0.1, 10);
      total += w[i];
    }
    const double cap = rng.uniform(0.1, total);
    lp::Problem p;
    std::vector<lp::Term> row;
    for (std::size_t i = 0; i < n; ++i) {
      row.push_back({p.add_variable(0, 1, -v[i]), w[i]});
    }
    p.add_row(row, RowSense::LessEqual, cap);
    const auto s = lp::solve(p);
    ASSERT_EQ(s.status, lp::Status::Optimal);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] / w[a] > v[b] / w[b]; });
    double left = cap;
    double best = 0.0;
    for (std::size_t i : order) {
      const double take = std::min(1.0, left / w[i]);
      best += take * v[i];
      left -= take * w[i];
      if (left <= 0) break;
    }
    EXPECT_NEAR(-s.objective, best, 1e-8 * (1 + best));
    EXPECT_LE(s.max_dual_infeasibility, 1e-9);
  }
}

TEST(Simplex, TwoVariableVertexOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    // Box [-5, 5]^2 keeps every instance bounded.
    struct Line { double a, b, r; };
    std::vector<Line> rows;
    const std::size_t m = 1 + rng.below(5);
    lp::Problem p;
    const double cx = rng.uniform(-1, 1);
    const double cy = rng.uniform(-1, 1);
    const auto x = p.add_variable(-5, 5, cx);
    const auto y = p.add_variable(-5, 5, cy);
    for (std::size_t k = 0; k < m; ++k) {
      Line l{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-2, 4)};
      rows.push_back(l);
      p.add_row({{x, l.a}, {y, l.b}}, RowSense::LessEqual, l.r);
    }
    auto lines = rows;
    lines.push_back({1, 0, 5});
    lines.push_back({-1, 0, 5});
    lines.push_back({0, 1, 5});
    lines.push_back({0, -1, 5});
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < lines.size(); ++i) {
      for (std::size_t j = i + 1; j < lines.size(); ++j) {
        const double det = lines[i].a * lines[j].b - lines[i].b * lines[j].a;
        if (std::abs(det) < 1e-12) continue;
        const double px = (lines[i].r * lines[j].b - lines[i].b * lines[j].r) / det;
        const double py = (lines[i].a * lines[j].r - lines[i].r * lines[j].a) / det;
        bool ok = true;
        for (const auto& l : lines) ok = ok && l.a * px + l.b * py <= l.r + 1e-9;
        if (ok) best = std::min(best, cx * px + cy * py);
      }
    }
    const auto s = lp::solve(p);
    if (std::isinf(best)) {
      EXPECT_EQ(s.status, lp::Status::Infeasible);
    } else {
      ASSERT_EQ(s.status, lp::Status::Optimal);
      EXPECT_NEAR(s.objective, best, 1e-8);
    }
  }
}
