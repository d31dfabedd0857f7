#include <gtest/gtest.h>

#include <random>

#include "sptlb/problem.hpp"
#include "test_support.hpp"

namespace sptlb {
namespace {

using testing::make_app;
using testing::make_tier;
using testing::share;

Snapshot hundred_apps() {
  std::vector<AppRecord> apps;
  for (int i = 0; i < 100; ++i) {
    apps.push_back(make_app("a" + std::to_string(100 + i), 1, 1, 1, i % 2 ? "t1" : "t2"));
  }
  return Snapshot({make_tier("t1", 1000, 1000, 1000), make_tier("t2", 1000, 1000, 1000)}, apps);
}

TEST(Compile, MoveBudgetIsFloorOfFraction) {
  const auto s = share(hundred_apps());
  EXPECT_EQ(compile(s, RunConfig{}).move_budget(), 10);
  RunConfig c;
  c.move_budget_fraction = 0.0;
  EXPECT_EQ(compile(s, c).move_budget(), 0);
  c.move_budget_fraction = 0.105;
  EXPECT_EQ(compile(s, c).move_budget(), 10);
  c.move_budget_fraction = 1.0;
  EXPECT_EQ(compile(s, c).move_budget(), 100);
  c.move_budget_fraction = 1.5;
  EXPECT_THROW(compile(s, c), ValidationError);
}

TEST(Compile, BudgetZeroLeavesOnlyIdentity) {
  const auto s = share(Snapshot({make_tier("t1", 100, 100, 100), make_tier("t2", 100, 100, 100)},
                                {make_app("a", 1, 1, 1, "t1"), make_app("b", 1, 1, 1, "t2")}));
  RunConfig c;
  c.move_budget_fraction = 0.0;
  const Problem p = compile(s, c);
  int feasible = 0;
  testing::for_each_assignment(2, 2, [&](const std::vector<std::size_t>& a) {
    if (is_feasible(p, a).feasible) {
      ++feasible;
      EXPECT_EQ(a, s->initial_assignment());
    }
  });
  EXPECT_EQ(feasible, 1);
}

TEST(Compile, OverlapTransitions) {
  const auto s = share(Snapshot({make_tier("A", 10, 10, 10, {3}, {{"r1", 1}, {"r2", 1}, {"r3", 1}}),
                                 make_tier("B", 10, 10, 10, {3}, {{"r1", 1}, {"r2", 1}, {"r4", 1}}),
                                 make_tier("C", 10, 10, 10, {3}, {{"r4", 1}, {"r5", 1}})},
                                {}));
  RunConfig c;
  c.variant = Variant::kWCnst;
  const Problem p = compile(s, c);
  EXPECT_TRUE(p.transition_allowed(0, 1));   // 2/3
  EXPECT_FALSE(p.transition_allowed(0, 2));  // 0/3
  EXPECT_FALSE(p.transition_allowed(1, 2));  // 1/3
  EXPECT_FALSE(p.transition_allowed(2, 1));  // 1/2 is not > 0.5
  EXPECT_TRUE(p.transition_allowed(2, 2));
  const auto oracle = testing::oracle_transitions(*s, 0.5);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_EQ(p.transition_allowed(a, b), oracle.count({a, b}) == 1) << a << "->" << b;
    }
  }
  EXPECT_TRUE(compile(s, RunConfig{}).transition_allowed(0, 2));
}

TEST(Compile, CriticalityThresholdIsMedianOrOverride) {
  std::vector<AppRecord> apps;
  const double crit[] = {5, 1, 9, 3};
  for (int i = 0; i < 4; ++i) apps.push_back(make_app("a" + std::to_string(i), 1, 1, 1, "t1", 3, crit[i]));
  const auto s = share(Snapshot({make_tier("t1", 100, 100, 100)}, apps));
  const Problem p = compile(s, RunConfig{});
  EXPECT_DOUBLE_EQ(p.criticality_threshold(), testing::oracle_median({5, 1, 9, 3}));
  EXPECT_TRUE(p.is_critical(0));
  EXPECT_FALSE(p.is_critical(1));
  RunConfig c;
  c.criticality_threshold = 8.0;
  EXPECT_FALSE(compile(s, c).is_critical(0));
  EXPECT_TRUE(compile(s, c).is_critical(2));
}

TEST(IsFeasible, IdentityOnFittingSnapshot) {
  const auto s = share(hundred_apps());
  const auto r = is_feasible(compile(s, RunConfig{}), s->initial_assignment());
  EXPECT_TRUE(r.feasible);
  EXPECT_TRUE(r.violations.empty());
}

TEST(IsFeasible, ElevenMovesBreakBudget) {
  const auto s = share(hundred_apps());
  const Problem p = compile(s, RunConfig{});
  Assignment a = s->initial_assignment();
  for (int i = 0; i < 11; ++i) a[i] = 1 - a[i];
  const auto r = is_feasible(p, a);
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(r.has(Constraint::kMovement));
  EXPECT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].describe().substr(0, 3), "C3:");
  a[10] = 1 - a[10];
  EXPECT_TRUE(is_feasible(p, a).feasible);
}

TEST(IsFeasible, Slo4OnTierOneIsC4) {
  const auto s = share(Snapshot(testing::five_tier_slo_table(), {make_app("x", 1, 1, 1, "t4", 4),
                                                                 make_app("y", 1, 1, 1, "t4", 3)}));
  RunConfig c;
  c.move_budget_fraction = 1.0;
  const Problem p = compile(s, c);
  const auto r = is_feasible(p, {0, 3});
  EXPECT_FALSE(r.feasible);
  ASSERT_TRUE(r.has(Constraint::kPlacement));
  EXPECT_NE(r.violations[0].describe().find("C4"), std::string::npos);
  EXPECT_NE(r.violations[0].describe().find("'x'"), std::string::npos);
  EXPECT_TRUE(is_feasible(p, {4, 0}).feasible);
}

TEST(IsFeasible, CapacityAndTaskLimitNamed) {
  const auto s = share(Snapshot({make_tier("t1", 100, 100, 10), make_tier("t2", 50, 100, 4)},
                                {make_app("a", 40, 10, 3, "t1"), make_app("b", 20, 10, 3, "t1")}));
  RunConfig c;
  c.move_budget_fraction = 1.0;
  const Problem p = compile(s, c);
  const auto r = is_feasible(p, {1, 1});
  EXPECT_TRUE(r.has(Constraint::kCapacity));
  EXPECT_TRUE(r.has(Constraint::kTaskLimit));
  EXPECT_FALSE(r.has(Constraint::kMovement));
  EXPECT_NE(r.violations[0].describe().find("t2"), std::string::npos);
}

TEST(Score, IdentityHasNoMovementCost) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto s = share(testing::random_small_instance(rng, 8, 3));
    const auto sc = score(compile(s, RunConfig{}), s->initial_assignment());
    EXPECT_EQ(sc.movement_cost, 0);
    EXPECT_EQ(sc.critical_moves, 0.0);
  }
}

TEST(Score, OverTargetArithmetic) {
  const auto s = share(Snapshot({make_tier("t1", 100, 100, 100)}, {make_app("a", 75, 10, 10, "t1")}));
  EXPECT_NEAR(score(compile(s, RunConfig{}), {0}).over_target, 0.05, 1e-12);
}

TEST(Score, MovementCostSumsMovedTasks) {
  const auto s = share(Snapshot({make_tier("t1", 100, 100, 100), make_tier("t2", 100, 100, 100)},
                                {make_app("a", 1, 1, 5, "t1", 3, 2.0), make_app("b", 1, 1, 7, "t1", 3, 4.0),
                                 make_app("c", 1, 1, 11, "t1", 3, 3.0)}));
  RunConfig c;
  c.move_budget_fraction = 1.0;
  const Problem p = compile(s, c);
  const Assignment a{1, 1, 0};
  const auto sc = score(p, a);
  EXPECT_EQ(sc.movement_cost, 5 + 7);
  // Median 3: only b (4.0) is above it.
  EXPECT_DOUBLE_EQ(sc.critical_moves, 4.0);
  testing::OracleRules rules;
  rules.critical_threshold = 3.0;
  const auto want = testing::oracle_score(*s, a, rules);
  EXPECT_NEAR(sc.over_target, want[0], 1e-12);
  EXPECT_NEAR(sc.resource_imbalance, want[1], 1e-12);
  EXPECT_NEAR(sc.task_imbalance, want[2], 1e-12);
}

TEST(Score, MatchesOracleOnRandomMappings) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 300; ++i) {
    const auto s = share(testing::random_small_instance(rng, 8, 4));
    const Problem p = compile(s, RunConfig{});
    Assignment a(s->app_count());
    for (auto& t : a) t = std::uniform_int_distribution<std::size_t>(0, s->tier_count() - 1)(rng);
    testing::OracleRules rules;
    std::vector<double> crits;
    for (const auto& app : s->apps()) crits.push_back(app.criticality_score);
    rules.critical_threshold = testing::oracle_median(crits);
    const auto want = testing::oracle_score(*s, a, rules);
    const auto got = score(p, a);
    for (Goal g : default_priorities()) {
      EXPECT_NEAR(got.get(g), want[static_cast<int>(g)], 1e-9) << to_string(g);
    }
  }
}

ScoreVector vec(double a, double b, double c, double d, double e) {
  ScoreVector v;
  v.over_target = a;
  v.resource_imbalance = b;
  v.task_imbalance = c;
  v.movement_cost = static_cast<std::int64_t>(d);
  v.critical_moves = e;
  return v;
}

TEST(Compare, Examples) {
  const auto a = vec(0, 0.5, 0.5, 9, 9);
  EXPECT_EQ(compare(a, a), std::weak_ordering::equivalent);
  EXPECT_EQ(compare(a, vec(0.1, 0, 0, 0, 0)), std::weak_ordering::less);
  EXPECT_EQ(compare(vec(0, 1e-10, 0, 0, 0), vec(0, 0, 0, 0, 0)), std::weak_ordering::equivalent);
  const std::vector<Goal> moves_first{Goal::kMovementCost, Goal::kOverTarget, Goal::kResourceImbalance,
                                      Goal::kTaskImbalance, Goal::kCriticalMoves};
  EXPECT_EQ(compare(a, vec(0.1, 0, 0, 0, 0), moves_first), std::weak_ordering::greater);
}

int sign(std::weak_ordering o) { return o < 0 ? -1 : (o > 0 ? 1 : 0); }

TEST(Compare, MatchesOracleAndIsTotal) {
  std::mt19937_64 rng(23);
  // Coarse values so ties and near-ties happen.
  auto draw = [&] {
    auto q = [&] { return std::uniform_int_distribution<int>(0, 3)(rng) * 0.25; };
    return vec(q(), q(), q(), std::uniform_int_distribution<int>(0, 2)(rng), q());
  };
  auto as_array = [](const ScoreVector& v) {
    return testing::OracleScore{v.over_target, v.resource_imbalance, v.task_imbalance,
                                static_cast<double>(v.movement_cost), v.critical_moves};
  };
  for (int i = 0; i < 3000; ++i) {
    const auto a = draw(), b = draw(), c = draw();
    EXPECT_EQ(sign(compare(a, b)), testing::oracle_compare(as_array(a), as_array(b)));
    EXPECT_EQ(sign(compare(a, b)), -sign(compare(b, a)));
    if (compare(a, b) <= 0 && compare(b, c) <= 0) {
      EXPECT_LE(sign(compare(a, c)), 0);
    }
  }
}

TEST(AddAvoid, MakesPairInfeasibleAndIsIdempotent) {
  const auto s = share(Snapshot({make_tier("t1", 100, 100, 100), make_tier("t2", 100, 100, 100)},
                                {make_app("a", 1, 1, 1, "t1"), make_app("b", 1, 1, 1, "t1")}));
  RunConfig c;
  c.move_budget_fraction = 1.0;
  const Problem p = compile(s, c);
  EXPECT_TRUE(is_feasible(p, {1, 0}).feasible);
  const Problem q = add_avoid(p, "a", "t2");
  EXPECT_EQ(q.avoid().size(), 1u);
  EXPECT_FALSE(is_feasible(q, {1, 0}).feasible);
  EXPECT_TRUE(is_feasible(q, {0, 1}).feasible);
  EXPECT_EQ(add_avoid(q, "a", "t2").avoid().size(), 1u);
  EXPECT_EQ(p.avoid().size(), 0u);
  EXPECT_THROW(add_avoid(p, "nope", "t2"), UnknownIdError);
  EXPECT_THROW(add_avoid(p, "a", "t3"), UnknownIdError);
  const auto ids = q.avoid_ids();
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0], std::make_pair(std::string("a"), std::string("t2")));
}

TEST(AddAvoid, AvoidingAllOtherTiersPinsTheApp) {
  std::vector<TierSpec> tiers;
  for (int i = 1; i <= 3; ++i) tiers.push_back(make_tier("t" + std::to_string(i), 100, 100, 100));
  const auto s = share(Snapshot(tiers, {make_app("x", 1, 1, 1, "t2"), make_app("y", 1, 1, 1, "t1")}));
  RunConfig c;
  c.move_budget_fraction = 1.0;
  Problem p = compile(s, c);
  p = add_avoid(add_avoid(p, "x", "t1"), "x", "t3");
  std::set<std::size_t> homes_for_x;
  testing::for_each_assignment(2, 3, [&](const std::vector<std::size_t>& a) {
    if (is_feasible(p, a).feasible) homes_for_x.insert(a[0]);
  });
  EXPECT_EQ(homes_for_x, std::set<std::size_t>{1});
}

TEST(AddAvoid, FeasibilityIsMonotone) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 60; ++i) {
    const auto s = share(testing::random_small_instance(rng, 5, 3));
    RunConfig c;
    c.move_budget_fraction = 0.5;
    const Problem p = compile(s, c);
    const std::size_t app = std::uniform_int_distribution<std::size_t>(0, s->app_count() - 1)(rng);
    const std::size_t tier = std::uniform_int_distribution<std::size_t>(0, s->tier_count() - 1)(rng);
    const Problem q = p.with_avoid(app, tier);
    testing::for_each_assignment(s->app_count(), s->tier_count(), [&](const std::vector<std::size_t>& a) {
      if (!is_feasible(p, a).feasible) {
        EXPECT_FALSE(is_feasible(q, a).feasible);
      }
    });
  }
}

TEST(IsFeasible, AgreesWithIndependentChecker) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 150; ++i) {
    const auto s = share(testing::random_small_instance(rng, 6, 3));
    RunConfig c;
    c.move_budget_fraction = 0.5;
    c.variant = i % 2 ? Variant::kWCnst : Variant::kNoCnst;
    Problem p = compile(s, c);
    testing::OracleRules rules;
    rules.budget = static_cast<std::int64_t>(std::floor(0.5 * s->app_count() + 1e-9));
    rules.restrict_transitions = c.variant == Variant::kWCnst;
    rules.allowed = testing::oracle_transitions(*s, 0.5);
    if (s->app_count() > 1) {
      p = p.with_avoid(1, 0);
      rules.avoid.insert({1, 0});
    }
    testing::for_each_assignment(s->app_count(), s->tier_count(), [&](const std::vector<std::size_t>& a) {
      ASSERT_EQ(is_feasible(p, a).feasible, testing::oracle_feasible(*s, a, rules));
    });
  }
}

}  // namespace
}  // namespace sptlb
