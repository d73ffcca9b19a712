#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace swarmchain;
namespace ts = testing_support;

namespace {

DataRequest req(std::uint32_t id, std::uint64_t size, double lo = 1, double hi = 2) {
  return {NodeId{id}, DataType::PointCloud, size, lo, hi};
}

AvailableData offer(std::uint32_t id, std::uint64_t size, double lo = 1, double hi = 2) {
  return {NodeId{id}, DataType::PointCloud, size, lo, hi};
}

AllocationProblem one_pair() {
  AllocationProblem p;
  p.requests = {req(1, 500)};
  p.availables = {offer(2, 800)};
  p.quality = {{NodeId{2}, 2.0}};
  p.c_hat = {{NodeId{1}, 1.0}};
  p.d_max = 10000;
  p.bandwidth = {{{NodeId{1}, NodeId{2}}, 10000}};
  return p;
}

}  // namespace

TEST(MismatchError, Examples) {
  EXPECT_DOUBLE_EQ(mismatch_error(req(1, 100), offer(2, 100)), 1.0);
  EXPECT_DOUBLE_EQ(mismatch_error(req(1, 100, 0, 1), offer(2, 100, 2, 3)), 2.0);
  EXPECT_DOUBLE_EQ(mismatch_error(req(1, 100000), offer(2, 50000)), 1.5);
  auto img = offer(2, 100);
  img.type = DataType::Image;
  try {
    mismatch_error(req(1, 100), img);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TypeMismatch);
  }
}

TEST(MismatchError, GrowsWithGapAndShortfall) {
  double prev = 1.0;
  for (double shift = 1.5; shift < 6; shift += 0.5) {
    const double e = mismatch_error(req(1, 100, 0, 1), offer(2, 100, shift, shift + 1));
    EXPECT_GT(e, prev);
    prev = e;
  }
  EXPECT_GT(mismatch_error(req(1, 100), offer(2, 40)), mismatch_error(req(1, 100), offer(2, 60)));
}

TEST(Objective, Examples) {
  const std::map<NodeId, double> q{{NodeId{2}, 2.0}, {NodeId{3}, -1.0}};
  EXPECT_DOUBLE_EQ(objective({}, q, 1, 1), 0.0);
  Exchange x;
  x.provider = NodeId{2};
  x.error = 1.0;
  std::vector<Exchange> one{x};
  EXPECT_DOUBLE_EQ(objective(one, q, 1, 1), 3.0);
  Exchange y = x;
  y.provider = NodeId{3};
  y.error = 2.0;
  y.receiver = NodeId{7};
  std::vector<Exchange> two{x, y};
  EXPECT_DOUBLE_EQ(objective(two, q, 0.5, 2.0), (0.5 * 2 + 2.0 / 1) + (0.5 * -1 + 2.0 / 2));
  y.provider = NodeId{9};
  std::vector<Exchange> missing{y};
  try {
    objective(missing, q, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingQuality);
  }
}

TEST(Optimize, SingleSlackExchange) {
  const auto plan = optimize(one_pair());
  ASSERT_EQ(plan.exchanges.size(), 1u);
  EXPECT_EQ(plan.exchanges[0].size, 500u);
  EXPECT_DOUBLE_EQ(plan.objective_value, 3.0);
}

TEST(Optimize, SizeClampedByEveryConstraint) {
  auto p = one_pair();
  p.c_hat[NodeId{1}] = 0.03;  // 300 bytes of capacity
  EXPECT_EQ(optimize(p).exchanges.at(0).size, 300u);
  p.bandwidth[{NodeId{1}, NodeId{2}}] = 120.5;
  EXPECT_EQ(optimize(p).exchanges.at(0).size, 120u);
  p.availables[0].max_size = 50;
  EXPECT_EQ(optimize(p).exchanges.at(0).size, 50u);
}

TEST(Optimize, EmptyAndUnlinked) {
  AllocationProblem empty;
  EXPECT_TRUE(optimize(empty).exchanges.empty());
  auto p = one_pair();
  p.bandwidth.clear();
  EXPECT_TRUE(optimize(p).exchanges.empty());
  p = one_pair();
  p.c_hat.clear();
  EXPECT_TRUE(optimize(p).exchanges.empty());
}

TEST(Optimize, HonestProviderPreferredUnderAggregateCap) {
  AllocationProblem p;
  p.mode = CapacityMode::Aggregate;
  p.requests = {req(1, 600)};
  p.availables = {offer(2, 600), offer(3, 600)};
  p.quality = {{NodeId{2}, -5.0}, {NodeId{3}, 1.0}};
  p.c_hat = {{NodeId{1}, 0.6}};
  p.d_max = 1000;
  p.bandwidth = {{{NodeId{1}, NodeId{2}}, 1e6}, {{NodeId{1}, NodeId{3}}, 1e6}};
  p.alpha = 10;
  const auto plan = optimize(p);
  ASSERT_EQ(plan.exchanges.size(), 1u);
  EXPECT_EQ(plan.exchanges[0].provider, NodeId{3});
  EXPECT_DOUBLE_EQ(plan.objective_value, oracle::best_objective(p));
}

TEST(Optimize, NegativeTermsAreLeftOut) {
  auto p = one_pair();
  p.quality[NodeId{2}] = -3.0;
  EXPECT_TRUE(optimize(p).exchanges.empty());
}

TEST(Optimize, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto mode = trial % 2 ? CapacityMode::Aggregate : CapacityMode::PerExchange;
    const auto p = oracle::random_problem(rng, 3, 3, mode);
    const auto plan = optimize(p);
    EXPECT_EQ(plan.objective_value, oracle::best_objective(p)) << "trial " << trial;
    EXPECT_TRUE(plan_feasible(p, plan.exchanges));
    EXPECT_DOUBLE_EQ(objective(plan.exchanges, p.quality, p.alpha, p.beta), plan.objective_value);
  }
}

TEST(Optimize, CandidateListMatchesOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = oracle::random_problem(rng, 4, 5);
    const auto mine = build_candidates(p);
    const auto theirs = oracle::candidates(p);
    ASSERT_EQ(mine.size(), theirs.size());
    for (std::size_t i = 0; i < mine.size(); ++i) {
      EXPECT_EQ(static_cast<double>(mine[i].size), theirs[i].size);
      EXPECT_DOUBLE_EQ(mine[i].term_value, theirs[i].term);
    }
  }
}

TEST(Optimize, ArgmaxInvariantUnderScaling) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = oracle::random_problem(rng, 3, 4, trial % 2 ? CapacityMode::Aggregate : CapacityMode::PerExchange);
    const auto base = optimize(p);
    for (double k : {0.5, 2.0, 3.0, 10.0}) {
      auto q = p;
      q.alpha *= k;
      q.beta *= k;
      const auto scaled = optimize(q);
      ASSERT_EQ(scaled.exchanges.size(), base.exchanges.size());
      for (std::size_t i = 0; i < base.exchanges.size(); ++i)
        EXPECT_EQ(scaled.exchanges[i].key(), base.exchanges[i].key());
      EXPECT_NEAR(scaled.objective_value, k * base.objective_value, 1e-9 * std::max(1.0, std::abs(scaled.objective_value)));
    }
  }
}

TEST(Optimize, ZeroAlphaIgnoresQuality) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = oracle::random_problem(rng, 3, 4, trial % 2 ? CapacityMode::Aggregate : CapacityMode::PerExchange);
    p.alpha = 0.0;
    const auto a = optimize(p);
    for (auto& [id, q] : p.quality) q = -q * 3.0 + 1.0;
    const auto b = optimize(p);
    ASSERT_EQ(a.exchanges.size(), b.exchanges.size());
    for (std::size_t i = 0; i < a.exchanges.size(); ++i) EXPECT_EQ(a.exchanges[i], b.exchanges[i]);
  }
}

TEST(Optimize, RaisingBandwidthOrCapacityNeverHurtsPerExchange) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = oracle::random_problem(rng, 3, 3);
    const double before = optimize(p).objective_value;
    auto q = p;
    for (auto& [k, bw] : q.bandwidth) bw *= 1.0 + rng.uniform();
    EXPECT_GE(optimize(q).objective_value, before);
    auto r = p;
    for (auto& [k, c] : r.c_hat) c = std::min(1.0, c * (1.0 + rng.uniform()));
    EXPECT_GE(optimize(r).objective_value, before);
  }
}

TEST(Optimize, RaisingCapacityNeverHurtsAggregate) {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = oracle::random_problem(rng, 3, 3, CapacityMode::Aggregate);
    const double before = optimize(p).objective_value;
    for (auto& [k, c] : p.c_hat) c = std::min(1.0, c * (1.0 + rng.uniform()));
    EXPECT_GE(optimize(p).objective_value, before);
  }
}

// With candidate size tied to the clamped maximum, a wider link makes an
// exchange bigger, which can crowd a receiver's aggregate budget.
TEST(Optimize, AggregateBandwidthCounterexample) {
  AllocationProblem p;
  p.mode = CapacityMode::Aggregate;
  p.requests = {req(1, 60)};
  p.availables = {offer(2, 60), offer(3, 60)};
  p.quality = {{NodeId{2}, 1.0}, {NodeId{3}, 1.0}};
  p.c_hat = {{NodeId{1}, 1.0}};
  p.d_max = 100;
  p.bandwidth = {{{NodeId{1}, NodeId{2}}, 30}, {{NodeId{1}, NodeId{3}}, 60}};
  const double before = optimize(p).objective_value;
  EXPECT_EQ(optimize(p).exchanges.size(), 2u);
  p.bandwidth[{NodeId{1}, NodeId{2}}] = 50;
  EXPECT_LT(optimize(p).objective_value, before);
}

TEST(Optimize, GreedyPathIsFeasibleAndDeterministic) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_problem(rng, 8, 10, trial % 2 ? CapacityMode::Aggregate : CapacityMode::PerExchange);
    ASSERT_GT(build_candidates(p).size(), kExhaustiveLimit);
    const auto a = optimize(p);
    EXPECT_TRUE(plan_feasible(p, a.exchanges));
    EXPECT_EQ(a.exchanges, optimize(p).exchanges);
    for (const auto& x : a.exchanges) EXPECT_GE(x.term_value, 0.0);
  }
}

TEST(Optimize, RulesOutNothingForPerExchangeWhenAllPositive) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = oracle::random_problem(rng, 3, 3);
    for (auto& [id, q] : p.quality) q = std::abs(q);
    const auto cands = build_candidates(p);
    EXPECT_EQ(optimize(p).exchanges.size(), cands.size());
  }
}
