#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace swarmchain;
namespace ts = testing_support;

TEST(Network, ArrivalIsLatencyPlusSerialization) {
  Network net({Link{NodeId{1}, NodeId{2}, 1e6, 0.01}});
  EXPECT_DOUBLE_EQ(net.deliver(NodeId{1}, NodeId{2}, 1000000, 0.0), 1.01);
  EXPECT_DOUBLE_EQ(net.deliver(NodeId{2}, NodeId{1}, 500000, 2.0), 2.51);  // symmetric
  EXPECT_DOUBLE_EQ(net.deliver(NodeId{1}, NodeId{2}, 0, 3.0), 3.01);
  try {
    net.deliver(NodeId{1}, NodeId{3}, 1, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoLink);
  }
}

TEST(Network, RelayIsLowestCommonNeighbour) {
  Network net({Link{NodeId{1}, NodeId{5}, 1, 0}, Link{NodeId{5}, NodeId{9}, 1, 0}, Link{NodeId{1}, NodeId{3}, 1, 0},
               Link{NodeId{3}, NodeId{9}, 1, 0}, Link{NodeId{1}, NodeId{2}, 1, 0}});
  const std::set<NodeId> all{NodeId{1}, NodeId{2}, NodeId{3}, NodeId{5}, NodeId{9}};
  EXPECT_EQ(net.relay_between(NodeId{1}, NodeId{9}, all), NodeId{3});
  EXPECT_EQ(net.relay_between(NodeId{1}, NodeId{9}, {NodeId{5}, NodeId{9}}), NodeId{5});
  EXPECT_FALSE(net.relay_between(NodeId{2}, NodeId{9}, all));
}

TEST(EventQueue, TimeThenInsertionOrder) {
  EventQueue<int> q;
  q.push(2.0, 1);
  q.push(1.0, 2);
  q.push(2.0, 3);
  q.push(1.0, 4);
  std::vector<int> order;
  while (!q.empty()) order.push_back(q.pop().payload);
  EXPECT_EQ(order, (std::vector<int>{2, 4, 1, 3}));
}

TEST(Shards, MatchGoldenLayout) {
  std::ifstream in(ts::golden("shards.txt"));
  ASSERT_TRUE(in);
  std::vector<std::pair<NodeId, Position>> nodes;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<NodeId>> spatial;
  std::vector<std::vector<NodeId>> random;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "node") {
      std::uint32_t id;
      double x, y;
      ss >> id >> x >> y;
      nodes.push_back({NodeId{id}, {x, y}});
      continue;
    }
    std::vector<NodeId> members;
    std::string colon;
    std::int64_t cx = 0, cy = 0;
    std::size_t idx = 0;
    if (kind == "spatial") ss >> cx >> cy >> colon;
    else if (kind == "random") ss >> idx >> colon;
    else continue;
    std::uint32_t m;
    while (ss >> m) members.push_back(NodeId{m});
    if (kind == "spatial") spatial[{cx, cy}] = members;
    else random.push_back(members);
  }
  ASSERT_EQ(nodes.size(), 9u);
  const auto a = assign_shards(nodes, 50.0, 3, 42);
  ASSERT_EQ(a.spatial.size(), spatial.size());
  for (const auto& s : a.spatial) EXPECT_EQ(s.members, spatial.at(s.cell));
  ASSERT_EQ(a.randomized.size(), random.size());
  for (std::size_t i = 0; i < random.size(); ++i) EXPECT_EQ(a.randomized[i].members, random[i]);
}

TEST(Shards, EveryNodeInExactlyOneOfEachKind) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<NodeId, Position>> nodes;
    const auto n = 1 + rng.below(30);
    for (std::uint32_t i = 1; i <= n; ++i) nodes.push_back({NodeId{i}, {rng.uniform(-100, 200), rng.uniform(-100, 200)}});
    const auto k = static_cast<std::uint32_t>(1 + rng.below(6));
    const auto a = assign_shards(nodes, 50.0, k, rng.next());
    for (const auto& [id, pos] : nodes) {
      int sp = 0, rd = 0;
      for (const auto& s : a.spatial) sp += static_cast<int>(std::count(s.members.begin(), s.members.end(), id));
      for (const auto& s : a.randomized) rd += static_cast<int>(std::count(s.members.begin(), s.members.end(), id));
      EXPECT_EQ(sp, 1);
      EXPECT_EQ(rd, 1);
      EXPECT_EQ(a.spatial_of(id)->cell, grid_cell(pos, 50.0));
    }
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& s : a.randomized) lo = std::min(lo, s.members.size()), hi = std::max(hi, s.members.size());
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Shards, NineIntoThreeAndSingleCell) {
  std::vector<std::pair<NodeId, Position>> nodes;
  for (std::uint32_t i = 1; i <= 9; ++i) nodes.push_back({NodeId{i}, {1.0 + i, 2.0}});
  const auto a = assign_shards(nodes, 50.0, 3, 7);
  ASSERT_EQ(a.randomized.size(), 3u);
  for (const auto& s : a.randomized) EXPECT_EQ(s.members.size(), 3u);
  ASSERT_EQ(a.spatial.size(), 1u);
  EXPECT_EQ(a.spatial[0].members.size(), 9u);
}

TEST(Admission, DifficultyZeroAdmitsImmediately) {
  ChainConfig c;
  c.pow_difficulty_bits = 0;
  c.pow_timeout = 1.0;
  const auto p = try_join(NodeId{1}, 10.0, kZeroDigest, c, 1);
  EXPECT_TRUE(p.is_full);
  EXPECT_EQ(p.hashes_attempted, 1u);
}

TEST(Admission, SlowNodeTimesOut) {
  ChainConfig c;
  c.pow_difficulty_bits = 20;
  c.pow_timeout = 10.0;
  int admitted = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    try {
      const auto p = try_join(NodeId{1}, 100.0, kZeroDigest, c, seed);
      EXPECT_LE(p.elapsed, c.pow_timeout);
      ++admitted;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::AdmissionTimeout);
    }
  }
  // one full proof in 1000 hashes has probability about 1/1000
  EXPECT_LE(admitted, 2);
}

namespace {

std::vector<EpochTrace> run(const std::string& name, std::optional<std::uint64_t> epochs = std::nullopt,
                            std::optional<std::uint64_t> seed = std::nullopt) {
  const auto sc = load_scenario(ts::scenario(name));
  World w(sc, seed.value_or(sc.seed));
  return w.run(epochs.value_or(sc.epochs));
}

std::uint64_t received(const std::vector<EpochTrace>& traces, NodeId who) {
  std::uint64_t total = 0;
  for (const auto& t : traces)
    for (const auto& x : t.transfers)
      if (x.receiver == who) total += x.bytes_delivered;
  return total;
}

}  // namespace

TEST(World, SingleNodeHasNothingToExchange) {
  const auto traces = run("single_node");
  ASSERT_FALSE(traces.empty());
  for (const auto& t : traces) {
    EXPECT_TRUE(t.plan.exchanges.empty());
    EXPECT_TRUE(t.transfers.empty());
  }
  ASSERT_TRUE(traces.back().estimate);
  EXPECT_EQ(traces.back().estimate->nodes.size(), 1u);
  EXPECT_DOUBLE_EQ(traces.back().estimate->nodes.begin()->second.c_hat, 1.0);
}

TEST(World, SameSeedSameTrace) {
  const auto a = run("behaviors", 8);
  const auto b = run("behaviors", 8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].digest(), b[i].digest()) << "epoch " << i + 1;
  const auto c = run("behaviors", 8, 12345);
  EXPECT_NE(a.back().digest(), c.back().digest());
}

TEST(World, ChainReplaysToWorldState) {
  const auto sc = load_scenario(ts::scenario("behaviors"));
  World w(sc, sc.seed);
  w.run(10);
  EXPECT_EQ(replay(w.chain(), w.scenario().chain), w.state());
}

TEST(World, LazyMinerGetsLessThanItsTwin) {
  const auto sc = load_scenario(ts::scenario("behaviors"));
  World w(sc, sc.seed);
  const auto traces = w.run(sc.epochs);
  const auto& est = *traces.back().estimate;
  EXPECT_LT(est.nodes.at(NodeId{3}).c_hat, 0.75 * est.nodes.at(NodeId{2}).c_hat);
  EXPECT_LT(received(traces, NodeId{3}), received(traces, NodeId{2}));
}

TEST(World, LeechStopsGettingDataOnceBroke) {
  const auto traces = run("behaviors");
  std::uint64_t late = 0;
  for (const auto& t : traces)
    for (const auto& x : t.transfers)
      if (x.receiver == NodeId{4} && x.paid && t.epoch > traces.size() / 2) late += x.bytes_delivered;
  EXPECT_EQ(late, 0u);
}

TEST(World, UnregisteredDataIsNeverRelayed) {
  const auto traces = run("behaviors");
  int blocked = 0;
  for (const auto& t : traces)
    for (const auto& x : t.transfers) {
      if (!x.stamp_registered) EXPECT_EQ(x.bytes_relayed, 0u);
      if (x.blocked) ++blocked;
    }
  EXPECT_GT(blocked, 0);
}

TEST(World, CounterfeiterEndsNegative) {
  const auto sc = load_scenario(ts::scenario("honest_majority"));
  World w(sc, sc.seed);
  w.run(sc.epochs);
  EXPECT_LT(w.quality().global_q(NodeId{8}), 0.0);
  for (std::uint32_t i = 1; i <= 7; ++i) EXPECT_GT(w.quality().global_q(NodeId{i}), 0.0) << i;
}

TEST(World, AdHocChainDissolves) {
  const auto sc = load_scenario(ts::scenario("adhoc"));
  World w(sc, sc.seed);
  const auto traces = w.run(sc.epochs);
  EXPECT_TRUE(w.destroyed());
  const auto height = w.state().height;
  const auto more = w.run(3);
  EXPECT_EQ(w.state().height, height);
  for (const auto& t : more) EXPECT_TRUE(t.destroyed);
}

TEST(World, SupplyIdentityHoldsEveryEpoch) {
  const auto sc = load_scenario(ts::scenario("behaviors"));
  World w(sc, sc.seed);
  Tokens fees_before = 0;
  Tokens supply_before = 0;
  for (std::uint64_t e = 1; e <= sc.epochs; ++e) {
    const auto t = w.run_epoch();
    Tokens supply = 0;
    for (const auto& [id, acc] : w.state().accounts)
      for (const auto& lot : acc.lots) supply += lot.amount;
    Tokens fees = 0;  // every debit is a burned fee
    for (const auto& [lot_epoch, spent] : w.state().spent_by_lot_epoch) fees += spent;
    EXPECT_EQ(supply, supply_before + t.minted - (fees - fees_before) - t.expired) << "epoch " << e;
    supply_before = supply;
    fees_before = fees;
  }
}
