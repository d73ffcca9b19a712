#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

using namespace swarmchain;
namespace ts = testing_support;

namespace {

ProofHistory constant_history(NodeId id, double rate, std::size_t n) {
  ProofHistory h{id, {}};
  // bits 16 over 65536 / rate seconds gives exactly `rate`
  for (std::size_t i = 0; i < n; ++i) h.entries.push_back(ProofHistoryEntry::single(i + 1, 16, 65536.0 / rate));
  return h;
}

}  // namespace

TEST(HashRatePoint, SingleProofDefinition) {
  EXPECT_DOUBLE_EQ(hash_rate_point(ProofHistoryEntry::single(1, 16, 1.0)), 65536.0);
  EXPECT_DOUBLE_EQ(hash_rate_point(ProofHistoryEntry::single(1, 16, 0.5)), 131072.0);
}

TEST(HashRatePoint, ShareTally) {
  ProofHistoryEntry e{1, 20, true, 4.0, 300, 12};
  EXPECT_DOUBLE_EQ(hash_rate_point(e), 300.0 * 4096.0 / 4.0);
}

TEST(HashRatePoint, ZeroElapsedRejected) {
  try {
    hash_rate_point(ProofHistoryEntry::single(1, 16, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroElapsed);
  }
}

TEST(SelectWindow, ConstantHistoryUsesEverything) {
  const std::vector<double> r(10, 5000.0);
  EXPECT_EQ(select_window(r, 3), 10u);
}

TEST(SelectWindow, StepChangeExcludesOldRegime) {
  std::vector<double> r;
  for (int i = 0; i < 5; ++i) r.push_back(1000.0 + (i % 2 ? 5.0 : -5.0));
  for (int i = 0; i < 5; ++i) r.push_back(2000.0 + (i % 2 ? 5.0 : -5.0));
  const auto n = select_window(r, 3);
  EXPECT_GE(n, 3u);
  EXPECT_LE(n, 5u);
  // the criterion holds for the chosen window
  const std::span<const double> all(r);
  for (std::size_t m = 3; m < n; ++m) {
    auto mean = [&](std::size_t k) {
      double s = 0;
      for (auto v : all.last(k)) s += v;
      return s / static_cast<double>(k);
    };
    double ss = 0;
    for (auto v : all.last(m)) ss += (v - mean(m)) * (v - mean(m));
    EXPECT_LE(std::abs(mean(n) - mean(m)), std::sqrt(ss / static_cast<double>(m - 1)) + 1e-9);
  }
}

TEST(SelectWindow, ShortHistory) {
  const std::vector<double> r{1.0, 2.0};
  try {
    select_window(r, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientHistory);
  }
}

TEST(Estimate, NormalizesToFastestBoard) {
  const std::vector<double> rates{89000, 79000, 184000, 561000};
  std::vector<ProofHistory> hs;
  for (std::uint32_t i = 0; i < rates.size(); ++i) hs.push_back(constant_history(NodeId{i + 1}, rates[i], 6));
  const auto est = estimate(hs, 3);
  const std::vector<double> want{0.15865, 0.14082, 0.32799, 1.0};
  for (std::uint32_t i = 0; i < want.size(); ++i) EXPECT_NEAR(*est.c_hat(NodeId{i + 1}), want[i], 1e-4);
  EXPECT_DOUBLE_EQ(est.d_max, 561000.0);
  EXPECT_DOUBLE_EQ(estimate(hs, 3, 0.5).d_max, 280500.0);
}

TEST(Estimate, SingleAndEqualNodes) {
  std::vector<ProofHistory> one{constant_history(NodeId{4}, 1234, 3)};
  EXPECT_DOUBLE_EQ(*estimate(one, 3).c_hat(NodeId{4}), 1.0);
  std::vector<ProofHistory> two{constant_history(NodeId{1}, 500, 3), constant_history(NodeId{2}, 500, 3)};
  const auto est = estimate(two, 3);
  EXPECT_DOUBLE_EQ(*est.c_hat(NodeId{1}), 1.0);
  EXPECT_DOUBLE_EQ(*est.c_hat(NodeId{2}), 1.0);
}

TEST(Estimate, SkipsShortHistoriesAndFailsWhenNoneQualify) {
  std::vector<ProofHistory> hs{constant_history(NodeId{1}, 500, 5), constant_history(NodeId{2}, 900, 2)};
  const auto est = estimate(hs, 3);
  EXPECT_TRUE(est.c_hat(NodeId{1}));
  EXPECT_FALSE(est.c_hat(NodeId{2}));
  hs.erase(hs.begin());
  try {
    estimate(hs, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoEligibleNodes);
  }
}

TEST(Estimate, SimulatedBoardWithinTenPercent) {
  const auto params = PowParams::for_difficulty(22);
  ProofHistory h{NodeId{1}, {}};
  for (std::uint64_t e = 1; e <= 200; ++e) {
    const auto puzzle = derive_puzzle(NodeId{1}, ts::digest_of(std::to_string(e)), params);
    auto p = solve(puzzle, params, 1ull << 40, 600.0, 89000.0, PowMode::Simulated, mix_seed(11, e));
    ASSERT_TRUE(p);
    h.entries.push_back({e, p->achieved_bits, p->is_full, p->elapsed, p->share_count, p->share_bits});
  }
  double sum = 0;
  for (double r : rate_points(h)) sum += r;
  EXPECT_NEAR(sum / 200.0 / 89000.0, 1.0, 0.10);
  std::vector<ProofHistory> hs{h};
  EXPECT_NEAR(estimate(hs, 3).nodes.at(NodeId{1}).rate / 89000.0, 1.0, 0.10);
}

TEST(Consistency, RatioDefinition) {
  EXPECT_NEAR(consistency_ratio(89000, 0.0044), 391.6, 1e-9);
  EXPECT_NEAR(consistency_ratio(184000, 0.0007), 128.8, 1e-9);
  EXPECT_DOUBLE_EQ(consistency_ratio(250.0, 1.0 / 250.0), 1.0);
}

TEST(Consistency, FlagsOnlyTheOddBoard) {
  const std::vector<double> ratios{391.6, 395.0, 128.8, 431.97};
  const auto flags = flag_outliers(ratios);
  EXPECT_EQ(flags, (std::vector<bool>{false, false, true, false}));
}

TEST(Consistency, KnownSpreadCanClearAFlag) {
  const std::vector<double> ratios{391.6, 395.0, 128.8, 431.97};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // a huge stated uncertainty on the odd board means it is not an outlier
  EXPECT_FALSE(flag_outliers(ratios, std::vector<double>{nan, nan, 500.0, nan})[2]);
  EXPECT_TRUE(flag_outliers(ratios, std::vector<double>{nan, nan, 10.0, nan})[2]);
}

TEST(Consistency, FixtureFileFlagsTx2Classification) {
  const auto rows = analyze_latencies(io::read_latency_csv(ts::source_dir() / "data" / "fixtures" / "device_latency.csv"));
  std::vector<std::string> flagged;
  for (const auto& r : rows)
    if (r.outlier) flagged.push_back(r.node_id + "/" + r.task);
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_NE(flagged[0].find("classification"), std::string::npos);
}

TEST(Consistency, TooFewValuesNeverFlag) {
  const std::vector<double> two{1.0, 1000.0};
  EXPECT_EQ(flag_outliers(two), (std::vector<bool>{false, false}));
}
