#pragma once

#include <atomic>
#include <chrono>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "swarmchain/estimator.hpp"
#include "swarmchain/io.hpp"
#include "swarmchain/pow.hpp"

namespace swarmchain {

struct HashRateMeasurement {
  std::uint64_t hashes = 0;
  double seconds = 0.0;
  double rate = 0.0;  // hashes/s over all lanes
  std::uint32_t best_bits = 0;
  unsigned lanes = 1;
};

/// Wall-clock hashing throughput on the host: every lane scans its own
/// nonce stride of a fixed puzzle until the deadline.
inline HashRateMeasurement measure_hash_rate(std::uint32_t difficulty_bits, double duration_s, unsigned lanes = 1) {
  lanes = std::max(1u, lanes);
  const auto params = PowParams::for_difficulty(difficulty_bits);
  const auto puzzle = derive_puzzle(NodeId{1}, kZeroDigest, params);
  Sha256 prefix;
  prefix.update(puzzle.preimage_prefix());

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto deadline = start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(duration_s));
  constexpr std::uint64_t kChunk = 4096;

  std::vector<std::uint64_t> counts(lanes, 0);
  std::vector<std::uint32_t> best(lanes, 0);
  auto work = [&](unsigned lane) {
    std::uint64_t next = static_cast<std::uint64_t>(lane) * kChunk;
    do {
      const auto r = detail::scan_range(prefix, next, next + kChunk, PowParams{256, 0});
      counts[lane] += r.attempts;
      best[lane] = std::max(best[lane], r.best_bits);
      next += static_cast<std::uint64_t>(lanes) * kChunk;
    } while (clock::now() < deadline);
  };
  if (lanes == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned i = 0; i < lanes; ++i) threads.emplace_back(work, i);
    for (auto& t : threads) t.join();
  }
  HashRateMeasurement m;
  m.seconds = std::chrono::duration<double>(clock::now() - start).count();
  for (unsigned i = 0; i < lanes; ++i) {
    m.hashes += counts[i];
    m.best_bits = std::max(m.best_bits, best[i]);
  }
  m.rate = m.seconds > 0.0 ? static_cast<double>(m.hashes) / m.seconds : 0.0;
  m.lanes = lanes;
  return m;
}

struct ConsistencyRow {
  std::string node_id;
  std::string task;
  double hash_rate = 0.0;
  double latency = 0.0;
  double ratio = 0.0;
  std::optional<double> sigma;  // hash_rate × latency_std
  bool outlier = false;
};

/// Hash-rate × latency per device and task, with outliers flagged within
/// each task group.
inline std::vector<ConsistencyRow> analyze_latencies(const std::vector<io::LatencyRow>& rows, OutlierRule rule = {}) {
  std::vector<ConsistencyRow> out;
  std::map<std::string, std::vector<std::size_t>> by_task;
  for (const auto& r : rows) {
    ConsistencyRow c{r.node_id, r.task, r.hash_rate, r.latency, consistency_ratio(r.hash_rate, r.latency), {}, false};
    if (r.latency_std) c.sigma = r.hash_rate * *r.latency_std;
    by_task[r.task].push_back(out.size());
    out.push_back(std::move(c));
  }
  for (const auto& [task, idx] : by_task) {
    std::vector<double> values;
    std::vector<double> sigmas;
    for (auto i : idx) {
      values.push_back(out[i].ratio);
      sigmas.push_back(out[i].sigma.value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    const auto flags = flag_outliers(values, sigmas, rule);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]].outlier = flags[k];
  }
  return out;
}

}  // namespace swarmchain
