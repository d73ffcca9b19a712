#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "swarmchain/chain.hpp"
#include "swarmchain/error.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

/// One epoch's submitted proof, as the estimator sees it.
struct ProofHistoryEntry {
  std::uint64_t epoch = 0;
  std::uint32_t achieved_bits = 0;
  bool is_full = false;
  double elapsed = 0.0;
  std::uint64_t share_count = 0;  // 0: only the single best proof is known
  std::uint32_t share_bits = 0;

  static ProofHistoryEntry single(std::uint64_t epoch, std::uint32_t bits, double elapsed, bool full = false) {
    return {epoch, bits, full, elapsed, 0, 0};
  }

  static ProofHistoryEntry from(const ReportRecord& r) {
    return {r.epoch, r.achieved_bits, r.is_full, r.elapsed, r.share_count, r.share_bits};
  }
};

struct ProofHistory {
  NodeId node_id;
  std::vector<ProofHistoryEntry> entries;  // sorted by epoch, one per epoch
};

/// Hashes evidenced per second by one entry. With a share tally the evidence
/// is share_count × 2^share_bits; without one it is the best proof's 2^bits.
inline double hash_rate_point(const ProofHistoryEntry& entry) {
  if (!(entry.elapsed > 0.0)) throw Error(Errc::ZeroElapsed, "proof entry has no elapsed time");
  const double work = entry.share_count > 0
                          ? static_cast<double>(entry.share_count) * std::ldexp(1.0, static_cast<int>(entry.share_bits))
                          : std::ldexp(1.0, static_cast<int>(entry.achieved_bits));
  return work / entry.elapsed;
}

namespace detail {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sample standard deviation of the last `m` values.
inline Moments tail_moments(std::span<const double> values, std::size_t m) {
  const auto tail = values.subspan(values.size() - m);
  double sum = 0.0;
  for (double v : tail) sum += v;
  const double mean = sum / static_cast<double>(m);
  if (m < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : tail) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(m - 1))};
}

}  // namespace detail

/// Largest window N ≥ ε over the most recent rate points such that, for every
/// M with ε ≤ M < N, the mean of the last N points lies within one standard
/// deviation of the mean of the last M points. N = ε always qualifies.
inline std::size_t select_window(std::span<const double> rates, std::size_t min_proofs) {
  if (min_proofs == 0) min_proofs = 1;
  if (rates.size() < min_proofs) {
    throw Error(Errc::InsufficientHistory, "need " + std::to_string(min_proofs) + " proofs, have " +
                                               std::to_string(rates.size()));
  }
  std::vector<detail::Moments> by_m(rates.size() + 1);
  for (std::size_t m = min_proofs; m <= rates.size(); ++m) by_m[m] = detail::tail_moments(rates, m);

  std::size_t best = min_proofs;
  for (std::size_t n = min_proofs + 1; n <= rates.size(); ++n) {
    bool ok = true;
    for (std::size_t m = min_proofs; m < n && ok; ++m) {
      const double slack = 1e-12 * std::abs(by_m[m].mean);
      ok = std::abs(by_m[n].mean - by_m[m].mean) <= by_m[m].sd + slack;
    }
    if (ok) best = n;
  }
  return best;
}

inline std::vector<double> rate_points(const ProofHistory& history) {
  std::vector<double> rates;
  rates.reserve(history.entries.size());
  for (const auto& e : history.entries) rates.push_back(hash_rate_point(e));
  return rates;
}

struct NodeEstimate {
  double rate = 0.0;   // hashes/s, mean over the selected window
  double c_hat = 0.0;  // rate / max rate
  std::size_t window = 0;
};

struct ComputeEstimate {
  std::map<NodeId, NodeEstimate> nodes;
  double d_max = 0.0;  // bytes/s of the most capable node

  std::optional<double> c_hat(NodeId id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) return std::nullopt;
    return it->second.c_hat;
  }
};

/// Normalized compute estimate over every node with at least ε proofs.
inline ComputeEstimate estimate(std::span<const ProofHistory> histories, std::size_t min_proofs,
                                double bytes_per_hash_unit = 1.0) {
  ComputeEstimate out;
  for (const auto& h : histories) {
    if (h.entries.size() < min_proofs) continue;
    const auto rates = rate_points(h);
    const std::size_t n = select_window(rates, min_proofs);
    out.nodes[h.node_id] = {detail::tail_moments(rates, n).mean, 0.0, n};
  }
  if (out.nodes.empty()) throw Error(Errc::NoEligibleNodes, "no node has enough proof history");
  double max_rate = 0.0;
  for (const auto& [id, e] : out.nodes) max_rate = std::max(max_rate, e.rate);
  for (auto& [id, e] : out.nodes) e.c_hat = e.rate / max_rate;
  out.d_max = bytes_per_hash_unit * max_rate;
  return out;
}

/// Collects per-node histories from the epoch reports recorded on chain.
inline std::vector<ProofHistory> histories_from_state(const ChainState& state) {
  std::vector<ProofHistory> out;
  for (const auto& [id, records] : state.reports) {
    ProofHistory h{id, {}};
    for (const auto& r : records) h.entries.push_back(ProofHistoryEntry::from(r));
    out.push_back(std::move(h));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hash-rate / task-latency consistency

/// Hashing power times task latency (h/s × s). Constant across devices when
/// the hash rate tracks the resource the task is bound by.
inline double consistency_ratio(double hash_rate, double task_latency_s) { return hash_rate * task_latency_s; }

namespace detail {

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

struct OutlierRule {
  double iqr_multiplier = 2.0;
  double sigma_multiplier = 2.0;
};

/// Leave-one-out outlier test: value i is flagged when its distance to the
/// median of the others exceeds iqr_multiplier × IQR(others) and, when a
/// spread is known for it (not NaN), also exceeds sigma_multiplier × that spread.
inline std::vector<bool> flag_outliers(std::span<const double> values, std::span<const double> sigmas = {},
                                       OutlierRule rule = {}) {
  std::vector<bool> flags(values.size(), false);
  if (values.size() < 3) return flags;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<double> others;
    for (std::size_t j = 0; j < values.size(); ++j)
      if (j != i) others.push_back(values[j]);
    std::sort(others.begin(), others.end());
    const double median = detail::quantile_sorted(others, 0.5);
    const double iqr = detail::quantile_sorted(others, 0.75) - detail::quantile_sorted(others, 0.25);
    const double dev = std::abs(values[i] - median);
    bool flagged = dev > rule.iqr_multiplier * iqr;
    if (flagged && i < sigmas.size() && !std::isnan(sigmas[i])) flagged = dev > rule.sigma_multiplier * sigmas[i];
    flags[i] = flagged;
  }
  return flags;
}

}  // namespace swarmchain
