#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "swarmchain/codec.hpp"
#include "swarmchain/rng.hpp"
#include "swarmchain/sha256.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

/// How proofs are produced and checked.
///  - Live: nonces are searched by real hashing and verified by rehashing.
///  - Simulated: attempt counts are drawn from the geometric model of
///    SHA-256 outputs; nonces are synthetic and the chain trusts the
///    reported bit counts (consistency-checked only).
enum class PowMode : std::uint8_t { Live = 0, Simulated = 1 };

struct PowParams {
  std::uint32_t difficulty_bits = 20;
  std::uint32_t min_partial_bits = 12;

  static PowParams for_difficulty(std::uint32_t d) {
    return {d, d >= 8 ? d - 8 : 0};
  }
};

/// Per-node puzzle for one epoch. The preimage prefix commits to the epoch
/// seed and the node id, so no two nodes share a puzzle in the same epoch.
struct Puzzle {
  NodeId node_id;
  Digest epoch_seed{};
  std::uint32_t difficulty_bits = 0;

  bool operator==(const Puzzle&) const = default;

  std::vector<std::uint8_t> preimage_prefix() const {
    Encoder e;
    e.digest(epoch_seed).node(node_id);
    return std::move(e).take();
  }
};

inline Puzzle derive_puzzle(NodeId node, const Digest& epoch_seed, const PowParams& params) {
  return Puzzle{node, epoch_seed, params.difficulty_bits};
}

/// Best proof found in one mining session.
///
/// `share_count` counts every attempt that reached `share_bits`
/// (= min_partial_bits), including the returned nonce. It is the pool-share
/// tally the estimator uses as evidence of work.
struct Proof {
  std::uint64_t nonce = 0;
  std::uint32_t achieved_bits = 0;
  std::uint64_t hashes_attempted = 0;
  double elapsed = 0.0;  // simulated seconds
  bool is_full = false;
  std::uint64_t share_count = 0;
  std::uint32_t share_bits = 0;

  bool operator==(const Proof&) const = default;
};

inline std::uint32_t leading_zero_bits(const Digest& d) noexcept {
  std::uint32_t bits = 0;
  for (auto byte : d) {
    if (byte == 0) {
      bits += 8;
      continue;
    }
    bits += static_cast<std::uint32_t>(std::countl_zero(byte));
    break;
  }
  return bits;
}

namespace detail {

inline void append_nonce(std::uint8_t (&out)[8], std::uint64_t nonce) noexcept {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(nonce >> (56 - 8 * i));
}

/// Hashes prefix ‖ nonce (u64 big-endian) from a prefix-absorbed context.
inline Digest hash_nonce(const Sha256& prefix_state, std::uint64_t nonce) {
  Sha256 h = prefix_state;
  std::uint8_t buf[8];
  append_nonce(buf, nonce);
  return h.update(std::span<const std::uint8_t>(buf, 8)).finish();
}

struct LaneResult {
  std::uint64_t attempts = 0;
  std::uint64_t shares = 0;
  std::uint64_t best_nonce = 0;
  std::uint32_t best_bits = 0;
  bool found_full = false;
  bool any = false;
};

inline LaneResult scan_range(const Sha256& prefix_state, std::uint64_t begin, std::uint64_t end,
                             const PowParams& params) {
  LaneResult r;
  for (std::uint64_t nonce = begin; nonce < end; ++nonce) {
    const auto bits = leading_zero_bits(hash_nonce(prefix_state, nonce));
    ++r.attempts;
    if (bits >= params.min_partial_bits) ++r.shares;
    if (!r.any || bits > r.best_bits) {
      r.best_bits = bits;
      r.best_nonce = nonce;
      r.any = true;
    }
    if (bits >= params.difficulty_bits) {
      r.best_bits = bits;
      r.best_nonce = nonce;
      r.found_full = true;
      break;
    }
  }
  return r;
}

}  // namespace detail

/// Recomputes the achieved bits for a nonce: exactly one hash.
inline std::uint32_t verify(const Puzzle& puzzle, std::uint64_t nonce) {
  Sha256 h;
  h.update(puzzle.preimage_prefix());
  return leading_zero_bits(detail::hash_nonce(h, nonce));
}

/// Sequential nonce search from 0 over at most `hash_budget` attempts.
/// Stops at the first full proof; otherwise returns the best partial proof
/// (highest bits, then smallest nonce). Returns nullopt when no attempt
/// reached min_partial_bits. With lanes > 1 the range is split across
/// threads and reduced to exactly the sequential answer.
inline std::optional<Proof> solve_live(const Puzzle& puzzle, const PowParams& params,
                                       std::uint64_t hash_budget, double hash_rate,
                                       unsigned lanes = 1) {
  if (hash_budget == 0) return std::nullopt;
  Sha256 prefix;
  prefix.update(puzzle.preimage_prefix());

  lanes = std::max(1u, std::min<unsigned>(lanes, static_cast<unsigned>(std::min<std::uint64_t>(hash_budget, 64))));
  std::vector<detail::LaneResult> results(lanes);
  const std::uint64_t per_lane = hash_budget / lanes;
  auto lane_begin = [&](unsigned i) { return per_lane * i; };
  auto lane_end = [&](unsigned i) { return i + 1 == lanes ? hash_budget : per_lane * (i + 1); };

  if (lanes == 1) {
    results[0] = detail::scan_range(prefix, 0, hash_budget, params);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(lanes);
    for (unsigned i = 0; i < lanes; ++i) {
      workers.emplace_back([&, i] { results[i] = detail::scan_range(prefix, lane_begin(i), lane_end(i), params); });
    }
    for (auto& w : workers) w.join();
  }

  // Lanes are contiguous and ordered, so folding left reproduces the
  // sequential scan: everything before the first full proof counts.
  detail::LaneResult total;
  for (const auto& r : results) {
    total.attempts += r.attempts;
    total.shares += r.shares;
    if (r.any && (!total.any || r.best_bits > total.best_bits || r.found_full)) {
      total.best_bits = r.best_bits;
      total.best_nonce = r.best_nonce;
      total.any = true;
    }
    if (r.found_full) {
      total.found_full = true;
      break;
    }
  }

  if (!total.any || total.best_bits < params.min_partial_bits) return std::nullopt;
  Proof p;
  p.nonce = total.best_nonce;
  p.achieved_bits = total.best_bits;
  p.hashes_attempted = total.attempts;
  p.elapsed = hash_rate > 0.0 ? static_cast<double>(total.attempts) / hash_rate : 0.0;
  p.is_full = total.found_full;
  p.share_count = total.shares;
  p.share_bits = params.min_partial_bits;
  return p;
}

/// Draws the outcome of a mining session from the geometric model of
/// uniformly distributed hash outputs, without hashing on the host.
inline std::optional<Proof> solve_simulated(const Puzzle& puzzle, const PowParams& params,
                                            std::uint64_t hash_budget, double hash_rate, Rng& rng) {
  (void)puzzle;
  if (hash_budget == 0) return std::nullopt;
  const std::uint32_t d = params.difficulty_bits;
  const std::uint32_t s = std::min(params.min_partial_bits, d);
  const double p_full = std::ldexp(1.0, -static_cast<int>(d));
  const double p_share = std::ldexp(1.0, -static_cast<int>(s));
  // probability that a non-full attempt is still a share
  const double p_share_only = p_full >= 1.0 ? 0.0 : (p_share - p_full) / (1.0 - p_full);

  Proof p;
  p.share_bits = s;
  const std::uint64_t first_full = rng.geometric(p_full);
  if (first_full <= hash_budget) {
    p.is_full = true;
    p.hashes_attempted = first_full;
    p.nonce = first_full - 1;
    const std::uint64_t extra = rng.geometric(0.5) - 1;
    p.achieved_bits = static_cast<std::uint32_t>(std::min<std::uint64_t>(256, d + extra));
    p.share_count = 1 + rng.binomial(first_full - 1, p_share_only);
  } else {
    p.hashes_attempted = hash_budget;
    p.share_count = rng.binomial(hash_budget, p_share_only);
    if (p.share_count == 0) return std::nullopt;
    // Max of share_count draws from bits in [s, d) with P(bits >= k) ∝ 2^-k - 2^-d.
    const double u = rng.uniform_open0();
    const double n = static_cast<double>(p.share_count);
    std::uint32_t best = d - 1;
    for (std::uint32_t k = s; k + 1 < d; ++k) {
      const double below_next = (p_share - std::ldexp(1.0, -static_cast<int>(k + 1))) / (p_share - p_full);
      if (std::pow(below_next, n) >= u) {
        best = k;
        break;
      }
    }
    p.achieved_bits = best;
    p.nonce = rng.below(hash_budget);
  }
  p.elapsed = hash_rate > 0.0 ? static_cast<double>(p.hashes_attempted) / hash_rate : 0.0;
  return p;
}

/// Budget-capped solve: at most min(hash_budget, rate × timeout) attempts.
inline std::optional<Proof> solve(const Puzzle& puzzle, const PowParams& params, std::uint64_t hash_budget,
                                  double timeout, double hash_rate, PowMode mode, std::uint64_t rng_seed) {
  const double by_time = std::floor(hash_rate * timeout);
  const std::uint64_t cap =
      by_time >= 1.8e19 ? hash_budget : std::min<std::uint64_t>(hash_budget, static_cast<std::uint64_t>(by_time));
  if (mode == PowMode::Live) return solve_live(puzzle, params, cap, hash_rate);
  Rng rng(rng_seed);
  return solve_simulated(puzzle, params, cap, hash_rate, rng);
}

}  // namespace swarmchain
