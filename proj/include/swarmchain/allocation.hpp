#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "swarmchain/chain.hpp"
#include "swarmchain/error.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

/// Mismatch between what a receiver asked for and what a provider offers.
/// E = 1 + gap / mean_width + shortfall / requested, so E == 1 exactly when
/// the resolution intervals overlap and the offer covers the requested size.
/// Point intervals (zero mean width) normalize the gap by 1.
inline double mismatch_error(const DataRequest& req, const AvailableData& avail) {
  if (req.type != avail.type) throw Error(Errc::TypeMismatch, "request and offer carry different data types");
  const double gap = std::max(0.0, std::max(req.min_res, avail.min_res) - std::min(req.max_res, avail.max_res));
  const double mean_width = ((req.max_res - req.min_res) + (avail.max_res - avail.min_res)) / 2.0;
  const double gap_term = gap > 0.0 ? gap / (mean_width > 0.0 ? mean_width : 1.0) : 0.0;
  const double shortfall = req.max_size > avail.max_size ? static_cast<double>(req.max_size - avail.max_size) : 0.0;
  const double size_term = req.max_size > 0 ? shortfall / static_cast<double>(req.max_size) : 0.0;
  return 1.0 + gap_term + size_term;
}

struct Exchange {
  NodeId receiver;
  NodeId provider;
  std::size_t request_index = 0;
  std::size_t avail_index = 0;
  DataType type = DataType::PointCloud;
  std::uint64_t size = 0;  // bytes
  double error = 1.0;      // E for this pair
  double term_value = 0.0;

  auto key() const { return std::tie(receiver, provider, request_index, avail_index); }
  bool operator==(const Exchange&) const = default;
};

struct ExchangePlan {
  std::vector<Exchange> exchanges;  // canonical order: by (receiver, provider, request, offer)
  double objective_value = 0.0;
};

enum class CapacityMode : std::uint8_t { PerExchange = 0, Aggregate = 1 };

struct AllocationProblem {
  std::vector<DataRequest> requests;
  std::vector<AvailableData> availables;
  std::map<NodeId, double> quality;  // Q per provider
  std::map<NodeId, double> c_hat;    // Ĉ per receiver
  double d_max = 0.0;
  std::map<std::pair<NodeId, NodeId>, double> bandwidth;  // (receiver, provider) -> bytes/s
  double alpha = 1.0;
  double beta = 1.0;
  CapacityMode mode = CapacityMode::PerExchange;
};

inline double quality_of(const std::map<NodeId, double>& q, NodeId provider) {
  auto it = q.find(provider);
  if (it == q.end()) throw Error(Errc::MissingQuality, "no quality score for provider " + std::to_string(provider.value));
  return it->second;
}

/// α·Q_j + β/E for one exchange.
inline double exchange_term(double q_provider, double error, double alpha, double beta) {
  return alpha * q_provider + beta * (1.0 / error);
}

/// f(X) summed in canonical exchange order.
inline double objective(std::span<const Exchange> plan, const std::map<NodeId, double>& quality, double alpha,
                        double beta) {
  std::vector<const Exchange*> ordered;
  for (const auto& x : plan) ordered.push_back(&x);
  std::sort(ordered.begin(), ordered.end(), [](const Exchange* a, const Exchange* b) { return a->key() < b->key(); });
  double total = 0.0;
  for (const auto* x : ordered) total += exchange_term(quality_of(quality, x->provider), x->error, alpha, beta);
  return total;
}

inline double receiver_capacity(const AllocationProblem& p, NodeId receiver) {
  auto it = p.c_hat.find(receiver);
  return it == p.c_hat.end() ? 0.0 : p.d_max * it->second;
}

/// Every (request, offer) pair of matching type between distinct nodes with a
/// capacity estimate and a known link, sized at the constraint-clamped
/// maximum, in canonical order.
inline std::vector<Exchange> build_candidates(const AllocationProblem& p) {
  std::vector<Exchange> out;
  for (std::size_t ri = 0; ri < p.requests.size(); ++ri) {
    const auto& req = p.requests[ri];
    if (!p.c_hat.contains(req.requester)) continue;
    for (std::size_t ai = 0; ai < p.availables.size(); ++ai) {
      const auto& av = p.availables[ai];
      if (av.type != req.type || av.provider == req.requester) continue;
      auto bw = p.bandwidth.find({req.requester, av.provider});
      if (bw == p.bandwidth.end()) continue;
      const double cap = std::min({static_cast<double>(req.max_size), static_cast<double>(av.max_size),
                                   receiver_capacity(p, req.requester), bw->second});
      const auto size = static_cast<std::uint64_t>(std::floor(std::max(0.0, cap)));
      if (size == 0) continue;
      Exchange x;
      x.receiver = req.requester;
      x.provider = av.provider;
      x.request_index = ri;
      x.avail_index = ai;
      x.type = req.type;
      x.size = size;
      x.error = mismatch_error(req, av);
      x.term_value = exchange_term(quality_of(p.quality, av.provider), x.error, p.alpha, p.beta);
      out.push_back(x);
    }
  }
  std::sort(out.begin(), out.end(), [](const Exchange& a, const Exchange& b) { return a.key() < b.key(); });
  return out;
}

/// Checks every active constraint of the problem against a plan.
inline bool plan_feasible(const AllocationProblem& p, std::span<const Exchange> plan) {
  std::map<NodeId, double> load;
  for (const auto& x : plan) {
    const double cap = receiver_capacity(p, x.receiver);
    auto bw = p.bandwidth.find({x.receiver, x.provider});
    if (bw == p.bandwidth.end()) return false;
    if (static_cast<double>(x.size) > cap || static_cast<double>(x.size) > bw->second) return false;
    load[x.receiver] += static_cast<double>(x.size);
  }
  if (p.mode == CapacityMode::Aggregate) {
    for (const auto& [r, total] : load)
      if (total > receiver_capacity(p, r)) return false;
  }
  return true;
}

namespace detail {

struct Selection {
  std::vector<std::size_t> picked;  // ascending candidate indices
  double objective = 0.0;
  std::uint64_t total_size = 0;
};

/// Strict preference: higher objective, then larger total size, then the
/// lexicographically smaller index sequence.
inline bool better(const Selection& a, const Selection& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.total_size != b.total_size) return a.total_size > b.total_size;
  return std::lexicographical_compare(a.picked.begin(), a.picked.end(), b.picked.begin(), b.picked.end());
}

inline Selection evaluate(const std::vector<Exchange>& cands, std::vector<std::size_t> picked) {
  Selection s;
  std::sort(picked.begin(), picked.end());
  for (auto i : picked) {
    s.objective += cands[i].term_value;
    s.total_size += cands[i].size;
  }
  s.picked = std::move(picked);
  return s;
}

inline bool fits(const AllocationProblem& p, const std::vector<Exchange>& cands, const std::vector<std::size_t>& picked) {
  if (p.mode == CapacityMode::PerExchange) return true;
  std::map<NodeId, double> load;
  for (auto i : picked) load[cands[i].receiver] += static_cast<double>(cands[i].size);
  for (const auto& [r, total] : load)
    if (total > receiver_capacity(p, r)) return false;
  return true;
}

inline Selection solve_exhaustive(const AllocationProblem& p, const std::vector<Exchange>& cands) {
  const std::size_t n = cands.size();
  // Receivers indexed densely so the aggregate check needs no allocation.
  std::vector<std::size_t> slot(n);
  std::vector<double> caps;
  {
    std::map<NodeId, std::size_t> ids;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = ids.try_emplace(cands[i].receiver, caps.size());
      if (fresh) caps.push_back(receiver_capacity(p, cands[i].receiver));
      slot[i] = it->second;
    }
  }
  std::vector<double> load(caps.size());
  const bool aggregate = p.mode == CapacityMode::Aggregate;

  Selection best;  // the empty plan is always feasible
  std::uint64_t best_mask = 0;
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    double obj = 0.0;
    std::uint64_t size = 0;
    if (aggregate) std::fill(load.begin(), load.end(), 0.0);
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask >> i & 1)) continue;
      obj += cands[i].term_value;
      size += cands[i].size;
      if (aggregate) {
        load[slot[i]] += static_cast<double>(cands[i].size);
        if (load[slot[i]] > caps[slot[i]]) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    if (obj < best.objective || (obj == best.objective && size < best.total_size)) continue;
    if (obj == best.objective && size == best.total_size) {
      // lexicographically smaller index sequence wins
      const std::uint64_t diff = mask ^ best_mask;
      const std::uint64_t low = diff & (~diff + 1);
      if (!(mask & low)) continue;
    }
    best.objective = obj;
    best.total_size = size;
    best_mask = mask;
  }
  best.picked.clear();
  for (std::size_t i = 0; i < n; ++i)
    if (best_mask >> i & 1) best.picked.push_back(i);
  return best;
}

inline Selection solve_greedy(const AllocationProblem& p, const std::vector<Exchange>& cands) {
  std::vector<std::size_t> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cands[a].term_value != cands[b].term_value) return cands[a].term_value > cands[b].term_value;
    return cands[a].size > cands[b].size;
  });

  std::vector<std::size_t> picked;
  for (auto i : order) {
    if (cands[i].term_value < 0.0) continue;
    picked.push_back(i);
    if (!fits(p, cands, picked)) picked.pop_back();
  }
  Selection current = evaluate(cands, picked);

  // Local search: single additions and one-for-one swaps, best move first.
  for (;;) {
    Selection best_move = current;
    std::vector<bool> in(cands.size(), false);
    for (auto i : current.picked) in[i] = true;
    for (std::size_t u = 0; u < cands.size(); ++u) {
      if (in[u]) continue;
      auto add = current.picked;
      add.push_back(u);
      if (fits(p, cands, add)) {
        Selection s = evaluate(cands, add);
        if (better(s, best_move)) best_move = std::move(s);
      }
      for (std::size_t k = 0; k < current.picked.size(); ++k) {
        if (cands[current.picked[k]].receiver != cands[u].receiver) continue;
        auto swapped = current.picked;
        swapped[k] = u;
        if (!fits(p, cands, swapped)) continue;
        Selection s = evaluate(cands, swapped);
        if (better(s, best_move)) best_move = std::move(s);
      }
    }
    for (std::size_t k = 0; k < current.picked.size(); ++k) {
      if (cands[current.picked[k]].term_value >= 0.0) continue;
      auto dropped = current.picked;
      dropped.erase(dropped.begin() + static_cast<std::ptrdiff_t>(k));
      Selection s = evaluate(cands, dropped);
      if (better(s, best_move)) best_move = std::move(s);
    }
    if (best_move.picked == current.picked) break;
    current = std::move(best_move);
  }
  return current;
}

}  // namespace detail

inline constexpr std::size_t kExhaustiveLimit = 20;

/// Chooses the exchange set maximizing Σ(α·Q_j + β/E) under the receiver
/// capacity and link bandwidth constraints. Exhaustive up to 20 candidates,
/// greedy with local search beyond. Deterministic for identical input.
inline ExchangePlan optimize(const AllocationProblem& problem) {
  const auto cands = build_candidates(problem);
  const auto sel = cands.size() <= kExhaustiveLimit ? detail::solve_exhaustive(problem, cands)
                                                    : detail::solve_greedy(problem, cands);
  ExchangePlan plan;
  for (auto i : sel.picked) plan.exchanges.push_back(cands[i]);
  plan.objective_value = sel.objective;
  return plan;
}

/// A relay forwards data only when the stamp digest is already registered on
/// the canonical chain of what it has seen.
inline bool admit_forward(std::span<const Chain> relay_view, const Digest& stamp_digest) {
  if (relay_view.empty()) return false;
  return chain_registers_stamp(select_canonical(relay_view), stamp_digest);
}

inline bool admit_forward(const Chain& relay_chain, const Digest& stamp_digest) {
  return chain_registers_stamp(relay_chain, stamp_digest);
}

}  // namespace swarmchain
