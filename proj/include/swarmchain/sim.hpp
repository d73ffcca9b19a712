#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "swarmchain/allocation.hpp"
#include "swarmchain/chain.hpp"
#include "swarmchain/codec.hpp"
#include "swarmchain/estimator.hpp"
#include "swarmchain/pow.hpp"
#include "swarmchain/quality.hpp"
#include "swarmchain/rng.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

enum class Behavior : std::uint8_t { Honest = 0, CounterfeitData = 1, LazyMiner = 2, DataLeech = 3 };

constexpr std::string_view to_string(Behavior b) noexcept {
  switch (b) {
    case Behavior::Honest: return "honest";
    case Behavior::CounterfeitData: return "counterfeit_data";
    case Behavior::LazyMiner: return "lazy_miner";
    case Behavior::DataLeech: return "data_leech";
  }
  return "?";
}

inline std::optional<Behavior> parse_behavior(std::string_view s) {
  if (s == "honest") return Behavior::Honest;
  if (s == "counterfeit_data") return Behavior::CounterfeitData;
  if (s == "lazy_miner") return Behavior::LazyMiner;
  if (s == "data_leech") return Behavior::DataLeech;
  return std::nullopt;
}

struct OnlineInterval {
  std::uint64_t first = 0;  // inclusive epochs
  std::uint64_t last = 0;
};

struct SimNode {
  NodeId id;
  std::string name;
  double hash_rate = 0.0;
  Position position;
  double position_error = 0.5;
  std::uint32_t channels = 0;  // lidar channel count, 0 when the node has no lidar
  std::vector<AvailableData> sensors;
  std::vector<DataRequest> needs;
  Behavior behavior = Behavior::Honest;
  std::vector<OnlineInterval> online;  // empty: always online
  bool infrastructure = false;

  bool online_at(std::uint64_t epoch) const noexcept {
    if (online.empty()) return true;
    return std::any_of(online.begin(), online.end(),
                       [&](const OnlineInterval& iv) { return epoch >= iv.first && epoch <= iv.last; });
  }
};

struct Link {
  NodeId a;
  NodeId b;
  double bandwidth = 0.0;  // bytes/s
  double latency = 0.0;    // s
};

struct Feature {
  std::string name;
  FeatureClass feature_class = FeatureClass::Planar;
  Position position;
  double extent_m = 0.0;  // planar only
};

struct WorldParams {
  double grid_size = 50.0;
  std::uint32_t random_shards = 1;
  double sensing_range = 20.0;
  double probe_noise = 0.0;         // multiplicative sd of the admission bandwidth probe
  double stamp_noise = 0.05;        // honest point counts vary uniformly by ± this fraction
  double counterfeit_factor = 0.4;  // counterfeit stamps claim this fraction of the true density
  double lazy_effort = 0.5;         // fraction of the mining budget a lazy miner spends
  std::uint64_t reference_lookback = 10;  // epochs of history eligible as comparison references
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  std::uint64_t epochs = 10;
  ChainConfig chain;
  WorldParams world;
  QualityRules quality;
  DensityModel model = default_density_model();
  std::vector<SimNode> nodes;
  std::vector<Link> links;
  std::vector<Feature> features;
  std::vector<std::uint64_t> fee_table;

  const SimNode* node(NodeId id) const {
    for (const auto& n : nodes)
      if (n.id == id) return &n;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Message delivery

inline double arrival_time(double send_time, const Link& link, std::uint64_t size) {
  return send_time + link.latency + static_cast<double>(size) / link.bandwidth;
}

class Network {
 public:
  Network() = default;
  explicit Network(const std::vector<Link>& links) {
    for (const auto& l : links) add(l);
  }

  void add(const Link& l) {
    links_[{l.a, l.b}] = l;
    links_[{l.b, l.a}] = Link{l.b, l.a, l.bandwidth, l.latency};
  }

  const Link* find(NodeId a, NodeId b) const {
    auto it = links_.find({a, b});
    return it == links_.end() ? nullptr : &it->second;
  }

  /// Arrival time of `size` bytes sent over the direct link a→b.
  double deliver(NodeId a, NodeId b, std::uint64_t size, double send_time) const {
    const Link* l = find(a, b);
    if (l == nullptr) {
      throw Error(Errc::NoLink, "no link between " + std::to_string(a.value) + " and " + std::to_string(b.value));
    }
    return arrival_time(send_time, *l, size);
  }

  /// Lowest-id node directly linked to both ends, if any.
  std::optional<NodeId> relay_between(NodeId a, NodeId b, const std::set<NodeId>& candidates) const {
    for (auto r : candidates) {
      if (r == a || r == b) continue;
      if (find(a, r) && find(r, b)) return r;
    }
    return std::nullopt;
  }

  const std::map<std::pair<NodeId, NodeId>, Link>& links() const noexcept { return links_; }

 private:
  std::map<std::pair<NodeId, NodeId>, Link> links_;
};

/// Events fire in (time, sequence) order; equal timestamps keep insertion order.
template <typename Payload>
class EventQueue {
 public:
  struct Event {
    double time = 0.0;
    std::uint64_t seq = 0;
    Payload payload;
  };

  std::uint64_t push(double time, Payload p) {
    const auto seq = next_seq_++;
    heap_.push(Event{time, seq, std::move(p)});
    return seq;
  }

  bool empty() const noexcept { return heap_.empty(); }

  Event pop() {
    Event e = heap_.top();
    heap_.pop();
    return e;
  }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Shards

enum class ShardKind : std::uint8_t { Spatial = 0, Randomized = 1 };

struct Shard {
  ShardKind kind = ShardKind::Spatial;
  std::vector<NodeId> members;  // ascending
  std::pair<std::int64_t, std::int64_t> cell{0, 0};  // spatial only
};

struct ShardAssignment {
  std::vector<Shard> spatial;
  std::vector<Shard> randomized;

  const Shard* spatial_of(NodeId id) const {
    for (const auto& s : spatial)
      if (std::binary_search(s.members.begin(), s.members.end(), id)) return &s;
    return nullptr;
  }
};

inline std::pair<std::int64_t, std::int64_t> grid_cell(const Position& p, double grid_size) {
  return {static_cast<std::int64_t>(std::floor(p.x / grid_size)),
          static_cast<std::int64_t>(std::floor(p.y / grid_size))};
}

/// Spatial shards are grid cells; randomized shards are a seeded shuffle cut
/// into `random_count` groups whose sizes differ by at most one.
inline ShardAssignment assign_shards(const std::vector<std::pair<NodeId, Position>>& nodes, double grid_size,
                                     std::uint32_t random_count, std::uint64_t seed) {
  ShardAssignment out;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<NodeId>> cells;
  std::vector<NodeId> ids;
  for (const auto& [id, pos] : nodes) {
    cells[grid_cell(pos, grid_size)].push_back(id);
    ids.push_back(id);
  }
  for (auto& [cell, members] : cells) {
    std::sort(members.begin(), members.end());
    out.spatial.push_back(Shard{ShardKind::Spatial, members, cell});
  }
  if (ids.empty()) return out;
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t k = std::max<std::size_t>(1, std::min<std::size_t>(random_count, ids.size()));
  const std::size_t base = ids.size() / k;
  const std::size_t extra = ids.size() % k;
  std::size_t at = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    Shard s{ShardKind::Randomized, {ids.begin() + static_cast<std::ptrdiff_t>(at),
                                    ids.begin() + static_cast<std::ptrdiff_t>(at + len)}, {0, 0}};
    std::sort(s.members.begin(), s.members.end());
    out.randomized.push_back(std::move(s));
    at += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Admission

/// Admission puzzle: the node must reach a full proof within pow_timeout.
/// Throws AdmissionTimeout otherwise.
inline Proof try_join(NodeId id, double hash_rate, const Digest& seed, const ChainConfig& config,
                      std::uint64_t rng_seed) {
  const auto params = config.pow_params();
  const auto budget = static_cast<std::uint64_t>(std::floor(std::min(hash_rate * config.pow_timeout, 1.8e19)));
  auto proof = solve(derive_puzzle(id, seed, params), params, budget, config.pow_timeout, hash_rate, config.pow_mode,
                     rng_seed);
  if (!proof || !proof->is_full) {
    throw Error(Errc::AdmissionTimeout, "node " + std::to_string(id.value) + " found no full proof in " +
                                            std::to_string(config.pow_timeout) + " s");
  }
  return *proof;
}

// ---------------------------------------------------------------------------
// Epoch traces

struct ProofSummary {
  NodeId node;
  std::uint32_t achieved_bits = 0;
  bool is_full = false;
  std::uint64_t share_count = 0;
  double elapsed = 0.0;
};

struct ComparisonSummary {
  Digest subject_stamp{};
  Digest reference_stamp{};
  NodeId subject;
  NodeId validator;
  ComparisonOutcome outcome = ComparisonOutcome::Match;
  ComparisonOutcome model_outcome = ComparisonOutcome::Match;  // what an honest validator computes
  std::vector<NodeId> committee;
};

struct TransferRecord {
  NodeId provider;
  NodeId receiver;
  std::optional<NodeId> relay;
  std::uint64_t size = 0;
  std::uint64_t bytes_delivered = 0;
  std::uint64_t bytes_relayed = 0;
  std::optional<Digest> stamp;
  bool stamp_registered = false;
  bool paid = false;
  bool blocked = false;
  double arrival = 0.0;
};

struct ReceiptSummary {
  NodeId receiver;
  NodeId provider;
  Digest stamp{};
  double observed_ratio = 0.0;
};

struct QualitySnapshot {
  NodeId node;
  double q = 0.0;
  std::uint64_t confirmed = 0;
  Tokens spendable = 0;
};

struct EpochTrace {
  std::uint64_t epoch = 0;
  bool destroyed = false;
  std::vector<NodeId> joined;
  std::vector<NodeId> rejected;
  std::vector<ProofSummary> proofs;
  std::optional<ComputeEstimate> estimate;
  std::vector<DataStamp> stamps;
  std::vector<ComparisonSummary> comparisons;
  ExchangePlan plan;
  std::vector<TransferRecord> transfers;
  std::vector<ReceiptSummary> receipts;
  std::vector<QualitySnapshot> quality;
  Tokens minted = 0;
  Tokens expired = 0;
  Digest tip{};

  Digest digest() const {
    Encoder e;
    e.u64(epoch).boolean(destroyed);
    encode_nodes(e, joined);
    encode_nodes(e, rejected);
    e.count(proofs.size());
    for (const auto& p : proofs) e.node(p.node).u32(p.achieved_bits).boolean(p.is_full).u64(p.share_count).f64(p.elapsed);
    e.boolean(estimate.has_value());
    if (estimate) {
      e.f64(estimate->d_max).count(estimate->nodes.size());
      for (const auto& [id, n] : estimate->nodes) e.node(id).f64(n.rate).f64(n.c_hat).u64(n.window);
    }
    e.count(stamps.size());
    for (const auto& s : stamps) e.digest(s.stamp_digest);
    e.count(comparisons.size());
    for (const auto& c : comparisons) {
      e.digest(c.subject_stamp).digest(c.reference_stamp).node(c.subject).node(c.validator);
      e.u8(static_cast<std::uint8_t>(c.outcome)).u8(static_cast<std::uint8_t>(c.model_outcome));
      encode_nodes(e, c.committee);
    }
    e.count(plan.exchanges.size()).f64(plan.objective_value);
    for (const auto& x : plan.exchanges) e.node(x.receiver).node(x.provider).u64(x.size).f64(x.term_value);
    e.count(transfers.size());
    for (const auto& t : transfers) {
      e.node(t.provider).node(t.receiver).node(t.relay.value_or(NodeId{})).u64(t.size).u64(t.bytes_delivered);
      e.u64(t.bytes_relayed).boolean(t.stamp_registered).boolean(t.paid).boolean(t.blocked).f64(t.arrival);
    }
    e.count(receipts.size());
    for (const auto& r : receipts) e.node(r.receiver).node(r.provider).digest(r.stamp).f64(r.observed_ratio);
    e.count(quality.size());
    for (const auto& q : quality) e.node(q.node).f64(q.q).u64(q.confirmed).i64(q.spendable);
    e.i64(minted).i64(expired).digest(tip);
    return e.hash();
  }
};

// ---------------------------------------------------------------------------
// World

/// The simulated swarm. Single-threaded and fully determined by
/// (scenario, seed): every random draw comes from a stream keyed by
/// (seed, epoch, purpose[, node]).
class World {
 public:
  World(Scenario scenario, std::uint64_t seed)
      : sc_(std::move(scenario)),
        seed_(seed),
        network_(sc_.links),
        book_(with_q_min(sc_.quality, sc_.chain.q_min)) {
    sc_.chain.validate();
    for (auto& n : sc_.nodes) {
      if (sc_.chain.genesis_mode == GenesisMode::AdHoc) n.infrastructure = false;  // ad hoc chains have no backbone
      if (n.infrastructure &&
          std::find(sc_.chain.infrastructure.begin(), sc_.chain.infrastructure.end(), n.id) ==
              sc_.chain.infrastructure.end()) {
        sc_.chain.infrastructure.push_back(n.id);
      }
    }
    chain_.push_back(make_genesis());
    state_ = genesis_state(chain_.front(), sc_.chain);
    for (auto id : state_.admitted) book_.add_node(id);
  }

  const Scenario& scenario() const noexcept { return sc_; }
  const Chain& chain() const noexcept { return chain_; }
  const ChainState& state() const noexcept { return state_; }
  const QualityBook& quality() const noexcept { return book_; }
  bool destroyed() const noexcept { return destroyed_; }
  const std::map<std::pair<NodeId, NodeId>, double>& measured_bandwidth() const noexcept { return measured_bw_; }

  std::vector<EpochTrace> run(std::uint64_t epochs) {
    std::vector<EpochTrace> traces;
    for (std::uint64_t i = 0; i < epochs; ++i) traces.push_back(run_epoch());
    return traces;
  }

  EpochTrace run_epoch() {
    const std::uint64_t e = ++epoch_;
    EpochTrace trace;
    trace.epoch = e;
    if (destroyed_) {
      trace.destroyed = true;
      trace.tip = state_.tip;
      return trace;
    }
    const ChainConfig& cfg = sc_.chain;
    const PowParams params = cfg.pow_params();
    const Tokens expired_before = state_.expired_total;

    std::vector<Transaction> joins, reports, validations, exchanges, receipts;

    // (2) admissions
    for (const auto& n : sc_.nodes) {
      if (n.infrastructure || !n.online_at(e) || state_.admitted.contains(n.id) || rejected_.contains(n.id)) continue;
      try {
        Proof p = try_join(n.id, n.hash_rate, state_.tip, cfg, mix_seed(seed_, e, 0x4a4f494eULL ^ n.id.value));
        joins.push_back(make_transaction(n.id, JoinPayload{p}, cfg));
        trace.joined.push_back(n.id);
        probe_links(n.id, e);
      } catch (const Error& err) {
        if (err.code() != Errc::AdmissionTimeout) throw;
        rejected_.insert(n.id);
        trace.rejected.push_back(n.id);
      }
    }

    std::set<NodeId> live;
    for (const auto& n : sc_.nodes)
      if (state_.admitted.contains(n.id) && (n.infrastructure || n.online_at(e))) live.insert(n.id);

    std::vector<std::pair<NodeId, Position>> placed;
    for (auto id : live) placed.emplace_back(id, sc_.node(id)->position);
    const ShardAssignment shards =
        assign_shards(placed, sc_.world.grid_size, sc_.world.random_shards, mix_seed(seed_, e, 0x5348ULL));

    // (3)+(4) proofs, stamps, requests, availability
    std::map<NodeId, EpochReportPayload> submitted;
    for (auto id : live) {
      const SimNode& n = *sc_.node(id);
      if (n.infrastructure) continue;
      // a lazy miner throttles its hashing, so it spends only part of its budget
      const double rate = n.behavior == Behavior::LazyMiner ? n.hash_rate * sc_.world.lazy_effort : n.hash_rate;
      const auto budget = static_cast<std::uint64_t>(std::floor(std::min(rate * cfg.pow_timeout, 1.8e19)));
      auto proof = solve(derive_puzzle(id, state_.tip, params), params, budget, cfg.pow_timeout, rate, cfg.pow_mode,
                         mix_seed(seed_, e, 0x504f57ULL ^ id.value));
      if (!proof) continue;
      EpochReportPayload r;
      r.proof = *proof;
      r.position = n.position;
      r.position_error = n.position_error;
      if (n.behavior != Behavior::DataLeech) {
        r.stamps = observe(n, e);
        r.availability = n.sensors;
        for (auto& a : r.availability) a.provider = id;
      }
      r.requests = n.needs;
      for (auto& q : r.requests) q.requester = id;
      trace.proofs.push_back({id, proof->achieved_bits, proof->is_full, proof->share_count, proof->elapsed});
      for (const auto& s : r.stamps) trace.stamps.push_back(s);
      submitted.emplace(id, std::move(r));
    }

    // (5) stamp comparisons certified by stake-weighted committees
    std::uint64_t comparison_counter = 0;
    for (const auto& [id, report] : submitted) {
      for (const auto& stamp : report.stamps) {
        for (const auto* ref : references_for(stamp, e)) {
          compare_and_certify(stamp, *ref, e, live, shards, comparison_counter++, trace, validations);
        }
      }
    }

    // (6) replicated compute estimation, including this epoch's proofs
    {
      auto histories = histories_from_state(state_);
      for (const auto& [id, r] : submitted) {
        auto it = std::find_if(histories.begin(), histories.end(), [&](const ProofHistory& h) { return h.node_id == id; });
        if (it == histories.end()) {
          histories.push_back({id, {}});
          it = std::prev(histories.end());
        }
        it->entries.push_back({e, r.proof.achieved_bits, r.proof.is_full, r.proof.elapsed, r.proof.share_count,
                               r.proof.share_bits});
      }
      try {
        trace.estimate = estimate(histories, cfg.window_min_proofs, cfg.bytes_per_hash_unit);
      } catch (const Error& err) {
        if (err.code() != Errc::NoEligibleNodes) throw;
      }
    }

    // (7) allocation and transfers
    std::map<NodeId, Tokens> committed;
    if (trace.estimate) {
      AllocationProblem problem;
      problem.alpha = cfg.alpha;
      problem.beta = cfg.beta;
      problem.mode = cfg.aggregate_capacity ? CapacityMode::Aggregate : CapacityMode::PerExchange;
      problem.d_max = trace.estimate->d_max;
      for (const auto& [id, r] : submitted) {
        for (const auto& q : r.requests)
          if (live.contains(id)) problem.requests.push_back(q);
        for (const auto& a : r.availability) problem.availables.push_back(a);
      }
      for (const auto& [id, est] : trace.estimate->nodes)
        if (live.contains(id)) problem.c_hat[id] = est.c_hat;
      for (auto id : live) problem.quality[id] = book_.global_q(id);
      for (const auto& q : problem.requests) {
        for (const auto& a : problem.availables) {
          if (q.requester == a.provider) continue;
          if (auto bw = path_bandwidth(q.requester, a.provider, live)) problem.bandwidth[{q.requester, a.provider}] = *bw;
        }
      }
      trace.plan = optimize(problem);
      transfer(trace, e, live, committed, exchanges, receipts);
    }

    // (8) block assembly
    Block block;
    block.height = state_.height + 1;
    block.parent_digest = state_.tip;
    block.epoch = e;
    block.validator_id = pick_proposer(shards, live, e);
    for (auto* group : {&joins, &reports, &validations, &exchanges, &receipts}) {
      if (group == &reports) {
        for (auto& [id, r] : submitted) block.transactions.push_back(make_transaction(id, std::move(r), cfg));
        continue;
      }
      for (auto& tx : *group) block.transactions.push_back(std::move(tx));
    }
    block = seal_block(std::move(block));
    state_ = apply_block(state_, block, cfg);
    chain_.push_back(block);
    for (auto id : trace.joined) book_.add_node(id);

    trace.minted = state_.minted_by_epoch.contains(e) ? state_.minted_by_epoch.at(e) : 0;
    trace.expired = state_.expired_total - expired_before;
    trace.tip = state_.tip;
    for (auto id : state_.admitted) {
      trace.quality.push_back(
          {id, book_.global_q(id), book_.global_confirmed(id), state_.spendable(id, e + 1, cfg.demurrage_window)});
    }
    last_estimate_ = trace.estimate;

    // ad hoc chains dissolve once the live population drops below the floor
    if (cfg.genesis_mode == GenesisMode::AdHoc) {
      std::size_t live_after = 0;
      for (const auto& n : sc_.nodes)
        if (state_.admitted.contains(n.id) && n.online_at(e)) ++live_after;
      if (live_after < cfg.min_live_nodes && !state_.admitted.empty()) {
        destroyed_ = true;
        trace.destroyed = true;
      }
    }
    return trace;
  }

 private:
  static QualityRules with_q_min(QualityRules r, double q_min) {
    r.q_min = q_min;
    return r;
  }

  void probe_links(NodeId id, std::uint64_t e) {
    Rng rng(mix_seed(seed_, e, 0x50524f42ULL ^ id.value));
    for (const auto& [ends, link] : network_.links()) {
      if (ends.first != id) continue;
      const auto key = std::minmax(ends.first, ends.second);
      if (measured_bw_.contains({key.first, key.second})) continue;
      double factor = 1.0;
      if (sc_.world.probe_noise > 0.0) factor = std::max(0.05, 1.0 + sc_.world.probe_noise * rng.normal());
      measured_bw_[{key.first, key.second}] = link.bandwidth * factor;
    }
  }

  double measured(NodeId a, NodeId b) const {
    const auto key = std::minmax(a, b);
    auto it = measured_bw_.find({key.first, key.second});
    if (it != measured_bw_.end()) return it->second;
    const Link* l = network_.find(a, b);
    return l ? l->bandwidth : 0.0;
  }

  std::optional<double> path_bandwidth(NodeId receiver, NodeId provider, const std::set<NodeId>& live) const {
    if (network_.find(provider, receiver)) return measured(provider, receiver);
    if (auto relay = network_.relay_between(provider, receiver, live)) {
      return std::min(measured(provider, *relay), measured(*relay, receiver));
    }
    return std::nullopt;
  }

  /// Stamps for every feature within sensing range. Counterfeit nodes claim a
  /// scaled density; the delivered data keeps its true density, which the
  /// world remembers for receipt checks.
  std::vector<DataStamp> observe(const SimNode& n, std::uint64_t e) {
    std::vector<DataStamp> out;
    if (n.channels == 0) return out;
    Rng rng(mix_seed(seed_, e, 0x5354414dULL ^ n.id.value));
    for (const auto& f : sc_.features) {
      const double d = distance(n.position, f.position);
      if (d > sc_.world.sensing_range) continue;
      DataStamp s;
      s.producer = n.id;
      s.data_type = DataType::PointCloud;
      s.feature_class = f.feature_class;
      s.channels = n.channels;
      s.distance_m = std::round(d * 100.0) / 100.0;
      if (f.feature_class == FeatureClass::Planar) s.extent_m = f.extent_m;
      const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      const double radius = n.position_error * std::sqrt(rng.uniform());
      s.location = {f.position.x + radius * std::cos(angle), f.position.y + radius * std::sin(angle)};
      s.error_radius_m = n.position_error;
      s.epoch = e;
      double expected = 0.0;
      try {
        expected = expected_point_count(sc_.model, s);
      } catch (const Error&) {
        continue;  // no model for this channel count: the node cannot characterize the feature
      }
      const double true_ratio = 1.0 + sc_.world.stamp_noise * rng.uniform(-1.0, 1.0);
      const double claimed = n.behavior == Behavior::CounterfeitData ? true_ratio * sc_.world.counterfeit_factor
                                                                      : true_ratio;
      s.point_count = static_cast<std::uint32_t>(std::max(1.0, std::round(expected * claimed)));
      s = seal_stamp(s);
      true_ratio_[s.stamp_digest] = true_ratio;
      out.push_back(s);
    }
    return out;
  }

  /// Latest comparable stamp of every other producer within the lookback.
  std::vector<const DataStamp*> references_for(const DataStamp& stamp, std::uint64_t e) const {
    std::map<NodeId, const DataStamp*> latest;
    for (const auto& [digest, rec] : state_.stamps) {
      const DataStamp& s = rec.stamp;
      if (s.producer == stamp.producer || s.epoch >= e) continue;
      if (s.epoch + sc_.world.reference_lookback < e) continue;
      if (!comparable(stamp, s)) continue;
      auto& slot = latest[s.producer];
      if (slot == nullptr || s.epoch > slot->epoch || (s.epoch == slot->epoch && s.stamp_digest < slot->stamp_digest)) {
        slot = &s;
      }
    }
    std::vector<const DataStamp*> out;
    for (const auto& [p, s] : latest) out.push_back(s);
    return out;
  }

  double stake(NodeId id) const { return 1.0 + static_cast<double>(book_.global_confirmed(id)); }

  void compare_and_certify(const DataStamp& fresh, const DataStamp& ref, std::uint64_t e, const std::set<NodeId>& live,
                           const ShardAssignment& shards, std::uint64_t counter, EpochTrace& trace,
                           std::vector<Transaction>& out) {
    ComparisonResult honest;
    try {
      honest = compare_stamps(fresh, ref, sc_.model, sc_.chain.stamp_tolerance);
    } catch (const Error&) {
      return;
    }

    // Eligible validators: enough estimated capacity, not a party to the
    // comparison; local spatial shard first, whole network if it is too small.
    auto eligible_from = [&](const std::vector<NodeId>& pool) {
      std::vector<NodeId> out_ids;
      for (auto v : pool) {
        if (v == fresh.producer || v == ref.producer || !live.contains(v)) continue;
        if (!last_estimate_) continue;
        auto c = last_estimate_->c_hat(v);
        if (c && *c >= sc_.chain.validator_min_capacity) out_ids.push_back(v);
      }
      return out_ids;
    };
    std::vector<NodeId> pool;
    if (const Shard* local = shards.spatial_of(fresh.producer)) pool = eligible_from(local->members);
    if (pool.size() < sc_.chain.committee_size) pool = eligible_from({live.begin(), live.end()});
    if (pool.empty()) return;

    std::vector<double> weights;
    for (auto v : pool) weights.push_back(stake(v));
    Rng rng(mix_seed(seed_, e, 0x434f4dULL + counter));
    std::vector<NodeId> committee;
    for (auto i : rng.weighted_sample(weights, sc_.chain.committee_size)) committee.push_back(pool[i]);

    const bool coalition_involved = behavior(fresh.producer) == Behavior::CounterfeitData ||
                                    behavior(ref.producer) == Behavior::CounterfeitData;
    std::map<ComparisonOutcome, double> tally;
    for (auto v : committee) {
      const bool colluding = behavior(v) == Behavior::CounterfeitData && coalition_involved;
      tally[colluding ? ComparisonOutcome::Match : honest.outcome] += stake(v);
    }
    ComparisonOutcome certified = ComparisonOutcome::Mismatch;
    double best = -1.0;
    for (auto o : {ComparisonOutcome::Mismatch, ComparisonOutcome::MatchWithDensityRelation, ComparisonOutcome::Match}) {
      if (tally.contains(o) && tally[o] > best) {
        best = tally[o];
        certified = o;
      }
    }
    if (certified == ComparisonOutcome::MatchWithDensityRelation && honest.outcome != certified) {
      certified = ComparisonOutcome::Match;
    }

    // Matches credit the reference producer (its stamp was confirmed by the
    // fresh one); mismatches blame whichever stamp strays further from the model.
    const DataStamp* subject = &ref;
    const DataStamp* other = &fresh;
    if (certified == ComparisonOutcome::Mismatch && mismatch_blames_a(honest.detail)) std::swap(subject, other);

    ComparisonSummary summary{subject->stamp_digest, other->stamp_digest, subject->producer, other->producer,
                              certified, honest.outcome, committee};
    trace.comparisons.push_back(summary);

    StampValidationPayload p;
    p.subject_stamp = subject->stamp_digest;
    p.reference_stamp = other->stamp_digest;
    p.subject = subject->producer;
    p.validator = other->producer;
    p.outcome = certified;
    p.density_ratio = honest.detail.density_ratio;
    p.committee = committee;
    out.push_back(make_transaction(committee.front(), std::move(p), sc_.chain));

    book_.apply(grid_cell(fresh.location, sc_.world.grid_size),
                QualityEvent::comparison(certified, subject->producer, other->producer));
  }

  Behavior behavior(NodeId id) const {
    const SimNode* n = sc_.node(id);
    return n ? n->behavior : Behavior::Honest;
  }

  /// Most recent stamp of `provider` for `type` registered before epoch e.
  const DataStamp* registered_stamp(NodeId provider, DataType type, std::uint64_t e) const {
    const DataStamp* best = nullptr;
    for (const auto& [d, rec] : state_.stamps) {
      const auto& s = rec.stamp;
      if (s.producer != provider || s.data_type != type || s.epoch >= e) continue;
      if (best == nullptr || s.epoch > best->epoch || (s.epoch == best->epoch && s.stamp_digest < best->stamp_digest)) {
        best = &s;
      }
    }
    return best;
  }

  struct Hop {
    std::size_t transfer = 0;
    bool at_relay = false;
  };

  void transfer(EpochTrace& trace, std::uint64_t e, const std::set<NodeId>& live, std::map<NodeId, Tokens>& committed,
                std::vector<Transaction>& exchanges, std::vector<Transaction>& receipts) {
    const ChainConfig& cfg = sc_.chain;
    EventQueue<Hop> queue;
    for (const auto& x : trace.plan.exchanges) {
      TransferRecord t;
      t.provider = x.provider;
      t.receiver = x.receiver;
      t.size = x.size;
      const DataStamp* stamp = registered_stamp(x.provider, x.type, e);
      if (stamp) {
        t.stamp = stamp->stamp_digest;
        t.stamp_registered = admit_forward(chain_, stamp->stamp_digest);
        const Tokens fee = fee_for_payload(x.size, cfg);
        if (state_.spendable(x.receiver, e, cfg.demurrage_window) - committed[x.receiver] < fee) {
          t.blocked = true;  // receiver cannot pay for delivery
          trace.transfers.push_back(t);
          continue;
        }
        committed[x.receiver] += fee;
        t.paid = true;
        exchanges.push_back(make_transaction(
            x.receiver, DataExchangePayload{stamp->stamp_digest, x.provider, {x.receiver}, x.size}, cfg));
      }
      if (!network_.find(x.provider, x.receiver)) t.relay = network_.relay_between(x.provider, x.receiver, live);
      trace.transfers.push_back(t);
      const std::size_t idx = trace.transfers.size() - 1;
      const double send = 0.0;
      if (t.relay) {
        queue.push(network_.deliver(x.provider, *t.relay, x.size, send), Hop{idx, true});
      } else {
        queue.push(network_.deliver(x.provider, x.receiver, x.size, send), Hop{idx, false});
      }
    }

    while (!queue.empty()) {
      auto ev = queue.pop();
      TransferRecord& t = trace.transfers[ev.payload.transfer];
      if (ev.payload.at_relay) {
        // third-party forwarding only for stamps already on the canonical chain
        if (!t.stamp || !admit_forward(chain_, *t.stamp)) {
          t.blocked = true;
          continue;
        }
        t.bytes_relayed = t.size;
        queue.push(network_.deliver(*t.relay, t.receiver, t.size, ev.time), Hop{ev.payload.transfer, false});
        continue;
      }
      t.bytes_delivered = t.size;
      t.arrival = ev.time;
    }

    // (8) receipts: delivered data must match the density its stamp claimed
    for (const auto& t : trace.transfers) {
      if (t.bytes_delivered == 0 || !t.stamp) continue;
      const auto& stamp = state_.stamps.at(*t.stamp).stamp;
      const double claimed = static_cast<double>(stamp.point_count) / expected_point_count(sc_.model, stamp);
      auto it = true_ratio_.find(*t.stamp);
      const double observed = it == true_ratio_.end() ? claimed : it->second;
      const double hi = std::max(claimed, observed), lo = std::min(claimed, observed);
      if (lo > 0.0 && hi / lo - 1.0 <= cfg.stamp_tolerance) continue;
      trace.receipts.push_back({t.receiver, t.provider, *t.stamp, observed});
      receipts.push_back(make_transaction(t.receiver, NegativeReceiptPayload{*t.stamp, t.provider, observed}, cfg));
      book_.apply(grid_cell(stamp.location, sc_.world.grid_size),
                  QualityEvent::negative_receipt(t.provider, t.receiver));
    }
  }

  /// Block proposer: stake-weighted draw from this epoch's randomized shard.
  NodeId pick_proposer(const ShardAssignment& shards, const std::set<NodeId>& live, std::uint64_t e) const {
    if (shards.randomized.empty()) return live.empty() ? NodeId{} : *live.begin();
    const Shard& s = shards.randomized[e % shards.randomized.size()];
    std::vector<double> w;
    for (auto id : s.members) w.push_back(stake(id));
    Rng rng(mix_seed(seed_, e, 0x50524fULL));
    auto pick = rng.weighted_sample(w, 1);
    return pick.empty() ? NodeId{} : s.members[pick.front()];
  }

  Scenario sc_;
  std::uint64_t seed_;
  Network network_;
  QualityBook book_;
  Chain chain_;
  ChainState state_;
  std::uint64_t epoch_ = 0;
  bool destroyed_ = false;
  std::set<NodeId> rejected_;
  std::map<std::pair<NodeId, NodeId>, double> measured_bw_;
  std::map<Digest, double> true_ratio_;
  std::optional<ComputeEstimate> last_estimate_;
};

}  // namespace swarmchain
