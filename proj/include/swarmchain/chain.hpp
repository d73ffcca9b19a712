#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "swarmchain/codec.hpp"
#include "swarmchain/error.hpp"
#include "swarmchain/pow.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

using Tokens = std::int64_t;

enum class GenesisMode : std::uint8_t { Longevous = 0, AdHoc = 1 };

struct ChainConfig {
  GenesisMode genesis_mode = GenesisMode::Longevous;
  std::uint32_t min_live_nodes = 1;
  std::uint64_t demurrage_window = 5;  // epochs
  Tokens epoch_allowance = 10'000'000;
  Tokens join_grant = 0;
  double penalty_factor = 0.5;

  std::uint32_t pow_difficulty_bits = 20;
  std::optional<std::uint32_t> min_partial_bits;  // default: difficulty - 8
  double pow_timeout = 30.0;                      // simulated seconds
  PowMode pow_mode = PowMode::Simulated;

  Tokens fee_base = 21000;
  Tokens fee_per_byte = 34;

  double alpha = 1.0;
  double beta = 1.0;
  bool aggregate_capacity = false;

  double stamp_tolerance = 0.25;
  double q_min = 0.01;
  std::uint32_t window_min_proofs = 3;  // ε
  double bytes_per_hash_unit = 1.0;
  double validator_min_capacity = 0.2;
  std::uint32_t committee_size = 3;

  std::vector<NodeId> infrastructure;  // always-live in longevous mode

  PowParams pow_params() const {
    PowParams p = PowParams::for_difficulty(pow_difficulty_bits);
    if (min_partial_bits) p.min_partial_bits = std::min(*min_partial_bits, pow_difficulty_bits);
    return p;
  }

  /// Throws ParseError naming the first offending field.
  void validate() const {
    auto bad = [](const char* field, const char* why) {
      throw Error(Errc::ParseError, std::string("config.") + field + ": " + why);
    };
    if (min_live_nodes == 0) bad("min_live_nodes", "must be positive");
    if (demurrage_window == 0) bad("demurrage_window", "must be positive");
    if (epoch_allowance <= 0) bad("epoch_allowance", "must be positive");
    if (join_grant < 0) bad("join_grant", "must be non-negative");
    if (!(penalty_factor >= 0.0 && penalty_factor <= 1.0)) bad("penalty_factor", "must lie in [0, 1]");
    if (!(pow_timeout > 0.0)) bad("pow_timeout", "must be positive");
    if (pow_difficulty_bits > 256) bad("pow_difficulty_bits", "must be at most 256");
    if (fee_base <= 0) bad("fee_base", "must be positive");
    if (fee_per_byte <= 0) bad("fee_per_byte", "must be positive");
    if (alpha < 0.0 || beta < 0.0) bad("alpha", "alpha and beta must be non-negative");
    if (alpha == 0.0 && beta == 0.0) bad("alpha", "alpha and beta cannot both be zero");
    if (!(stamp_tolerance > 0.0)) bad("stamp_tolerance", "must be positive");
    if (!(q_min > 0.0)) bad("q_min", "must be positive");
    if (window_min_proofs == 0) bad("window_min_proofs", "must be positive");
    if (!(bytes_per_hash_unit > 0.0)) bad("bytes_per_hash_unit", "must be positive");
    if (!(validator_min_capacity > 0.0)) bad("validator_min_capacity", "must be positive");
    if (committee_size == 0) bad("committee_size", "must be positive");
  }
};

/// Gas-style fee: base plus a per-byte charge on the attached payload.
inline Tokens fee_for_payload(std::uint64_t payload_size, const ChainConfig& config = {}) {
  return config.fee_base + config.fee_per_byte * static_cast<Tokens>(payload_size);
}

// ---------------------------------------------------------------------------
// Transactions

enum class TxKind : std::uint8_t { Join = 0, EpochReport = 1, DataExchange = 2, StampValidation = 3, NegativeReceipt = 4 };

constexpr std::string_view to_string(TxKind k) noexcept {
  switch (k) {
    case TxKind::Join: return "join";
    case TxKind::EpochReport: return "epoch_report";
    case TxKind::DataExchange: return "data_exchange";
    case TxKind::StampValidation: return "stamp_validation";
    case TxKind::NegativeReceipt: return "negative_receipt";
  }
  return "?";
}

struct JoinPayload {
  Proof proof;
  bool operator==(const JoinPayload&) const = default;
};

struct EpochReportPayload {
  Proof proof;
  std::vector<DataStamp> stamps;
  std::vector<DataRequest> requests;
  std::vector<AvailableData> availability;
  Position position;
  double position_error = 0.0;
  bool operator==(const EpochReportPayload&) const = default;
};

struct DataExchangePayload {
  Digest stamp_digest{};
  NodeId provider;
  std::vector<NodeId> recipients;
  std::uint64_t transfer_size = 0;
  bool operator==(const DataExchangePayload&) const = default;
};

/// A comparison of `subject_stamp` against `reference_stamp`, certified by a
/// stake-weighted committee. `subject` is the node whose quality the outcome
/// updates; `validator` is the node credited with the validation.
struct StampValidationPayload {
  Digest subject_stamp{};
  Digest reference_stamp{};
  NodeId subject;
  NodeId validator;
  ComparisonOutcome outcome = ComparisonOutcome::Match;
  double density_ratio = 1.0;
  std::vector<NodeId> committee;
  bool operator==(const StampValidationPayload&) const = default;
};

struct NegativeReceiptPayload {
  Digest stamp_digest{};
  NodeId provider;
  double observed_ratio = 0.0;
  bool operator==(const NegativeReceiptPayload&) const = default;
};

using TxPayload = std::variant<JoinPayload, EpochReportPayload, DataExchangePayload, StampValidationPayload,
                               NegativeReceiptPayload>;

struct Transaction {
  NodeId sender;
  TxPayload payload;
  std::uint64_t payload_size = 0;
  Tokens fee = 0;

  TxKind kind() const noexcept { return static_cast<TxKind>(payload.index()); }
  bool operator==(const Transaction&) const = default;
};

inline void encode(Encoder& e, const Proof& p) {
  e.u64(p.nonce).u32(p.achieved_bits).u64(p.hashes_attempted).f64(p.elapsed).boolean(p.is_full).u64(p.share_count).u32(
      p.share_bits);
}

template <typename T>
void encode_list(Encoder& e, const std::vector<T>& items) {
  e.count(items.size());
  for (const auto& item : items) encode(e, item);
}

inline void encode_nodes(Encoder& e, const std::vector<NodeId>& ids) {
  e.count(ids.size());
  for (auto id : ids) e.node(id);
}

inline void encode(Encoder& e, const TxPayload& payload) {
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, JoinPayload>) {
          encode(e, p.proof);
        } else if constexpr (std::is_same_v<P, EpochReportPayload>) {
          encode(e, p.proof);
          encode_list(e, p.stamps);
          encode_list(e, p.requests);
          encode_list(e, p.availability);
          e.position(p.position).f64(p.position_error);
        } else if constexpr (std::is_same_v<P, DataExchangePayload>) {
          e.digest(p.stamp_digest).node(p.provider);
          encode_nodes(e, p.recipients);
          e.u64(p.transfer_size);
        } else if constexpr (std::is_same_v<P, StampValidationPayload>) {
          e.digest(p.subject_stamp).digest(p.reference_stamp).node(p.subject).node(p.validator);
          e.u8(static_cast<std::uint8_t>(p.outcome)).f64(p.density_ratio);
          encode_nodes(e, p.committee);
        } else {
          e.digest(p.stamp_digest).node(p.provider).f64(p.observed_ratio);
        }
      },
      payload);
}

inline void encode(Encoder& e, const Transaction& tx) {
  e.u8(static_cast<std::uint8_t>(tx.kind())).node(tx.sender);
  encode(e, tx.payload);
  e.u64(tx.payload_size).i64(tx.fee);
}

inline std::uint64_t encoded_payload_size(const TxPayload& payload) {
  Encoder e;
  encode(e, payload);
  return e.buffer().size();
}

/// Builds a transaction with the payload size and fee the chain expects.
/// Data exchanges are charged by declared transfer size; the other kinds are
/// protocol messages and carry no fee.
inline Transaction make_transaction(NodeId sender, TxPayload payload, const ChainConfig& config) {
  Transaction tx{sender, std::move(payload), 0, 0};
  if (const auto* x = std::get_if<DataExchangePayload>(&tx.payload)) {
    tx.payload_size = x->transfer_size;
    tx.fee = fee_for_payload(tx.payload_size, config);
  } else {
    tx.payload_size = encoded_payload_size(tx.payload);
  }
  return tx;
}

// ---------------------------------------------------------------------------
// Blocks

struct Block {
  std::uint64_t height = 0;
  Digest parent_digest{};
  std::uint64_t epoch = 0;
  NodeId validator_id;
  std::vector<Transaction> transactions;
  Digest digest{};

  bool operator==(const Block&) const = default;
};

using Chain = std::vector<Block>;

inline Digest compute_block_digest(const Block& b) {
  Encoder e;
  e.u64(b.height).digest(b.parent_digest).u64(b.epoch).node(b.validator_id);
  encode_list(e, b.transactions);
  return e.hash();
}

inline Block seal_block(Block b) {
  b.digest = compute_block_digest(b);
  return b;
}

inline Block make_genesis() { return seal_block(Block{}); }

// ---------------------------------------------------------------------------
// Token accounts with demurrage

struct TokenLot {
  std::uint64_t minted_epoch = 0;
  Tokens amount = 0;
  bool operator==(const TokenLot&) const = default;
};

struct TokenAccount {
  NodeId node_id;
  std::vector<TokenLot> lots;  // in minting order

  static bool usable(const TokenLot& lot, std::uint64_t epoch, std::uint64_t window) noexcept {
    return epoch < lot.minted_epoch + window;
  }

  Tokens spendable(std::uint64_t epoch, std::uint64_t window) const noexcept {
    Tokens total = 0;
    for (const auto& lot : lots)
      if (usable(lot, epoch, window)) total += lot.amount;
    return total;
  }

  /// Debits oldest usable lots first. Returns (lot epoch, amount) debits;
  /// throws InsufficientBalance without modifying the account.
  std::vector<TokenLot> spend(Tokens amount, std::uint64_t epoch, std::uint64_t window) {
    if (spendable(epoch, window) < amount) {
      throw Error(Errc::InsufficientBalance, "node " + std::to_string(node_id.value) + " cannot cover " +
                                                 std::to_string(amount) + " tokens");
    }
    std::vector<TokenLot> debits;
    for (auto& lot : lots) {
      if (amount == 0) break;
      if (!usable(lot, epoch, window) || lot.amount == 0) continue;
      const Tokens take = std::min(lot.amount, amount);
      lot.amount -= take;
      amount -= take;
      debits.push_back({lot.minted_epoch, take});
    }
    std::erase_if(lots, [](const TokenLot& l) { return l.amount == 0; });
    return debits;
  }

  bool operator==(const TokenAccount&) const = default;
};

using Accounts = std::map<NodeId, TokenAccount>;

/// Removes every lot whose age (current_epoch - minted_epoch) has reached the
/// window. Returns the number of tokens that expired.
inline Tokens apply_demurrage(Accounts& accounts, std::uint64_t current_epoch, std::uint64_t window) {
  Tokens expired = 0;
  for (auto& [id, account] : accounts) {
    std::erase_if(account.lots, [&](const TokenLot& lot) {
      if (TokenAccount::usable(lot, current_epoch, window)) return false;
      expired += lot.amount;
      return true;
    });
  }
  return expired;
}

/// Mints one lot per contributor at `epoch`; penalized contributors receive
/// the allowance scaled by the penalty factor (rounded down). Returns the
/// total minted.
inline Tokens mint_epoch_allowance(Accounts& accounts, std::uint64_t epoch, const std::set<NodeId>& contributing,
                                   const std::set<NodeId>& penalized, const ChainConfig& config) {
  Tokens minted = 0;
  for (auto id : contributing) {
    Tokens amount = config.epoch_allowance;
    if (penalized.contains(id)) {
      amount = static_cast<Tokens>(std::floor(static_cast<double>(config.epoch_allowance) * config.penalty_factor));
    }
    if (amount <= 0) continue;
    auto& account = accounts[id];
    account.node_id = id;
    account.lots.push_back({epoch, amount});
    minted += amount;
  }
  return minted;
}

// ---------------------------------------------------------------------------
// Ledger state

struct ReportRecord {
  std::uint64_t epoch = 0;
  std::uint32_t achieved_bits = 0;
  bool is_full = false;
  double elapsed = 0.0;
  std::uint64_t share_count = 0;
  std::uint32_t share_bits = 0;
  bool operator==(const ReportRecord&) const = default;
};

struct StampRecord {
  DataStamp stamp;
  std::uint64_t height = 0;
  bool operator==(const StampRecord&) const = default;
};

struct ChainState {
  std::uint64_t height = 0;
  Digest tip{};
  std::uint64_t epoch = 0;
  std::set<NodeId> admitted;
  Accounts accounts;
  std::map<Digest, StampRecord> stamps;
  std::map<NodeId, std::vector<ReportRecord>> reports;
  std::map<std::uint64_t, Tokens> minted_by_epoch;
  std::map<std::uint64_t, Tokens> spent_by_lot_epoch;
  Tokens expired_total = 0;

  bool operator==(const ChainState&) const = default;

  bool is_registered(const Digest& stamp) const { return stamps.contains(stamp); }

  Tokens spendable(NodeId id, std::uint64_t epoch_now, std::uint64_t window) const {
    auto it = accounts.find(id);
    return it == accounts.end() ? 0 : it->second.spendable(epoch_now, window);
  }

  Tokens total_spendable(std::uint64_t epoch_now, std::uint64_t window) const {
    Tokens total = 0;
    for (const auto& [id, acct] : accounts) total += acct.spendable(epoch_now, window);
    return total;
  }
};

inline Digest state_digest(const ChainState& s) {
  Encoder e;
  e.u64(s.height).digest(s.tip).u64(s.epoch);
  e.count(s.admitted.size());
  for (auto id : s.admitted) e.node(id);
  e.count(s.accounts.size());
  for (const auto& [id, acct] : s.accounts) {
    e.node(id).count(acct.lots.size());
    for (const auto& lot : acct.lots) e.u64(lot.minted_epoch).i64(lot.amount);
  }
  e.count(s.stamps.size());
  for (const auto& [digest, rec] : s.stamps) {
    encode(e, rec.stamp);
    e.u64(rec.height);
  }
  e.count(s.reports.size());
  for (const auto& [id, records] : s.reports) {
    e.node(id).count(records.size());
    for (const auto& r : records)
      e.u64(r.epoch).u32(r.achieved_bits).boolean(r.is_full).f64(r.elapsed).u64(r.share_count).u32(r.share_bits);
  }
  e.count(s.minted_by_epoch.size());
  for (const auto& [ep, t] : s.minted_by_epoch) e.u64(ep).i64(t);
  e.count(s.spent_by_lot_epoch.size());
  for (const auto& [ep, t] : s.spent_by_lot_epoch) e.u64(ep).i64(t);
  e.i64(s.expired_total);
  return e.hash();
}

inline ChainState genesis_state(const Block& genesis, const ChainConfig& config) {
  ChainState s;
  s.height = genesis.height;
  s.tip = genesis.digest;
  s.epoch = genesis.epoch;
  if (config.genesis_mode == GenesisMode::Longevous) {
    for (auto id : config.infrastructure) s.admitted.insert(id);
  }
  return s;
}

namespace detail {

inline void check_proof(const Proof& proof, NodeId sender, const Digest& seed, const ChainConfig& config,
                        bool require_full) {
  const PowParams params = config.pow_params();
  const auto who = std::to_string(sender.value);
  if (proof.is_full != (proof.achieved_bits >= params.difficulty_bits)) {
    throw Error(Errc::InvalidProof, "full flag inconsistent with achieved bits for node " + who);
  }
  if (require_full && !proof.is_full) throw Error(Errc::InvalidProof, "join requires a full proof from node " + who);
  if (proof.achieved_bits < params.min_partial_bits) {
    throw Error(Errc::InvalidProof, "proof below partial threshold from node " + who);
  }
  if (proof.share_count == 0 || proof.share_bits != params.min_partial_bits) {
    throw Error(Errc::InvalidProof, "share tally malformed for node " + who);
  }
  if (!(proof.elapsed > 0.0) && params.difficulty_bits > 0) {
    throw Error(Errc::InvalidProof, "non-positive elapsed time from node " + who);
  }
  if (config.pow_mode == PowMode::Live) {
    const auto bits = verify(derive_puzzle(sender, seed, params), proof.nonce);
    if (bits != proof.achieved_bits) throw Error(Errc::InvalidProof, "nonce does not verify for node " + who);
  }
}

}  // namespace detail

/// Validates `block` against `state` and returns the successor state.
/// Pure: the input state is never modified. Any failing transaction rejects
/// the whole block.
inline ChainState apply_block(const ChainState& state, const Block& block, const ChainConfig& config) {
  if (block.height != state.height + 1) throw Error(Errc::InvalidLinkage, "height does not extend the tip");
  if (block.parent_digest != state.tip) throw Error(Errc::InvalidLinkage, "parent digest does not match the tip");
  if (block.epoch < state.epoch) throw Error(Errc::InvalidLinkage, "epoch goes backwards");
  if (block.digest != compute_block_digest(block)) throw Error(Errc::InvalidBlock, "block digest mismatch");

  ChainState next = state;
  const std::uint64_t epoch = block.epoch;
  const std::uint64_t window = config.demurrage_window;
  next.expired_total += apply_demurrage(next.accounts, epoch, window);

  std::set<NodeId> contributing;
  std::set<NodeId> penalized;
  std::set<NodeId> reported;

  auto require_admitted = [&](NodeId id) {
    if (!next.admitted.contains(id)) {
      throw Error(Errc::InvalidBlock, "node " + std::to_string(id.value) + " is not admitted");
    }
  };
  auto require_stamp = [&](const Digest& d) -> const StampRecord& {
    auto it = next.stamps.find(d);
    if (it == next.stamps.end()) throw Error(Errc::InvalidBlock, "stamp " + to_hex(d) + " is not registered");
    return it->second;
  };

  for (const auto& tx : block.transactions) {
    if (tx.kind() != TxKind::DataExchange && tx.fee != 0) {
      throw Error(Errc::InvalidBlock, "protocol transactions carry no fee");
    }
    switch (tx.kind()) {
      case TxKind::Join: {
        const auto& p = std::get<JoinPayload>(tx.payload);
        if (next.admitted.contains(tx.sender)) throw Error(Errc::InvalidBlock, "node already admitted");
        detail::check_proof(p.proof, tx.sender, block.parent_digest, config, true);
        next.admitted.insert(tx.sender);
        auto& acct = next.accounts[tx.sender];
        acct.node_id = tx.sender;
        if (config.join_grant > 0) {
          acct.lots.push_back({epoch, config.join_grant});
          next.minted_by_epoch[epoch] += config.join_grant;
        }
        break;
      }
      case TxKind::EpochReport: {
        const auto& p = std::get<EpochReportPayload>(tx.payload);
        require_admitted(tx.sender);
        if (!reported.insert(tx.sender).second) throw Error(Errc::InvalidBlock, "duplicate epoch report");
        detail::check_proof(p.proof, tx.sender, block.parent_digest, config, false);
        for (const auto& stamp : p.stamps) {
          if (stamp.producer != tx.sender) throw Error(Errc::InvalidBlock, "stamp producer differs from sender");
          if (stamp.stamp_digest != compute_stamp_digest(stamp)) throw Error(Errc::InvalidBlock, "stamp digest mismatch");
          if (!next.stamps.emplace(stamp.stamp_digest, StampRecord{stamp, block.height}).second) {
            throw Error(Errc::InvalidBlock, "stamp already registered");
          }
        }
        for (const auto& r : p.requests)
          if (r.requester != tx.sender) throw Error(Errc::InvalidBlock, "request owner differs from sender");
        for (const auto& a : p.availability)
          if (a.provider != tx.sender) throw Error(Errc::InvalidBlock, "availability owner differs from sender");
        auto& records = next.reports[tx.sender];
        if (!records.empty() && records.back().epoch >= epoch) {
          throw Error(Errc::InvalidBlock, "at most one report per node per epoch");
        }
        records.push_back({epoch, p.proof.achieved_bits, p.proof.is_full, p.proof.elapsed, p.proof.share_count,
                           p.proof.share_bits});
        if (!p.stamps.empty()) contributing.insert(tx.sender);
        break;
      }
      case TxKind::DataExchange: {
        const auto& p = std::get<DataExchangePayload>(tx.payload);
        require_admitted(tx.sender);
        if (tx.payload_size != p.transfer_size) throw Error(Errc::InvalidBlock, "payload size differs from transfer size");
        if (tx.fee != fee_for_payload(tx.payload_size, config)) throw Error(Errc::InvalidBlock, "fee off schedule");
        const auto& rec = require_stamp(p.stamp_digest);
        if (rec.stamp.producer != p.provider) throw Error(Errc::InvalidBlock, "stamp not produced by provider");
        auto& acct = next.accounts[tx.sender];
        acct.node_id = tx.sender;
        for (const auto& debit : acct.spend(tx.fee, epoch, window)) {
          next.spent_by_lot_epoch[debit.minted_epoch] += debit.amount;
        }
        break;
      }
      case TxKind::StampValidation: {
        const auto& p = std::get<StampValidationPayload>(tx.payload);
        require_admitted(tx.sender);
        const auto& subject = require_stamp(p.subject_stamp);
        require_stamp(p.reference_stamp);
        if (subject.stamp.producer != p.subject) throw Error(Errc::InvalidBlock, "subject does not own stamp");
        if (p.validator == p.subject) throw Error(Errc::InvalidBlock, "self validation");
        if (p.outcome == ComparisonOutcome::Mismatch) penalized.insert(p.subject);
        break;
      }
      case TxKind::NegativeReceipt: {
        const auto& p = std::get<NegativeReceiptPayload>(tx.payload);
        require_admitted(tx.sender);
        const auto& rec = require_stamp(p.stamp_digest);
        if (rec.stamp.producer != p.provider) throw Error(Errc::InvalidBlock, "receipt names wrong provider");
        if (tx.sender == p.provider) throw Error(Errc::InvalidBlock, "receipt against self");
        penalized.insert(p.provider);
        break;
      }
    }
  }

  const Tokens minted = mint_epoch_allowance(next.accounts, epoch, contributing, penalized, config);
  if (minted > 0) next.minted_by_epoch[epoch] += minted;

  next.height = block.height;
  next.tip = block.digest;
  next.epoch = epoch;
  return next;
}

/// Replays a chain from its genesis block.
inline ChainState replay(const Chain& chain, const ChainConfig& config) {
  if (chain.empty()) throw Error(Errc::EmptyInput, "chain has no genesis block");
  const Block& genesis = chain.front();
  if (genesis.height != 0 || genesis.parent_digest != kZeroDigest || genesis.digest != compute_block_digest(genesis)) {
    throw Error(Errc::InvalidLinkage, "malformed genesis block");
  }
  ChainState s = genesis_state(genesis, config);
  for (std::size_t i = 1; i < chain.size(); ++i) s = apply_block(s, chain[i], config);
  return s;
}

/// Longest branch wins (difficulty is fixed, so height is accumulated work);
/// equal heights go to the lexicographically smallest tip digest.
inline const Chain& select_canonical(std::span<const Chain> branches) {
  if (branches.empty()) throw Error(Errc::EmptyInput, "no branches to choose from");
  const Chain* best = nullptr;
  for (const auto& branch : branches) {
    if (branch.empty()) throw Error(Errc::EmptyInput, "branch without genesis");
    if (branch.front().digest != branches.front().front().digest) {
      throw Error(Errc::InvalidLinkage, "branches do not share a genesis block");
    }
    if (best == nullptr || branch.size() > best->size() ||
        (branch.size() == best->size() && branch.back().digest < best->back().digest)) {
      best = &branch;
    }
  }
  return *best;
}

/// True iff some block of `chain` registered `stamp` through an epoch report.
inline bool chain_registers_stamp(const Chain& chain, const Digest& stamp) {
  for (const auto& block : chain) {
    for (const auto& tx : block.transactions) {
      if (const auto* r = std::get_if<EpochReportPayload>(&tx.payload)) {
        for (const auto& s : r->stamps)
          if (s.stamp_digest == stamp) return true;
      }
    }
  }
  return false;
}

}  // namespace swarmchain
