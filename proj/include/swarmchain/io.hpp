#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swarmchain/chain.hpp"
#include "swarmchain/error.hpp"
#include "swarmchain/quality.hpp"
#include "swarmchain/sim.hpp"

namespace swarmchain::io {

/// Shortest text that round-trips the double.
inline std::string num(double v) {
  char buf[40];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// CSV reading

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Comma-separated, first non-comment line is the header, '#' starts a comment line.
inline CsvTable parse_csv(std::istream& in, const std::string& name) {
  CsvTable t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto fields = split_csv_line(s);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw Error(Errc::ParseError, name + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                                        " fields, got " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(n);
  }
  if (t.header.empty()) throw Error(Errc::ParseError, name + ": missing header");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, path.string() + ": cannot open");
  return parse_csv(in, path.string());
}

namespace detail {

inline std::size_t need_column(const CsvTable& t, std::string_view name, const std::string& where) {
  auto c = t.column(name);
  if (!c) throw Error(Errc::ParseError, where + ": missing column '" + std::string(name) + "'");
  return *c;
}

inline double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::ParseError, where + ": not a number: '" + s + "'");
}

inline std::uint64_t to_uint(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size() && s.front() != '-') return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::ParseError, where + ": not a non-negative integer: '" + s + "'");
}

}  // namespace detail

/// Columns: feature_class, channels, x, points.
inline std::vector<CalibrationPoint> calibration_from_csv(const CsvTable& t, const std::string& name) {
  const auto c_class = detail::need_column(t, "feature_class", name);
  const auto c_ch = detail::need_column(t, "channels", name);
  const auto c_x = detail::need_column(t, "x", name);
  const auto c_pts = detail::need_column(t, "points", name);
  std::vector<CalibrationPoint> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto where = name + ":" + std::to_string(t.line_numbers[i]);
    const auto& r = t.rows[i];
    auto fc = parse_feature_class(r[c_class]);
    if (!fc) throw Error(Errc::ParseError, where + ": unknown feature_class '" + r[c_class] + "'");
    out.push_back({*fc, static_cast<std::uint32_t>(detail::to_uint(r[c_ch], where)), detail::to_double(r[c_x], where),
                   detail::to_double(r[c_pts], where)});
  }
  return out;
}

inline std::vector<CalibrationPoint> read_calibration_csv(const std::filesystem::path& path) {
  return calibration_from_csv(read_csv(path), path.string());
}

struct LatencyRow {
  std::string node_id;
  double hash_rate = 0.0;
  std::string task;
  double latency = 0.0;
  std::optional<double> latency_std;
};

/// Columns: node_id, hash_rate, task, latency[, latency_std].
inline std::vector<LatencyRow> latency_from_csv(const CsvTable& t, const std::string& name) {
  const auto c_node = detail::need_column(t, "node_id", name);
  const auto c_rate = detail::need_column(t, "hash_rate", name);
  const auto c_task = detail::need_column(t, "task", name);
  const auto c_lat = detail::need_column(t, "latency", name);
  const auto c_std = t.column("latency_std");
  std::vector<LatencyRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto where = name + ":" + std::to_string(t.line_numbers[i]);
    const auto& r = t.rows[i];
    LatencyRow row{r[c_node], detail::to_double(r[c_rate], where), r[c_task], detail::to_double(r[c_lat], where), {}};
    if (c_std && !r[*c_std].empty()) row.latency_std = detail::to_double(r[*c_std], where);
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<LatencyRow> read_latency_csv(const std::filesystem::path& path) {
  return latency_from_csv(read_csv(path), path.string());
}

// ---------------------------------------------------------------------------
// Run outputs

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::ParseError, path.string() + ": cannot write");
  return out;
}

inline void write_fee_table(std::ostream& out, const std::vector<std::uint64_t>& sizes, const ChainConfig& config) {
  out << "# fee_table v1\npayload_bytes,fee\n";
  for (auto s : sizes) out << s << ',' << fee_for_payload(s, config) << '\n';
}

inline void write_epochs(std::ostream& out, const std::vector<EpochTrace>& traces) {
  out << "# epochs v1\nepoch,tip,destroyed,joined,rejected,proofs,stamps,comparisons,exchanges,objective,"
         "delivered_bytes,receipts,minted,expired,trace_digest\n";
  for (const auto& t : traces) {
    std::uint64_t delivered = 0;
    for (const auto& x : t.transfers) delivered += x.bytes_delivered;
    out << t.epoch << ',' << to_hex(t.tip) << ',' << (t.destroyed ? 1 : 0) << ',' << t.joined.size() << ','
        << t.rejected.size() << ',' << t.proofs.size() << ',' << t.stamps.size() << ',' << t.comparisons.size() << ','
        << t.plan.exchanges.size() << ',' << num(t.plan.objective_value) << ',' << delivered << ','
        << t.receipts.size() << ',' << t.minted << ',' << t.expired << ',' << to_hex(t.digest()) << '\n';
  }
}

inline void write_estimates(std::ostream& out, const std::vector<EpochTrace>& traces) {
  out << "# estimates v1\nepoch,node_id,rate,c_hat,window\n";
  for (const auto& t : traces) {
    if (!t.estimate) continue;
    for (const auto& [id, e] : t.estimate->nodes)
      out << t.epoch << ',' << id.value << ',' << num(e.rate) << ',' << num(e.c_hat) << ',' << e.window << '\n';
  }
}

inline void write_plans(std::ostream& out, const std::vector<EpochTrace>& traces) {
  out << "# plan v1\nepoch,receiver,provider,type,size,error,term_value\n";
  for (const auto& t : traces) {
    for (const auto& x : t.plan.exchanges) {
      out << t.epoch << ',' << x.receiver.value << ',' << x.provider.value << ',' << to_string(x.type) << ','
          << x.size << ',' << num(x.error) << ',' << num(x.term_value) << '\n';
    }
  }
}

inline void write_quality(std::ostream& out, const std::vector<EpochTrace>& traces) {
  out << "# quality v1\nepoch,node_id,q,confirmed,spendable\n";
  for (const auto& t : traces) {
    for (const auto& q : t.quality)
      out << t.epoch << ',' << q.node.value << ',' << num(q.q) << ',' << q.confirmed << ',' << q.spendable << '\n';
  }
}

inline void write_transfers(std::ostream& out, const std::vector<EpochTrace>& traces) {
  out << "# transfers v1\nepoch,provider,receiver,relay,size,delivered,relayed,stamp,registered,paid,blocked,arrival\n";
  for (const auto& t : traces) {
    for (const auto& x : t.transfers) {
      out << t.epoch << ',' << x.provider.value << ',' << x.receiver.value << ','
          << (x.relay ? std::to_string(x.relay->value) : std::string()) << ',' << x.size << ',' << x.bytes_delivered
          << ',' << x.bytes_relayed << ',' << (x.stamp ? to_hex(*x.stamp) : std::string()) << ','
          << (x.stamp_registered ? 1 : 0) << ',' << (x.paid ? 1 : 0) << ',' << (x.blocked ? 1 : 0) << ','
          << num(x.arrival) << '\n';
    }
  }
}

inline void write_comparisons(std::ostream& out, const std::vector<EpochTrace>& traces) {
  out << "# comparisons v1\nepoch,subject,validator,outcome,model_outcome,committee\n";
  for (const auto& t : traces) {
    for (const auto& c : t.comparisons) {
      out << t.epoch << ',' << c.subject.value << ',' << c.validator.value << ',' << to_string(c.outcome) << ','
          << to_string(c.model_outcome) << ',';
      for (std::size_t i = 0; i < c.committee.size(); ++i) out << (i ? " " : "") << c.committee[i].value;
      out << '\n';
    }
  }
}

inline nlohmann::json block_json(const Block& b) {
  nlohmann::json txs = nlohmann::json::array();
  for (const auto& tx : b.transactions) {
    txs.push_back({{"kind", std::string(to_string(tx.kind()))},
                   {"sender", tx.sender.value},
                   {"payload_size", tx.payload_size},
                   {"fee", tx.fee}});
  }
  return {{"height", b.height},
          {"epoch", b.epoch},
          {"parent", to_hex(b.parent_digest)},
          {"digest", to_hex(b.digest)},
          {"validator", b.validator_id.value},
          {"transactions", txs}};
}

inline void write_chain_jsonl(std::ostream& out, const Chain& chain) {
  for (const auto& b : chain) out << block_json(b).dump() << '\n';
}

/// Writes every run artifact into `dir` and returns the files written.
inline std::vector<std::filesystem::path> write_run(const std::filesystem::path& dir, const World& world,
                                                    const std::vector<EpochTrace>& traces) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  auto emit = [&](const char* name, auto&& fn) {
    const auto p = dir / name;
    auto out = open_out(p);
    fn(out);
    files.push_back(p);
  };
  emit("epochs.csv", [&](std::ostream& o) { write_epochs(o, traces); });
  emit("estimates.csv", [&](std::ostream& o) { write_estimates(o, traces); });
  emit("plan.csv", [&](std::ostream& o) { write_plans(o, traces); });
  emit("quality.csv", [&](std::ostream& o) { write_quality(o, traces); });
  emit("transfers.csv", [&](std::ostream& o) { write_transfers(o, traces); });
  emit("comparisons.csv", [&](std::ostream& o) { write_comparisons(o, traces); });
  emit("chain.jsonl", [&](std::ostream& o) { write_chain_jsonl(o, world.chain()); });
  if (!world.scenario().fee_table.empty()) {
    emit("fee_table.csv",
         [&](std::ostream& o) { write_fee_table(o, world.scenario().fee_table, world.scenario().chain); });
  }
  return files;
}

}  // namespace swarmchain::io
