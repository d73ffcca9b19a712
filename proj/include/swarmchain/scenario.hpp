#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "swarmchain/io.hpp"
#include "swarmchain/sim.hpp"

namespace swarmchain {

namespace detail {

using nlohmann::json;

/// Strict view of one JSON object: every access records the key, and
/// finish() rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& why) {
    throw Error(Errc::ParseError, key + ": " + why);
  }

  std::string key(std::string_view name) const { return path_.empty() ? std::string(name) : path_ + "." + std::string(name); }

  bool has(std::string_view name) {
    seen_.insert(std::string(name));
    return j_.contains(std::string(name));
  }

  const json& at(std::string_view name) {
    if (!has(name)) fail(key(name), "missing");
    return j_.at(std::string(name));
  }

  double number(std::string_view name, std::optional<double> fallback = std::nullopt) {
    if (!has(name)) {
      if (fallback) return *fallback;
      fail(key(name), "missing");
    }
    const auto& v = j_.at(std::string(name));
    if (!v.is_number()) fail(key(name), "expected a number");
    return v.get<double>();
  }

  std::uint64_t integer(std::string_view name, std::optional<std::uint64_t> fallback = std::nullopt) {
    if (!has(name)) {
      if (fallback) return *fallback;
      fail(key(name), "missing");
    }
    const auto& v = j_.at(std::string(name));
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(key(name), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(std::string_view name, bool fallback) {
    if (!has(name)) return fallback;
    const auto& v = j_.at(std::string(name));
    if (!v.is_boolean()) fail(key(name), "expected true or false");
    return v.get<bool>();
  }

  std::string text(std::string_view name, std::optional<std::string> fallback = std::nullopt) {
    if (!has(name)) {
      if (fallback) return *fallback;
      fail(key(name), "missing");
    }
    const auto& v = j_.at(std::string(name));
    if (!v.is_string()) fail(key(name), "expected a string");
    return v.get<std::string>();
  }

  const json& array(std::string_view name) {
    const auto& v = at(name);
    if (!v.is_array()) fail(key(name), "expected an array");
    return v;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) fail(key(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Position parse_position(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    Fields::fail(key, "expected [x, y]");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

inline DataType data_type_field(Fields& f, std::string_view name) {
  const auto s = f.text(name);
  auto t = parse_data_type(s);
  if (!t) Fields::fail(f.key(name), "unknown data type '" + s + "'");
  return *t;
}

inline void parse_config(Fields& f, ChainConfig& c) {
  if (f.has("genesis_mode")) {
    const auto m = f.text("genesis_mode");
    if (m == "longevous") c.genesis_mode = GenesisMode::Longevous;
    else if (m == "ad_hoc") c.genesis_mode = GenesisMode::AdHoc;
    else Fields::fail(f.key("genesis_mode"), "expected longevous or ad_hoc");
  }
  c.min_live_nodes = static_cast<std::uint32_t>(f.integer("min_live_nodes", c.min_live_nodes));
  c.demurrage_window = f.integer("demurrage_window", c.demurrage_window);
  c.epoch_allowance = static_cast<Tokens>(f.integer("epoch_allowance", static_cast<std::uint64_t>(c.epoch_allowance)));
  c.join_grant = static_cast<Tokens>(f.integer("join_grant", static_cast<std::uint64_t>(c.join_grant)));
  c.penalty_factor = f.number("penalty_factor", c.penalty_factor);
  c.pow_difficulty_bits = static_cast<std::uint32_t>(f.integer("pow_difficulty_bits", c.pow_difficulty_bits));
  if (f.has("min_partial_bits")) c.min_partial_bits = static_cast<std::uint32_t>(f.integer("min_partial_bits"));
  c.pow_timeout = f.number("pow_timeout", c.pow_timeout);
  if (f.has("pow_mode")) {
    const auto m = f.text("pow_mode");
    if (m == "simulated") c.pow_mode = PowMode::Simulated;
    else if (m == "live") c.pow_mode = PowMode::Live;
    else Fields::fail(f.key("pow_mode"), "expected simulated or live");
  }
  c.fee_base = static_cast<Tokens>(f.integer("fee_base", static_cast<std::uint64_t>(c.fee_base)));
  c.fee_per_byte = static_cast<Tokens>(f.integer("fee_per_byte", static_cast<std::uint64_t>(c.fee_per_byte)));
  c.alpha = f.number("alpha", c.alpha);
  c.beta = f.number("beta", c.beta);
  if (f.has("capacity_mode")) {
    const auto m = f.text("capacity_mode");
    if (m == "per_exchange") c.aggregate_capacity = false;
    else if (m == "aggregate") c.aggregate_capacity = true;
    else Fields::fail(f.key("capacity_mode"), "expected per_exchange or aggregate");
  }
  c.stamp_tolerance = f.number("stamp_tolerance", c.stamp_tolerance);
  c.q_min = f.number("q_min", c.q_min);
  c.window_min_proofs = static_cast<std::uint32_t>(f.integer("window_min_proofs", c.window_min_proofs));
  c.bytes_per_hash_unit = f.number("bytes_per_hash_unit", c.bytes_per_hash_unit);
  c.validator_min_capacity = f.number("validator_min_capacity", c.validator_min_capacity);
  c.committee_size = static_cast<std::uint32_t>(f.integer("committee_size", c.committee_size));
  f.finish();
  try {
    c.validate();
  } catch (const Error& e) {
    // config.validate() names fields as "config.x"; keep the caller's path
    std::string msg = e.what();
    if (msg.rfind("config.", 0) == 0) msg = f.key(msg.substr(7));
    throw Error(Errc::ParseError, msg);
  }
}

inline void parse_world(Fields& f, WorldParams& w) {
  w.grid_size = f.number("grid_size", w.grid_size);
  w.random_shards = static_cast<std::uint32_t>(f.integer("random_shards", w.random_shards));
  w.sensing_range = f.number("sensing_range", w.sensing_range);
  w.probe_noise = f.number("probe_noise", w.probe_noise);
  w.stamp_noise = f.number("stamp_noise", w.stamp_noise);
  w.counterfeit_factor = f.number("counterfeit_factor", w.counterfeit_factor);
  w.lazy_effort = f.number("lazy_effort", w.lazy_effort);
  w.reference_lookback = f.integer("reference_lookback", w.reference_lookback);
  f.finish();
  if (!(w.grid_size > 0.0)) Fields::fail(f.key("grid_size"), "must be positive");
  if (w.random_shards == 0) Fields::fail(f.key("random_shards"), "must be positive");
  if (w.probe_noise < 0.0) Fields::fail(f.key("probe_noise"), "must be non-negative");
  if (w.stamp_noise < 0.0 || w.stamp_noise >= 1.0) Fields::fail(f.key("stamp_noise"), "must lie in [0, 1)");
  if (!(w.counterfeit_factor > 0.0)) Fields::fail(f.key("counterfeit_factor"), "must be positive");
  if (!(w.lazy_effort > 0.0 && w.lazy_effort <= 1.0)) Fields::fail(f.key("lazy_effort"), "must lie in (0, 1]");
}

inline void parse_quality(Fields& f, QualityRules& q) {
  q.match_gain = f.number("match_gain", q.match_gain);
  q.relation_gain = f.number("relation_gain", q.relation_gain);
  q.mismatch_penalty = f.number("mismatch_penalty", q.mismatch_penalty);
  f.finish();
}

inline std::vector<DataRequest> parse_data_specs(const json& arr, const std::string& key, NodeId owner) {
  if (!arr.is_array()) Fields::fail(key, "expected an array");
  std::vector<DataRequest> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    Fields f(arr[i], key + "[" + std::to_string(i) + "]");
    DataRequest r;
    r.requester = owner;
    r.type = data_type_field(f, "type");
    r.max_size = f.integer("max_size");
    r.min_res = f.number("min_res");
    r.max_res = f.number("max_res");
    f.finish();
    if (r.max_size == 0) Fields::fail(f.key("max_size"), "must be positive");
    if (r.max_res < r.min_res) Fields::fail(f.key("max_res"), "must not be below min_res");
    out.push_back(r);
  }
  return out;
}

inline SimNode parse_node(const json& j, const std::string& path) {
  Fields f(j, path);
  SimNode n;
  const auto id = f.integer("id");
  if (id == 0 || id > 0xffffffffULL) Fields::fail(f.key("id"), "must be in 1..2^32-1");
  n.id = NodeId{static_cast<std::uint32_t>(id)};
  n.name = f.text("name", "node" + std::to_string(id));
  n.hash_rate = f.number("hash_rate");
  if (!(n.hash_rate > 0.0)) Fields::fail(f.key("hash_rate"), "must be positive");
  n.position = parse_position(f.at("position"), f.key("position"));
  n.position_error = f.number("position_error", n.position_error);
  if (n.position_error < 0.0) Fields::fail(f.key("position_error"), "must be non-negative");
  n.channels = static_cast<std::uint32_t>(f.integer("channels", 0));
  if (f.has("behavior")) {
    const auto b = f.text("behavior");
    auto parsed = parse_behavior(b);
    if (!parsed) Fields::fail(f.key("behavior"), "unknown behavior '" + b + "'");
    n.behavior = *parsed;
  }
  n.infrastructure = f.boolean("infrastructure", false);
  if (f.has("online")) {
    const auto& arr = f.array("online");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& iv = arr[i];
      const auto key = f.key("online") + "[" + std::to_string(i) + "]";
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number_unsigned() || !iv[1].is_number_unsigned()) {
        Fields::fail(key, "expected [first_epoch, last_epoch]");
      }
      n.online.push_back({iv[0].get<std::uint64_t>(), iv[1].get<std::uint64_t>()});
      if (n.online.back().last < n.online.back().first) Fields::fail(key, "last epoch before first");
    }
  }
  if (f.has("sensors")) {
    for (const auto& s : parse_data_specs(f.array("sensors"), f.key("sensors"), n.id)) {
      n.sensors.push_back({n.id, s.type, s.max_size, s.min_res, s.max_res});
    }
  }
  if (f.has("needs")) n.needs = parse_data_specs(f.array("needs"), f.key("needs"), n.id);
  f.finish();
  return n;
}

inline Feature parse_feature(const json& j, const std::string& path) {
  Fields f(j, path);
  Feature ft;
  ft.name = f.text("name", "");
  const auto cls = f.text("class");
  auto fc = parse_feature_class(cls);
  if (!fc) Fields::fail(f.key("class"), "unknown feature class '" + cls + "'");
  ft.feature_class = *fc;
  ft.position = parse_position(f.at("position"), f.key("position"));
  if (ft.feature_class == FeatureClass::Planar) {
    ft.extent_m = f.number("extent_m");
    if (!(ft.extent_m > 0.0)) Fields::fail(f.key("extent_m"), "must be positive");
  }
  f.finish();
  return ft;
}

}  // namespace detail

/// Parses a scenario document. Relative calibration paths resolve against
/// `base_dir`. Throws ParseError naming the offending key.
inline Scenario parse_scenario(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::Fields;
  Fields root(doc, "");
  Scenario sc;
  sc.name = root.text("name", sc.name);
  sc.seed = root.integer("seed", sc.seed);
  sc.epochs = root.integer("epochs", sc.epochs);
  if (root.has("config")) {
    Fields f(root.at("config"), "config");
    detail::parse_config(f, sc.chain);
  }
  if (root.has("world")) {
    Fields f(root.at("world"), "world");
    detail::parse_world(f, sc.world);
  }
  if (root.has("quality")) {
    Fields f(root.at("quality"), "quality");
    detail::parse_quality(f, sc.quality);
  }
  if (root.has("calibration")) {
    Fields f(root.at("calibration"), "calibration");
    std::vector<CalibrationPoint> pts;
    if (f.has("csv")) {
      const auto& files = f.array("csv");
      for (std::size_t i = 0; i < files.size(); ++i) {
        if (!files[i].is_string()) Fields::fail("calibration.csv[" + std::to_string(i) + "]", "expected a path");
        auto p = std::filesystem::path(files[i].get<std::string>());
        if (p.is_relative()) p = base_dir / p;
        for (const auto& c : io::read_calibration_csv(p)) pts.push_back(c);
      }
    }
    f.finish();
    if (!pts.empty()) {
      try {
        sc.model = merge_models(fit_density_models(pts), default_density_model());
      } catch (const Error& e) {
        Fields::fail("calibration", e.what());
      }
    }
  }

  const auto& nodes = root.array("nodes");
  std::set<NodeId> ids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto n = detail::parse_node(nodes[i], "nodes[" + std::to_string(i) + "]");
    if (!ids.insert(n.id).second) Fields::fail("nodes[" + std::to_string(i) + "].id", "duplicate id");
    sc.nodes.push_back(std::move(n));
  }
  std::sort(sc.nodes.begin(), sc.nodes.end(), [](const SimNode& a, const SimNode& b) { return a.id < b.id; });

  if (root.has("links")) {
    const auto& links = root.array("links");
    for (std::size_t i = 0; i < links.size(); ++i) {
      Fields f(links[i], "links[" + std::to_string(i) + "]");
      Link l;
      l.a = NodeId{static_cast<std::uint32_t>(f.integer("a"))};
      l.b = NodeId{static_cast<std::uint32_t>(f.integer("b"))};
      l.bandwidth = f.number("bandwidth");
      l.latency = f.number("latency", 0.0);
      f.finish();
      if (!ids.contains(l.a)) Fields::fail(f.key("a"), "unknown node");
      if (!ids.contains(l.b)) Fields::fail(f.key("b"), "unknown node");
      if (l.a == l.b) Fields::fail(f.key("b"), "link to self");
      if (!(l.bandwidth > 0.0)) Fields::fail(f.key("bandwidth"), "must be positive");
      if (l.latency < 0.0) Fields::fail(f.key("latency"), "must be non-negative");
      sc.links.push_back(l);
    }
  }
  if (root.has("features")) {
    const auto& fs = root.array("features");
    for (std::size_t i = 0; i < fs.size(); ++i)
      sc.features.push_back(detail::parse_feature(fs[i], "features[" + std::to_string(i) + "]"));
  }
  if (root.has("fee_table")) {
    const auto& ft = root.array("fee_table");
    for (std::size_t i = 0; i < ft.size(); ++i) {
      if (!ft[i].is_number_unsigned()) Fields::fail("fee_table[" + std::to_string(i) + "]", "expected a byte count");
      sc.fee_table.push_back(ft[i].get<std::uint64_t>());
    }
  }
  root.finish();
  for (const auto& n : sc.nodes)
    if (n.infrastructure) sc.chain.infrastructure.push_back(n.id);
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, path.string() + ": cannot open");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return parse_scenario(doc, path.parent_path());
}

}  // namespace swarmchain
