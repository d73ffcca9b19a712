#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "swarmchain/codec.hpp"
#include "swarmchain/error.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

// ---------------------------------------------------------------------------
// Density models

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;

  double at(double x) const noexcept { return intercept + slope * x; }
};

struct Knot {
  double distance_m = 0.0;
  double points = 0.0;
  bool operator==(const Knot&) const = default;
};

/// Expected segmented point counts per feature class.
///
/// Linear classes were calibrated on a 32-channel scanner; stamps from other
/// channel counts are scaled by channels / reference_channels. Composite
/// tables are stored per channel count with no cross-channel law.
struct DensityModel {
  std::optional<LinearFit> planar;    // points vs horizontal extent (m)
  std::optional<LinearFit> revolute;  // points vs distance (m)
  std::map<std::uint32_t, std::vector<Knot>> composite;
  std::uint32_t reference_channels = 32;
};

struct CalibrationPoint {
  FeatureClass feature_class = FeatureClass::Planar;
  std::uint32_t channels = 0;
  double x = 0.0;  // extent for planar, distance otherwise
  double points = 0.0;
};

namespace detail {

/// Least squares on relative residuals: minimizes Σ((y - a - b·x)/y)².
inline LinearFit fit_relative_least_squares(std::span<const CalibrationPoint> pts) {
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (const auto& p : pts) {
    const double w = 1.0 / (p.points * p.points);
    sw += w;
    swx += w * p.x;
    swy += w * p.points;
    swxx += w * p.x * p.x;
    swxy += w * p.x * p.points;
  }
  const double det = sw * swxx - swx * swx;
  if (std::abs(det) < 1e-300) throw Error(Errc::InsufficientCalibration, "degenerate calibration abscissae");
  LinearFit fit;
  fit.slope = (sw * swxy - swx * swy) / det;
  fit.intercept = (swy - fit.slope * swx) / sw;

  double mean = 0;
  for (const auto& p : pts) mean += p.points;
  mean /= static_cast<double>(pts.size());
  double ss_res = 0, ss_tot = 0;
  for (const auto& p : pts) {
    ss_res += (p.points - fit.at(p.x)) * (p.points - fit.at(p.x));
    ss_tot += (p.points - mean) * (p.points - mean);
  }
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

/// Monotone piecewise-cubic Hermite interpolation (Fritsch–Butland slopes);
/// linear extrapolation beyond the end knots.
inline double pchip(std::span<const Knot> k, double x) {
  const std::size_t n = k.size();
  if (x <= k.front().distance_m) {
    const double s = (k[1].points - k[0].points) / (k[1].distance_m - k[0].distance_m);
    return k[0].points + s * (x - k[0].distance_m);
  }
  if (x >= k.back().distance_m) {
    const double s = (k[n - 1].points - k[n - 2].points) / (k[n - 1].distance_m - k[n - 2].distance_m);
    return k[n - 1].points + s * (x - k[n - 1].distance_m);
  }
  std::vector<double> h(n - 1), delta(n - 1), m(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = k[i + 1].distance_m - k[i].distance_m;
    delta[i] = (k[i + 1].points - k[i].points) / h[i];
  }
  m[0] = delta[0];
  m[n - 1] = delta[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (delta[i - 1] * delta[i] <= 0) {
      m[i] = 0;
    } else {
      const double w1 = 2 * h[i] + h[i - 1];
      const double w2 = h[i] + 2 * h[i - 1];
      m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
  }
  std::size_t i = 0;
  while (x > k[i + 1].distance_m) ++i;
  const double t = (x - k[i].distance_m) / h[i];
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * k[i].points + (t3 - 2 * t2 + t) * h[i] * m[i] + (-2 * t3 + 3 * t2) * k[i + 1].points +
         (t3 - t2) * h[i] * m[i + 1];
}

}  // namespace detail

/// Fits linear classes by relative least squares and stores composite knots
/// verbatim. Classes absent from the input are left unset.
inline DensityModel fit_density_models(std::span<const CalibrationPoint> points) {
  std::vector<CalibrationPoint> planar, revolute;
  std::map<std::uint32_t, std::vector<Knot>> composite;
  for (const auto& p : points) {
    if (!(p.points > 0.0)) throw Error(Errc::InsufficientCalibration, "point counts must be positive");
    switch (p.feature_class) {
      case FeatureClass::Planar: planar.push_back(p); break;
      case FeatureClass::Revolute: revolute.push_back(p); break;
      case FeatureClass::Composite: composite[p.channels].push_back({p.x, p.points}); break;
    }
  }
  if (planar.empty() && revolute.empty() && composite.empty()) {
    throw Error(Errc::InsufficientCalibration, "no calibration points");
  }
  DensityModel model;
  if (!planar.empty()) {
    if (planar.size() < 2) throw Error(Errc::InsufficientCalibration, "planar class needs at least 2 points");
    model.planar = detail::fit_relative_least_squares(planar);
    if (!(model.planar->slope > 0)) throw Error(Errc::InsufficientCalibration, "planar slope must be positive");
  }
  if (!revolute.empty()) {
    if (revolute.size() < 2) throw Error(Errc::InsufficientCalibration, "revolute class needs at least 2 points");
    model.revolute = detail::fit_relative_least_squares(revolute);
    if (!(model.revolute->slope < 0)) throw Error(Errc::InsufficientCalibration, "revolute slope must be negative");
  }
  for (auto& [channels, knots] : composite) {
    if (knots.size() < 2) {
      throw Error(Errc::InsufficientCalibration,
                  "composite series for " + std::to_string(channels) + " channels needs at least 2 knots");
    }
    std::sort(knots.begin(), knots.end(), [](const Knot& a, const Knot& b) { return a.distance_m < b.distance_m; });
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (!(knots[i].distance_m > knots[i - 1].distance_m) || !(knots[i].points < knots[i - 1].points)) {
        throw Error(Errc::InsufficientCalibration, "composite series must be strictly decreasing in distance");
      }
    }
  }
  model.composite = std::move(composite);
  return model;
}

/// Building-corner, tree and car calibration sets (32-channel scanner; car
/// series for 16 and 8 channels).
inline std::vector<CalibrationPoint> default_calibration_points() {
  std::vector<CalibrationPoint> pts;
  for (auto [x, y] : {std::pair{2.6, 278.0}, {2.2, 229.0}, {1.96, 202.0}, {1.55, 166.0}, {1.36, 143.0}, {1.21, 128.0},
                      {0.9, 97.0}, {0.46, 58.0}})
    pts.push_back({FeatureClass::Planar, 32, x, y});
  for (auto [x, y] : {std::pair{16.1, 134.0}, {15.2, 165.0}, {11.8, 241.0}, {10.2, 326.0}, {8.0, 395.0}})
    pts.push_back({FeatureClass::Revolute, 32, x, y});
  for (auto [x, y] : {std::pair{9.8, 150.0}, {8.0, 273.0}, {5.5, 578.0}, {4.0, 1117.0}})
    pts.push_back({FeatureClass::Composite, 16, x, y});
  for (auto [x, y] : {std::pair{9.8, 76.0}, {8.0, 114.0}, {5.5, 294.0}, {4.0, 457.0}})
    pts.push_back({FeatureClass::Composite, 8, x, y});
  return pts;
}

inline const DensityModel& default_density_model() {
  static const DensityModel model = fit_density_models(default_calibration_points());
  return model;
}

/// Fills any class the override leaves unset from `base`.
inline DensityModel merge_models(const DensityModel& overrides, const DensityModel& base) {
  DensityModel m = base;
  if (overrides.planar) m.planar = overrides.planar;
  if (overrides.revolute) m.revolute = overrides.revolute;
  for (const auto& [ch, knots] : overrides.composite) m.composite[ch] = knots;
  return m;
}

inline double expected_point_count(const DensityModel& model, const DataStamp& stamp) {
  // Images and radar have no calibrated model yet: the identity placeholder
  // makes every such stamp self-consistent.
  if (stamp.data_type != DataType::PointCloud) return std::max(1.0, static_cast<double>(stamp.point_count));

  const double channel_scale = stamp.channels == 0 ? 1.0
                                                   : static_cast<double>(stamp.channels) /
                                                         static_cast<double>(model.reference_channels);
  switch (stamp.feature_class) {
    case FeatureClass::Planar:
      if (!model.planar) throw Error(Errc::InsufficientCalibration, "no planar model");
      if (!stamp.extent_m) throw Error(Errc::Incomparable, "planar stamp without extent");
      return std::max(1.0, model.planar->at(*stamp.extent_m) * channel_scale);
    case FeatureClass::Revolute:
      if (!model.revolute) throw Error(Errc::InsufficientCalibration, "no revolute model");
      return std::max(1.0, model.revolute->at(stamp.distance_m) * channel_scale);
    case FeatureClass::Composite: {
      auto it = model.composite.find(stamp.channels);
      if (it == model.composite.end()) {
        throw Error(Errc::UnknownChannelCount, "no composite table for " + std::to_string(stamp.channels) + " channels");
      }
      return std::max(1.0, detail::pchip(it->second, stamp.distance_m));
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Stamp comparison

struct ComparisonDetail {
  double ratio_a = 1.0;  // observed / expected
  double ratio_b = 1.0;
  double density_ratio = 1.0;  // ratio_a / ratio_b
  int denser = 0;              // +1: a is the denser sample, -1: b is, 0: same density
};

struct ComparisonResult {
  ComparisonOutcome outcome = ComparisonOutcome::Match;
  ComparisonDetail detail;
  NodeId validator;
};

inline bool comparable(const DataStamp& a, const DataStamp& b) noexcept {
  return a.data_type == b.data_type && a.feature_class == b.feature_class &&
         distance(a.location, b.location) <= a.error_radius_m + b.error_radius_m;
}

/// Compares two stamps of the same scene after normalizing each count by its
/// model expectation. Agreement is symmetric: max/min of the normalized
/// ratios must stay within 1 + tolerance.
inline ComparisonResult compare_stamps(const DataStamp& a, const DataStamp& b, const DensityModel& model,
                                       double tolerance, NodeId validator = {}) {
  if (!comparable(a, b)) throw Error(Errc::Incomparable, "stamps differ in type or location");
  ComparisonResult r;
  r.validator = validator;
  r.detail.ratio_a = static_cast<double>(a.point_count) / expected_point_count(model, a);
  r.detail.ratio_b = static_cast<double>(b.point_count) / expected_point_count(model, b);
  r.detail.density_ratio = r.detail.ratio_a / r.detail.ratio_b;

  const double hi = std::max(r.detail.ratio_a, r.detail.ratio_b);
  const double lo = std::min(r.detail.ratio_a, r.detail.ratio_b);
  if (!(lo > 0.0) || hi / lo - 1.0 > tolerance) {
    r.outcome = ComparisonOutcome::Mismatch;
    return r;
  }
  if (a.data_type == DataType::PointCloud) {
    r.detail.denser = a.channels == b.channels ? 0 : (a.channels > b.channels ? 1 : -1);
  } else {
    r.detail.denser = a.point_count == b.point_count ? 0 : (a.point_count > b.point_count ? 1 : -1);
  }
  r.outcome = r.detail.denser == 0 ? ComparisonOutcome::Match : ComparisonOutcome::MatchWithDensityRelation;
  return r;
}

/// For a mismatch, the side whose normalized ratio sits further from the
/// model (in log terms). Ties go to `a`.
inline bool mismatch_blames_a(const ComparisonDetail& d) noexcept {
  return std::abs(std::log(d.ratio_a)) >= std::abs(std::log(d.ratio_b));
}

// ---------------------------------------------------------------------------
// Quality ledger and validation graph

struct QualityRules {
  double q_min = 0.01;
  double match_gain = 1.0;
  double relation_gain = 0.5;
  double mismatch_penalty = 2.0;
};

class ValidationGraph {
 public:
  void add_node(NodeId n) { adj_[n]; }

  void add_edge(NodeId a, NodeId b) {
    if (a == b) return;
    adj_[a].insert(b);
    adj_[b].insert(a);
  }

  bool has_edge(NodeId a, NodeId b) const {
    auto it = adj_.find(a);
    return it != adj_.end() && it->second.contains(b);
  }

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& [n, nbrs] : adj_) twice += nbrs.size();
    return twice / 2;
  }

  const std::map<NodeId, std::set<NodeId>>& adjacency() const noexcept { return adj_; }

 private:
  std::map<NodeId, std::set<NodeId>> adj_;
};

struct NodeQuality {
  double q = 0.0;
  std::uint64_t confirmed = 0;
};

/// One quality-relevant fact: a certified comparison about `subject`'s stamp
/// or a negative receipt filed against it.
struct QualityEvent {
  enum class Kind : std::uint8_t { Comparison, NegativeReceipt };
  Kind kind = Kind::Comparison;
  ComparisonOutcome outcome = ComparisonOutcome::Match;
  NodeId subject;
  NodeId validator;

  static QualityEvent comparison(ComparisonOutcome o, NodeId subject, NodeId validator) {
    return {Kind::Comparison, o, subject, validator};
  }
  static QualityEvent negative_receipt(NodeId provider, NodeId receiver) {
    return {Kind::NegativeReceipt, ComparisonOutcome::Mismatch, provider, receiver};
  }
};

class QualityLedger {
 public:
  explicit QualityLedger(QualityRules rules = {}) : rules_(rules) {}

  double q(NodeId id) const {
    auto it = scores_.find(id);
    return it == scores_.end() ? rules_.q_min : it->second.q;
  }

  std::uint64_t confirmed(NodeId id) const {
    auto it = scores_.find(id);
    return it == scores_.end() ? 0 : it->second.confirmed;
  }

  bool knows(NodeId id) const { return scores_.contains(id); }

  void set_q(NodeId id, double q) { entry(id).q = q; }

  const std::map<NodeId, NodeQuality>& scores() const noexcept { return scores_; }
  const ValidationGraph& graph() const noexcept { return graph_; }
  const QualityRules& rules() const noexcept { return rules_; }

  void apply(const QualityEvent& ev) {
    if (ev.subject == ev.validator) throw Error(Errc::SelfValidation, "a node cannot validate its own stamp");
    auto& s = entry(ev.subject);
    graph_.add_node(ev.validator);
    double delta = 0.0;
    if (ev.kind == QualityEvent::Kind::NegativeReceipt || ev.outcome == ComparisonOutcome::Mismatch) {
      delta = -rules_.mismatch_penalty;
    } else if (ev.outcome == ComparisonOutcome::Match) {
      delta = rules_.match_gain;
      ++s.confirmed;
      graph_.add_edge(ev.subject, ev.validator);
    } else {
      delta = rules_.relation_gain;
      graph_.add_edge(ev.subject, ev.validator);
    }
    double next = s.q + delta;
    // Q is never zero: a landing on zero snaps to ±q_min in the direction of travel.
    if (std::abs(next) < 1e-12) next = delta >= 0 ? rules_.q_min : -rules_.q_min;
    s.q = next;
  }

 private:
  NodeQuality& entry(NodeId id) {
    auto [it, inserted] = scores_.try_emplace(id, NodeQuality{rules_.q_min, 0});
    if (inserted) graph_.add_node(id);
    return it->second;
  }

  QualityRules rules_;
  std::map<NodeId, NodeQuality> scores_;
  ValidationGraph graph_;
};

inline QualityLedger update_quality(QualityLedger ledger, const QualityEvent& ev) {
  ledger.apply(ev);
  return ledger;
}

/// Per-spatial-shard ledgers with a global view. Global Q is the mean of the
/// node's local scores weighted by (1 + local confirmations); the global
/// validation graph is the union of the local ones.
class QualityBook {
 public:
  using ShardKey = std::pair<std::int64_t, std::int64_t>;

  explicit QualityBook(QualityRules rules = {}) : rules_(rules) {}

  void apply(const ShardKey& shard, const QualityEvent& ev) {
    local_.try_emplace(shard, rules_).first->second.apply(ev);
    graph_.add_node(ev.subject);
    graph_.add_node(ev.validator);
    if (ev.kind == QualityEvent::Kind::Comparison && ev.outcome != ComparisonOutcome::Mismatch) {
      graph_.add_edge(ev.subject, ev.validator);
    }
  }

  void add_node(NodeId id) { graph_.add_node(id); }

  double global_q(NodeId id) const {
    double num = 0.0, den = 0.0;
    for (const auto& [key, ledger] : local_) {
      if (!ledger.knows(id)) continue;
      const double w = 1.0 + static_cast<double>(ledger.confirmed(id));
      num += w * ledger.q(id);
      den += w;
    }
    if (den == 0.0) return rules_.q_min;
    const double q = num / den;
    if (std::abs(q) < 1e-12) return rules_.q_min;
    return q;
  }

  std::uint64_t global_confirmed(NodeId id) const {
    std::uint64_t total = 0;
    for (const auto& [key, ledger] : local_) total += ledger.confirmed(id);
    return total;
  }

  const std::map<ShardKey, QualityLedger>& shards() const noexcept { return local_; }
  const ValidationGraph& graph() const noexcept { return graph_; }

 private:
  QualityRules rules_;
  std::map<ShardKey, QualityLedger> local_;
  ValidationGraph graph_;
};

// ---------------------------------------------------------------------------
// Coalition detection

struct CoalitionReport {
  std::vector<std::vector<NodeId>> components;  // largest first, ties by smallest id
  std::vector<double> densities;
  std::vector<std::size_t> suspects;  // indices into components
  std::vector<std::size_t> indistinguishable;  // tied largest components, if any
  bool honest_majority_plausible = false;
};

inline double edge_density(const ValidationGraph& g, std::span<const NodeId> members) {
  if (members.size() < 2) return 0.0;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < members.size(); ++i)
    for (std::size_t j = i + 1; j < members.size(); ++j)
      if (g.has_edge(members[i], members[j])) ++edges;
  const double possible = static_cast<double>(members.size() * (members.size() - 1) / 2);
  return static_cast<double>(edges) / possible;
}

/// Splits the validation graph into components. The unique largest component
/// is presumed honest; every other internally dense component (density at or
/// above the threshold, at least two members) is flagged. When the largest
/// size is shared the groups cannot be told apart and nothing is flagged.
inline CoalitionReport detect_coalitions(const ValidationGraph& graph, double honest_fraction = 0.5,
                                         double density_threshold = 0.8) {
  CoalitionReport report;
  std::set<NodeId> seen;
  for (const auto& [start, _] : graph.adjacency()) {
    if (seen.contains(start)) continue;
    std::vector<NodeId> comp;
    std::vector<NodeId> stack{start};
    seen.insert(start);
    while (!stack.empty()) {
      const NodeId n = stack.back();
      stack.pop_back();
      comp.push_back(n);
      for (NodeId m : graph.adjacency().at(n))
        if (seen.insert(m).second) stack.push_back(m);
    }
    std::sort(comp.begin(), comp.end());
    report.components.push_back(std::move(comp));
  }
  std::stable_sort(report.components.begin(), report.components.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& c : report.components) report.densities.push_back(edge_density(graph, c));
  if (report.components.empty()) return report;

  const std::size_t largest = report.components.front().size();
  for (std::size_t i = 0; i < report.components.size(); ++i)
    if (report.components[i].size() == largest) report.indistinguishable.push_back(i);

  const std::size_t total = graph.adjacency().size();
  report.honest_majority_plausible = static_cast<double>(largest) > honest_fraction * static_cast<double>(total);

  if (report.indistinguishable.size() > 1) return report;
  report.indistinguishable.clear();
  for (std::size_t i = 1; i < report.components.size(); ++i) {
    if (report.components[i].size() >= 2 && report.densities[i] >= density_threshold) report.suspects.push_back(i);
  }
  return report;
}

}  // namespace swarmchain
