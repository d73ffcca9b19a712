#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "swarmchain/error.hpp"

namespace swarmchain {

/// Admission-time node identifier. Zero is reserved for "nobody" (genesis
/// proposer, unset fields).
struct NodeId {
  std::uint32_t value = 0;

  constexpr auto operator<=>(const NodeId&) const = default;
  constexpr explicit operator bool() const noexcept { return value != 0; }
};

using Digest = std::array<std::uint8_t, 32>;

inline constexpr Digest kZeroDigest{};

inline std::string to_hex(const std::uint8_t* data, std::size_t size) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(size * 2);
  for (std::size_t i = 0; i < size; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0x0f]);
  }
  return out;
}

inline std::string to_hex(const Digest& d) { return to_hex(d.data(), d.size()); }

inline Digest digest_from_hex(std::string_view hex) {
  auto nibble = [&](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw Error(Errc::ParseError, "bad hex digit in digest");
  };
  if (hex.size() != 64) throw Error(Errc::ParseError, "digest must be 64 hex chars");
  Digest d{};
  for (std::size_t i = 0; i < 32; ++i) {
    d[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return d;
}

enum class DataType : std::uint8_t { Image = 0, PointCloud = 1, Radar = 2 };
enum class FeatureClass : std::uint8_t { Planar = 0, Revolute = 1, Composite = 2 };

constexpr std::string_view to_string(DataType t) noexcept {
  switch (t) {
    case DataType::Image: return "image";
    case DataType::PointCloud: return "pointcloud";
    case DataType::Radar: return "radar";
  }
  return "?";
}

constexpr std::string_view to_string(FeatureClass c) noexcept {
  switch (c) {
    case FeatureClass::Planar: return "planar";
    case FeatureClass::Revolute: return "revolute";
    case FeatureClass::Composite: return "composite";
  }
  return "?";
}

inline std::optional<DataType> parse_data_type(std::string_view s) {
  if (s == "image") return DataType::Image;
  if (s == "pointcloud") return DataType::PointCloud;
  if (s == "radar") return DataType::Radar;
  return std::nullopt;
}

inline std::optional<FeatureClass> parse_feature_class(std::string_view s) {
  if (s == "planar") return FeatureClass::Planar;
  if (s == "revolute") return FeatureClass::Revolute;
  if (s == "composite") return FeatureClass::Composite;
  return std::nullopt;
}

struct Position {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Position&) const = default;
};

inline double distance(const Position& a, const Position& b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// A characterized sample of shared sensor data. Only the summary travels
/// on-chain; the digest commits to every other field.
struct DataStamp {
  Digest stamp_digest{};
  NodeId producer;
  DataType data_type = DataType::PointCloud;
  FeatureClass feature_class = FeatureClass::Planar;
  std::uint32_t point_count = 0;
  std::uint32_t channels = 0;  // pointcloud only
  double distance_m = 0.0;
  std::optional<double> extent_m;  // planar only
  Position location;
  double error_radius_m = 0.0;
  std::uint64_t epoch = 0;

  bool operator==(const DataStamp&) const = default;
};

/// The three outcomes of comparing two stamps of the same scene.
enum class ComparisonOutcome : std::uint8_t { Match = 0, MatchWithDensityRelation = 1, Mismatch = 2 };

constexpr std::string_view to_string(ComparisonOutcome o) noexcept {
  switch (o) {
    case ComparisonOutcome::Match: return "match";
    case ComparisonOutcome::MatchWithDensityRelation: return "match_density";
    case ComparisonOutcome::Mismatch: return "mismatch";
  }
  return "?";
}

/// Request (DR) and availability (AD) records share one shape; the role is
/// carried by which list they sit in.
struct DataRequest {
  NodeId requester;
  DataType type = DataType::PointCloud;
  std::uint64_t max_size = 0;  // bytes
  double min_res = 0.0;
  double max_res = 0.0;

  bool operator==(const DataRequest&) const = default;
};

struct AvailableData {
  NodeId provider;
  DataType type = DataType::PointCloud;
  std::uint64_t max_size = 0;  // bytes
  double min_res = 0.0;
  double max_res = 0.0;

  bool operator==(const AvailableData&) const = default;
};

}  // namespace swarmchain
