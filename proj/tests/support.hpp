#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "swarmchain/swarmchain.hpp"

namespace testing_support {

inline std::filesystem::path source_dir() { return SWARMCHAIN_SOURCE_DIR; }
inline std::filesystem::path golden(const std::string& name) { return source_dir() / "tests" / "golden" / name; }
inline std::filesystem::path scenario(const std::string& name) {
  return source_dir() / "data" / "scenarios" / (name + ".scenario");
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline swarmchain::Digest digest_of(std::string_view text) {
  swarmchain::Sha256 h;
  h.update(text);
  return h.finish();
}

inline swarmchain::DataStamp stamp(swarmchain::NodeId producer, swarmchain::FeatureClass cls, std::uint32_t points,
                                   double distance, std::optional<double> extent = std::nullopt,
                                   swarmchain::Position where = {10, 10}, std::uint32_t channels = 32) {
  swarmchain::DataStamp s;
  s.producer = producer;
  s.feature_class = cls;
  s.point_count = points;
  s.channels = channels;
  s.distance_m = distance;
  s.extent_m = extent;
  s.location = where;
  s.error_radius_m = 1.0;
  s.epoch = 1;
  return swarmchain::seal_stamp(s);
}

}  // namespace testing_support
