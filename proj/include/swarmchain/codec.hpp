#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "swarmchain/sha256.hpp"
#include "swarmchain/types.hpp"

namespace swarmchain {

/// Canonical byte encoding used for every digest in the system.
///
///  - fixed-width integers are big-endian, no prefix
///  - bool and enums are one byte
///  - reals are IEEE-754 binary64 bit patterns, big-endian
///  - byte strings (digests included) carry a u32 big-endian length prefix
///  - lists carry a u32 big-endian element count, then the elements
///  - optionals carry a one-byte presence flag, then the value if present
///
/// Fields are always written in declaration order.
class Encoder {
 public:
  Encoder& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }

  Encoder& u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }

  Encoder& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }

  Encoder& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }

  Encoder& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

  Encoder& boolean(bool v) { return u8(v ? 1 : 0); }

  Encoder& bytes(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }

  Encoder& text(std::string_view s) {
    return bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }

  Encoder& digest(const Digest& d) { return bytes(d); }

  Encoder& node(NodeId id) { return u32(id.value); }

  Encoder& count(std::size_t n) { return u32(static_cast<std::uint32_t>(n)); }

  Encoder& opt_f64(const std::optional<double>& v) {
    boolean(v.has_value());
    if (v) f64(*v);
    return *this;
  }

  Encoder& position(const Position& p) { return f64(p.x).f64(p.y); }

  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
  std::vector<std::uint8_t> take() && { return std::move(buf_); }

  Digest hash() const { return sha256(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

inline void encode(Encoder& e, const DataStamp& s) {
  e.digest(s.stamp_digest)
      .node(s.producer)
      .u8(static_cast<std::uint8_t>(s.data_type))
      .u8(static_cast<std::uint8_t>(s.feature_class))
      .u32(s.point_count)
      .u32(s.channels)
      .f64(s.distance_m)
      .opt_f64(s.extent_m)
      .position(s.location)
      .f64(s.error_radius_m)
      .u64(s.epoch);
}

inline void encode(Encoder& e, const DataRequest& r) {
  e.node(r.requester).u8(static_cast<std::uint8_t>(r.type)).u64(r.max_size).f64(r.min_res).f64(r.max_res);
}

inline void encode(Encoder& e, const AvailableData& a) {
  e.node(a.provider).u8(static_cast<std::uint8_t>(a.type)).u64(a.max_size).f64(a.min_res).f64(a.max_res);
}

/// Digest of a stamp's content, computed with the digest field zeroed.
inline Digest compute_stamp_digest(const DataStamp& s) {
  DataStamp body = s;
  body.stamp_digest = kZeroDigest;
  Encoder e;
  encode(e, body);
  return e.hash();
}

inline DataStamp seal_stamp(DataStamp s) {
  s.stamp_digest = compute_stamp_digest(s);
  return s;
}

}  // namespace swarmchain
