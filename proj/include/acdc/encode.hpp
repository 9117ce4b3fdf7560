// encode.hpp - header-field registry and ternary per-bit flow encoding.
//
// A flow is encoded packet by packet (first k packets, default 3).  For every
// selected field the header bits are emitted most-significant first as 0/1.
// A field whose header is absent from a packet (e.g. tcp.* on a UDP packet)
// and every field of a missing packet are filled with -1.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory_resource>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "acdc/error.hpp"
#include "acdc/traffic.hpp"

namespace acdc {

enum class Protocol : std::uint8_t { ipv4, tcp, udp };

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::ipv4: return "ipv4";
    case Protocol::tcp: return "tcp";
    case Protocol::udp: return "udp";
  }
  return "?";
}

// Where a field's bits are read from.  Differs from Protocol only for the port
// fields, which the feature table files under ipv4 but live in whichever
// transport header the packet carries.
enum class BitSource : std::uint8_t { ipv4, tcp, udp, transport, payload };

// Regions that hold a variable-length option block, zero padded to the
// field's width.
enum class Region : std::uint8_t { fixed, ipv4_options, tcp_options, payload };

struct FieldSpec {
  int id = 0;
  Protocol protocol = Protocol::ipv4;
  std::string_view name;
  int bits = 0;
  int bit_offset = 0;  // from the start of the source header
  bool preliminary_eligible = false;
  bool heuristic_selected = false;
  BitSource source = BitSource::ipv4;
  Region region = Region::fixed;

  std::string qualified_name() const { return std::string(to_string(protocol)) + "." + std::string(name); }
  bool encodable() const { return region != Region::payload; }
};

namespace detail {

inline constexpr int kOptionBits = 320;

// Row order follows the feature-selection table; ids are row indices.
inline const std::array<FieldSpec, 37>& registry_rows() {
  using P = Protocol;
  using S = BitSource;
  using R = Region;
  static const std::array<FieldSpec, 37> rows = {{
      {0, P::ipv4, "ttl", 8, 64, true, true, S::ipv4, R::fixed},
      {1, P::tcp, "opt", kOptionBits, 160, true, true, S::tcp, R::tcp_options},
      {2, P::ipv4, "dfbit", 1, 49, true, true, S::ipv4, R::fixed},
      {3, P::tcp, "doff", 4, 96, true, true, S::tcp, R::fixed},
      {4, P::tcp, "wsize", 16, 112, true, true, S::tcp, R::fixed},
      {5, P::tcp, "fin", 1, 111, true, true, S::tcp, R::fixed},
      {6, P::ipv4, "cksum", 16, 80, true, true, S::ipv4, R::fixed},
      {7, P::tcp, "ackf", 1, 107, true, true, S::tcp, R::fixed},
      {8, P::udp, "len", 16, 32, true, true, S::udp, R::fixed},
      {9, P::tcp, "cksum", 16, 128, true, true, S::tcp, R::fixed},
      {10, P::udp, "cksum", 16, 48, true, true, S::udp, R::fixed},
      {11, P::ipv4, "tl", 16, 16, true, true, S::ipv4, R::fixed},
      {12, P::ipv4, "tos", 8, 8, true, true, S::ipv4, R::fixed},
      {13, P::ipv4, "proto", 8, 72, true, true, S::ipv4, R::fixed},
      {14, P::tcp, "seq", 32, 32, true, true, S::tcp, R::fixed},
      {15, P::tcp, "psh", 1, 108, true, true, S::tcp, R::fixed},
      {16, P::tcp, "ackn", 32, 64, true, true, S::tcp, R::fixed},
      {17, P::tcp, "rst", 1, 109, true, true, S::tcp, R::fixed},
      {18, P::tcp, "res", 3, 100, true, false, S::tcp, R::fixed},
      {19, P::ipv4, "foff", 13, 51, true, false, S::ipv4, R::fixed},
      {20, P::tcp, "urp", 16, 144, true, false, S::tcp, R::fixed},
      {21, P::tcp, "urg", 1, 106, true, false, S::tcp, R::fixed},
      {22, P::tcp, "syn", 1, 110, true, false, S::tcp, R::fixed},
      {23, P::tcp, "ns", 1, 103, true, false, S::tcp, R::fixed},
      {24, P::ipv4, "hl", 4, 4, true, false, S::ipv4, R::fixed},
      {25, P::tcp, "ece", 1, 105, true, false, S::tcp, R::fixed},
      {26, P::ipv4, "mfbit", 1, 50, true, false, S::ipv4, R::fixed},
      {27, P::ipv4, "opt", kOptionBits, 160, true, false, S::ipv4, R::ipv4_options},
      {28, P::ipv4, "rbit", 1, 48, true, false, S::ipv4, R::fixed},
      {29, P::tcp, "cwr", 1, 104, true, false, S::tcp, R::fixed},
      {30, P::ipv4, "ver", 4, 0, true, false, S::ipv4, R::fixed},
      {31, P::ipv4, "id", 16, 32, true, false, S::ipv4, R::fixed},
      {32, P::ipv4, "sport", 16, 0, false, false, S::transport, R::fixed},
      {33, P::ipv4, "dport", 16, 16, false, false, S::transport, R::fixed},
      {34, P::ipv4, "sip", 32, 96, false, false, S::ipv4, R::fixed},
      {35, P::ipv4, "dip", 32, 128, false, false, S::ipv4, R::fixed},
      {36, P::tcp, "payload", 3840, 0, false, false, S::payload, R::payload},
  }};
  return rows;
}

}  // namespace detail

// All feature-table rows, ordered by id.
inline std::span<const FieldSpec> field_registry() { return detail::registry_rows(); }

inline const FieldSpec& field_by_id(int id) {
  const auto rows = field_registry();
  if (id < 0 || static_cast<std::size_t>(id) >= rows.size())
    throw ArgumentError("unknown field id " + std::to_string(id));
  return rows[static_cast<std::size_t>(id)];
}

inline const FieldSpec& find_field(Protocol protocol, std::string_view name) {
  for (const auto& f : field_registry())
    if (f.protocol == protocol && f.name == name) return f;
  throw ArgumentError("unknown field " + std::string(to_string(protocol)) + "." + std::string(name));
}

// Accepts "ipv4.ttl", "ipv4-ttl" or "ipv4_ttl".
inline const FieldSpec& find_field(std::string_view qualified) {
  const auto sep = qualified.find_first_of(".-_");
  if (sep == std::string_view::npos) throw ArgumentError("field name '" + std::string(qualified) + "' lacks protocol");
  const auto proto = qualified.substr(0, sep);
  Protocol p;
  if (proto == "ipv4") p = Protocol::ipv4;
  else if (proto == "tcp") p = Protocol::tcp;
  else if (proto == "udp") p = Protocol::udp;
  else throw ArgumentError("unknown protocol in field name '" + std::string(qualified) + "'");
  return find_field(p, qualified.substr(sep + 1));
}

inline std::vector<int> preliminary_field_ids() {
  std::vector<int> ids;
  for (const auto& f : field_registry())
    if (f.preliminary_eligible) ids.push_back(f.id);
  return ids;
}

// CSV dump of the registry: header,field,bits,bit_offset,preliminary,heuristic
inline std::string registry_csv() {
  std::ostringstream out;
  out << "id,header,field,bits,bit_offset,preliminary,heuristic\n";
  for (const auto& f : field_registry())
    out << f.id << ',' << to_string(f.protocol) << ',' << f.name << ',' << f.bits << ',' << f.bit_offset << ','
        << (f.preliminary_eligible ? 'Y' : 'N') << ',' << (f.heuristic_selected ? 'Y' : 'N') << '\n';
  return out.str();
}

// Canonically ordered (by id), non-empty set of encodable registry fields.
class FeatureSubset {
 public:
  FeatureSubset() = default;

  explicit FeatureSubset(std::vector<int> ids) : ids_(std::move(ids)) {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    if (ids_.empty()) throw ArgumentError("feature subset must not be empty");
    for (int id : ids_) {
      const auto& f = field_by_id(id);
      if (!f.encodable())
        throw ArgumentError("field " + f.qualified_name() + " cannot be encoded (payload bytes are not retained)");
    }
  }

  static FeatureSubset from_names(const std::vector<std::string>& names) {
    std::vector<int> ids;
    for (const auto& n : names) ids.push_back(find_field(n).id);
    return FeatureSubset(std::move(ids));
  }

  // Parses "ipv4.ttl&tcp.fin" (also accepts '|' or ';' separators).
  static FeatureSubset parse(std::string_view text) {
    std::vector<std::string> names;
    std::string cur;
    for (char c : text) {
      if (c == '&' || c == '|' || c == ';') {
        if (!cur.empty()) names.push_back(std::move(cur));
        cur.clear();
      } else if (c != ' ') {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) names.push_back(std::move(cur));
    return from_names(names);
  }

  std::span<const int> ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

  std::string to_string() const {
    std::string out;
    for (int id : ids_) {
      if (!out.empty()) out += '&';
      out += field_by_id(id).qualified_name();
    }
    return out;
  }

  bool operator==(const FeatureSubset&) const = default;
  auto operator<=>(const FeatureSubset&) const = default;

 private:
  std::vector<int> ids_;
};

// Per-packet width: sum of the subset's field widths.
inline int subset_bits(const FeatureSubset& subset) {
  int total = 0;
  for (int id : subset.ids()) total += field_by_id(id).bits;
  return total;
}

inline constexpr int kDefaultEncodedPackets = 3;

inline std::size_t encoded_length(const FeatureSubset& subset, int k_packets = kDefaultEncodedPackets) {
  return static_cast<std::size_t>(k_packets) * static_cast<std::size_t>(subset_bits(subset));
}

// Offset of a field's bit block inside one packet's slice of the vector.
inline int field_offset(const FeatureSubset& subset, int field_id) {
  int off = 0;
  for (int id : subset.ids()) {
    if (id == field_id) return off;
    off += field_by_id(id).bits;
  }
  throw ArgumentError("field " + field_by_id(field_id).qualified_name() + " is not in subset " + subset.to_string());
}

// Every column holding field_id, across all encoded packets.
inline std::vector<std::size_t> field_columns(const FeatureSubset& subset, int field_id,
                                              int k_packets = kDefaultEncodedPackets) {
  const int width = subset_bits(subset);
  const int off = field_offset(subset, field_id);
  const int bits = field_by_id(field_id).bits;
  std::vector<std::size_t> cols;
  cols.reserve(static_cast<std::size_t>(bits * k_packets));
  for (int p = 0; p < k_packets; ++p)
    for (int b = 0; b < bits; ++b) cols.push_back(static_cast<std::size_t>(p * width + off + b));
  return cols;
}

namespace detail {

inline void emit_bits(std::span<const std::uint8_t> bytes, int bit_offset, int bits, std::int8_t* out) {
  for (int i = 0; i < bits; ++i) {
    const int pos = bit_offset + i;
    out[i] = static_cast<std::int8_t>((bytes[static_cast<std::size_t>(pos / 8)] >> (7 - pos % 8)) & 1);
  }
}

inline void encode_field(const PacketSnapshot& pkt, const FieldSpec& f, std::int8_t* out) {
  std::span<const std::uint8_t> hdr;
  bool present = false;
  switch (f.source) {
    case BitSource::ipv4:
      hdr = pkt.ip_header;
      present = true;
      break;
    case BitSource::tcp:
      hdr = pkt.transport_header;
      present = pkt.transport_proto == TransportProto::tcp;
      break;
    case BitSource::udp:
      hdr = pkt.transport_header;
      present = pkt.transport_proto == TransportProto::udp;
      break;
    case BitSource::transport:
      hdr = pkt.transport_header;
      present = true;
      break;
    case BitSource::payload:
      throw EncodeError("field " + f.qualified_name() + " cannot be encoded");
  }
  if (!present) {
    std::fill(out, out + f.bits, std::int8_t{-1});
    return;
  }
  if (f.region == Region::fixed) {
    if (hdr.size() * 8 < static_cast<std::size_t>(f.bit_offset + f.bits))
      throw EncodeError("header too short for field " + f.qualified_name() + " (" + std::to_string(hdr.size()) +
                        " bytes)");
    emit_bits(hdr, f.bit_offset, f.bits, out);
    return;
  }
  // Option block: actual option bytes, zero padded to the field width.
  std::size_t claimed = 0;
  if (f.region == Region::ipv4_options) {
    if (hdr.empty()) throw EncodeError("header too short for field " + f.qualified_name());
    claimed = std::size_t{hdr[0] & 0x0fu} * 4;
  } else {
    if (hdr.size() < 13) throw EncodeError("header too short for field " + f.qualified_name());
    claimed = std::size_t{static_cast<std::uint8_t>(hdr[12] >> 4)} * 4;
  }
  if (claimed < 20 || hdr.size() < claimed)
    throw EncodeError("header too short for field " + f.qualified_name() + ": claims " + std::to_string(claimed) +
                      " bytes, has " + std::to_string(hdr.size()));
  const auto opt_bits = static_cast<int>(std::min<std::size_t>((claimed - 20) * 8, static_cast<std::size_t>(f.bits)));
  emit_bits(hdr, 160, opt_bits, out);
  std::fill(out + opt_bits, out + f.bits, std::int8_t{0});
}

}  // namespace detail

// Writes the encoding of one flow into out (length encoded_length()).
inline void encode_flow_into(const FlowRecord& flow, const FeatureSubset& subset, int k_packets,
                             std::span<std::int8_t> out) {
  const int width = subset_bits(subset);
  if (out.size() != static_cast<std::size_t>(width * k_packets)) throw ShapeError("encode buffer has wrong length");
  std::int8_t* dst = out.data();
  for (int p = 0; p < k_packets; ++p) {
    if (static_cast<std::size_t>(p) >= flow.packets.size()) {
      std::fill(dst, dst + width, std::int8_t{-1});
    } else {
      std::int8_t* cur = dst;
      for (int id : subset.ids()) {
        const auto& f = field_by_id(id);
        detail::encode_field(flow.packets[static_cast<std::size_t>(p)], f, cur);
        cur += f.bits;
      }
    }
    dst += width;
  }
}

using FeatureVector = std::vector<std::int8_t>;

inline FeatureVector encode_flow(const FlowRecord& flow, const FeatureSubset& subset,
                                 int k_packets = kDefaultEncodedPackets) {
  if (subset.size() == 0) throw ArgumentError("feature subset must not be empty");
  if (k_packets < 1) throw ArgumentError("k_packets must be >= 1");
  FeatureVector v(encoded_length(subset, k_packets));
  encode_flow_into(flow, subset, k_packets, v);
  return v;
}

// Row-major matrix of encoded flows.  Storage comes from a polymorphic memory
// resource so profiling can account for it.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::pmr::vector<std::int8_t> data;

  explicit FeatureMatrix(std::pmr::memory_resource* mr = std::pmr::get_default_resource()) : data(mr) {}
  FeatureMatrix(std::size_t r, std::size_t c, std::pmr::memory_resource* mr = std::pmr::get_default_resource())
      : rows(r), cols(c), data(r * c, 0, mr) {}

  std::span<const std::int8_t> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<std::int8_t> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::int8_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline FeatureMatrix encode_flows(std::span<const FlowRecord> flows, const FeatureSubset& subset,
                                  int k_packets = kDefaultEncodedPackets,
                                  std::pmr::memory_resource* mr = std::pmr::get_default_resource()) {
  FeatureMatrix m(flows.size(), encoded_length(subset, k_packets), mr);
  for (std::size_t i = 0; i < flows.size(); ++i) encode_flow_into(flows[i], subset, k_packets, m.row(i));
  return m;
}

}  // namespace acdc
