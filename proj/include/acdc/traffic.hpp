// traffic.hpp - packets, flows and labelled flow sets.
//
// Flows are groupings of IPv4 TCP/UDP packets under a bidirectional 5-tuple.
// Only the raw IP and transport headers of each packet are retained (payload
// bytes are never stored, only their length).  No stream reassembly is done.

#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/detail/text.hpp"
#include "acdc/error.hpp"

namespace acdc {

using ClassId = int;

enum class TransportProto : std::uint8_t { tcp = 6, udp = 17 };

inline const char* to_string(TransportProto p) { return p == TransportProto::tcp ? "tcp" : "udp"; }

struct PacketSnapshot {
  double timestamp = 0.0;  // seconds
  std::vector<std::uint8_t> ip_header;
  std::vector<std::uint8_t> transport_header;
  TransportProto transport_proto = TransportProto::tcp;
  std::uint32_t payload_len = 0;

  bool operator==(const PacketSnapshot&) const = default;
};

struct FlowKey {
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  TransportProto proto = TransportProto::tcp;

  // Orders the two endpoints so both directions of a conversation share a key.
  FlowKey canonical() const {
    if (std::tie(src_ip, src_port) <= std::tie(dst_ip, dst_port)) return *this;
    return FlowKey{dst_ip, src_ip, dst_port, src_port, proto};
  }

  auto operator<=>(const FlowKey&) const = default;
};

struct FlowRecord {
  FlowKey key;
  ClassId label = 0;
  std::vector<PacketSnapshot> packets;

  bool operator==(const FlowRecord&) const = default;
};

struct FlowSet {
  std::vector<FlowRecord> flows;
  std::map<ClassId, std::string> label_names;

  std::size_t size() const { return flows.size(); }
  bool empty() const { return flows.empty(); }

  void validate() const {
    for (std::size_t i = 0; i < flows.size(); ++i) {
      const auto& f = flows[i];
      if (!label_names.contains(f.label))
        throw ArgumentError("flow " + std::to_string(i) + " has unknown label " + std::to_string(f.label));
      if (f.packets.empty()) throw ArgumentError("flow " + std::to_string(i) + " has no packets");
    }
  }

  std::vector<ClassId> labels() const {
    std::vector<ClassId> out;
    out.reserve(flows.size());
    for (const auto& f : flows) out.push_back(f.label);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Header construction and access helpers.

namespace net {

inline std::uint16_t load16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] << 8 | b[off + 1]);
}

inline std::uint32_t load32(std::span<const std::uint8_t> b, std::size_t off) {
  return std::uint32_t{b[off]} << 24 | std::uint32_t{b[off + 1]} << 16 | std::uint32_t{b[off + 2]} << 8 |
         std::uint32_t{b[off + 3]};
}

inline void store16(std::span<std::uint8_t> b, std::size_t off, std::uint16_t v) {
  b[off] = static_cast<std::uint8_t>(v >> 8);
  b[off + 1] = static_cast<std::uint8_t>(v);
}

inline void store32(std::span<std::uint8_t> b, std::size_t off, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
}

// RFC 791 header checksum over the given bytes with the checksum field zeroed.
inline std::uint16_t ipv4_checksum(std::span<const std::uint8_t> header) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < header.size(); i += 2) {
    if (i == 10) continue;
    sum += load16(header, i);
  }
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

struct Ipv4Fields {
  std::uint8_t tos = 0;
  std::uint16_t id = 0;
  bool dont_fragment = false;
  std::uint8_t ttl = 64;
  TransportProto proto = TransportProto::tcp;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::vector<std::uint8_t> options;  // padded to a multiple of 4 bytes
};

inline std::vector<std::uint8_t> make_ipv4_header(const Ipv4Fields& f, std::size_t l4_and_payload_len) {
  auto opts = f.options;
  while (opts.size() % 4 != 0) opts.push_back(0);
  if (opts.size() > 40) throw ArgumentError("IPv4 options longer than 40 bytes");
  std::vector<std::uint8_t> h(20 + opts.size(), 0);
  h[0] = static_cast<std::uint8_t>(0x40 | (h.size() / 4));
  h[1] = f.tos;
  store16(h, 2, static_cast<std::uint16_t>(h.size() + l4_and_payload_len));
  store16(h, 4, f.id);
  store16(h, 6, f.dont_fragment ? 0x4000 : 0);
  h[8] = f.ttl;
  h[9] = static_cast<std::uint8_t>(f.proto);
  store32(h, 12, f.src);
  store32(h, 16, f.dst);
  std::copy(opts.begin(), opts.end(), h.begin() + 20);
  store16(h, 10, ipv4_checksum(h));
  return h;
}

namespace tcp_flag {
inline constexpr std::uint16_t fin = 0x001, syn = 0x002, rst = 0x004, psh = 0x008, ack = 0x010, urg = 0x020,
                               ece = 0x040, cwr = 0x080, ns = 0x100;
}

struct TcpFields {
  std::uint16_t sport = 0;
  std::uint16_t dport = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint16_t flags = 0;  // tcp_flag bits, NS in bit 8
  std::uint16_t window = 0;
  std::uint16_t checksum = 0;
  std::vector<std::uint8_t> options;  // padded with NOP-free zeros to 4 bytes
};

inline std::vector<std::uint8_t> make_tcp_header(const TcpFields& f) {
  auto opts = f.options;
  while (opts.size() % 4 != 0) opts.push_back(0);
  if (opts.size() > 40) throw ArgumentError("TCP options longer than 40 bytes");
  std::vector<std::uint8_t> h(20 + opts.size(), 0);
  store16(h, 0, f.sport);
  store16(h, 2, f.dport);
  store32(h, 4, f.seq);
  store32(h, 8, f.ack);
  h[12] = static_cast<std::uint8_t>((h.size() / 4) << 4 | ((f.flags >> 8) & 1));
  h[13] = static_cast<std::uint8_t>(f.flags & 0xff);
  store16(h, 14, f.window);
  store16(h, 16, f.checksum);
  std::copy(opts.begin(), opts.end(), h.begin() + 20);
  return h;
}

inline std::vector<std::uint8_t> make_udp_header(std::uint16_t sport, std::uint16_t dport, std::uint32_t payload_len,
                                                 std::uint16_t checksum) {
  std::vector<std::uint8_t> h(8, 0);
  store16(h, 0, sport);
  store16(h, 2, dport);
  store16(h, 4, static_cast<std::uint16_t>(8 + payload_len));
  store16(h, 6, checksum);
  return h;
}

// Builds the key of a snapshot from its raw headers (direction as captured).
inline FlowKey key_of(const PacketSnapshot& p) {
  return FlowKey{load32(p.ip_header, 12), load32(p.ip_header, 16), load16(p.transport_header, 0),
                 load16(p.transport_header, 2), p.transport_proto};
}

}  // namespace net

// ---------------------------------------------------------------------------
// Flow assembly.

// Groups packets into flows by bidirectional 5-tuple.  Packets inside a flow
// are sorted by timestamp and truncated to max_packets_per_flow; flows are
// ordered by their first timestamp, then key.
inline std::vector<FlowRecord> assemble_flows(std::vector<PacketSnapshot> packets, ClassId label,
                                              std::size_t max_packets_per_flow) {
  if (max_packets_per_flow == 0) throw ArgumentError("max_packets_per_flow must be >= 1");
  std::map<FlowKey, std::vector<PacketSnapshot>> groups;
  for (auto& p : packets) groups[net::key_of(p).canonical()].push_back(std::move(p));

  std::vector<FlowRecord> flows;
  flows.reserve(groups.size());
  for (auto& [key, pkts] : groups) {
    std::stable_sort(pkts.begin(), pkts.end(),
                     [](const PacketSnapshot& a, const PacketSnapshot& b) { return a.timestamp < b.timestamp; });
    if (pkts.size() > max_packets_per_flow) pkts.resize(max_packets_per_flow);
    flows.push_back(FlowRecord{key, label, std::move(pkts)});
  }
  std::sort(flows.begin(), flows.end(), [](const FlowRecord& a, const FlowRecord& b) {
    return std::tie(a.packets.front().timestamp, a.key) < std::tie(b.packets.front().timestamp, b.key);
  });
  return flows;
}

// ---------------------------------------------------------------------------
// Classic pcap (libpcap 2.4) reading and writing.

namespace pcap {

inline constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
inline constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
inline constexpr std::uint32_t kLinkEthernet = 1;
inline constexpr std::size_t kGlobalHeaderLen = 24;
inline constexpr std::size_t kRecordHeaderLen = 16;

// Decodes one Ethernet frame.  Returns false for anything that is not an
// unfragmented IPv4 TCP/UDP packet with complete headers.
inline bool decode_frame(std::span<const std::uint8_t> frame, double ts, PacketSnapshot& out) {
  std::size_t off = 14;
  if (frame.size() < off) return false;
  std::uint16_t ethertype = net::load16(frame, 12);
  if (ethertype == 0x8100) {  // single 802.1Q tag
    if (frame.size() < 18) return false;
    ethertype = net::load16(frame, 16);
    off = 18;
  }
  if (ethertype != 0x0800) return false;
  auto ip = frame.subspan(off);
  if (ip.size() < 20 || (ip[0] >> 4) != 4) return false;
  const std::size_t ihl = std::size_t{ip[0] & 0x0fu} * 4;
  if (ihl < 20 || ip.size() < ihl) return false;
  if ((net::load16(ip, 6) & 0x1fff) != 0) return false;  // non-first fragment
  const std::uint8_t proto = ip[9];
  if (proto != 6 && proto != 17) return false;
  const std::size_t total_len = net::load16(ip, 2);
  auto l4 = ip.subspan(ihl);
  std::size_t l4_len = 0;
  if (proto == 6) {
    if (l4.size() < 20) return false;
    l4_len = std::size_t{static_cast<std::uint8_t>(l4[12] >> 4)} * 4;
    if (l4_len < 20 || l4.size() < l4_len) return false;
  } else {
    if (l4.size() < 8) return false;
    l4_len = 8;
  }
  out.timestamp = ts;
  out.ip_header.assign(ip.begin(), ip.begin() + static_cast<std::ptrdiff_t>(ihl));
  out.transport_header.assign(l4.begin(), l4.begin() + static_cast<std::ptrdiff_t>(l4_len));
  out.transport_proto = proto == 6 ? TransportProto::tcp : TransportProto::udp;
  out.payload_len = total_len > ihl + l4_len ? static_cast<std::uint32_t>(total_len - ihl - l4_len) : 0;
  return true;
}

// Reads every IPv4 TCP/UDP packet out of an in-memory pcap file.
inline std::vector<PacketSnapshot> read_packets(std::span<const std::uint8_t> data) {
  if (data.size() < kGlobalHeaderLen) throw FormatError("pcap global header truncated");
  const std::uint32_t raw_magic = std::uint32_t{data[0]} | std::uint32_t{data[1]} << 8 |
                                  std::uint32_t{data[2]} << 16 | std::uint32_t{data[3]} << 24;
  bool swap = false;
  bool nanos = false;
  if (raw_magic == kMagicMicros || raw_magic == kMagicNanos) {
    nanos = raw_magic == kMagicNanos;
  } else if (__builtin_bswap32(raw_magic) == kMagicMicros || __builtin_bswap32(raw_magic) == kMagicNanos) {
    swap = true;
    nanos = __builtin_bswap32(raw_magic) == kMagicNanos;
  } else {
    throw FormatError("not a classic pcap file (bad magic)");
  }
  auto u32 = [&](std::size_t off) {
    std::uint32_t v = std::uint32_t{data[off]} | std::uint32_t{data[off + 1]} << 8 |
                      std::uint32_t{data[off + 2]} << 16 | std::uint32_t{data[off + 3]} << 24;
    return swap ? __builtin_bswap32(v) : v;
  };
  const std::uint32_t linktype = u32(20);
  if (linktype != kLinkEthernet)
    throw FormatError("unsupported pcap link type " + std::to_string(linktype) + " (need Ethernet)");

  std::vector<PacketSnapshot> packets;
  std::size_t off = kGlobalHeaderLen;
  while (off < data.size()) {
    if (data.size() - off < kRecordHeaderLen)
      throw ParseError("truncated pcap record header at byte offset " + std::to_string(off));
    const double ts = u32(off) + u32(off + 4) * (nanos ? 1e-9 : 1e-6);
    const std::uint32_t incl_len = u32(off + 8);
    const std::size_t body = off + kRecordHeaderLen;
    if (data.size() - body < incl_len)
      throw ParseError("truncated pcap record at byte offset " + std::to_string(off) + ": need " +
                       std::to_string(incl_len) + " bytes, have " + std::to_string(data.size() - body));
    PacketSnapshot snap;
    if (decode_frame(data.subspan(body, incl_len), ts, snap)) packets.push_back(std::move(snap));
    off = body + incl_len;
  }
  return packets;
}

// Serializes packets as Ethernet frames (microsecond pcap, native little
// endian).  Payload bytes are written as zeros.
inline std::vector<std::uint8_t> write_packets(std::span<const PacketSnapshot> packets) {
  std::vector<std::uint8_t> out;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  put32(kMagicMicros);
  put16(2);
  put16(4);
  put32(0);
  put32(0);
  put32(65535);
  put32(kLinkEthernet);
  for (const auto& p : packets) {
    const std::size_t frame_len = 14 + p.ip_header.size() + p.transport_header.size() + p.payload_len;
    auto secs = static_cast<std::uint32_t>(p.timestamp);
    auto micros = static_cast<std::uint32_t>((p.timestamp - secs) * 1e6 + 0.5);
    if (micros >= 1000000) {
      ++secs;
      micros -= 1000000;
    }
    put32(secs);
    put32(micros);
    put32(static_cast<std::uint32_t>(frame_len));
    put32(static_cast<std::uint32_t>(frame_len));
    static constexpr std::array<std::uint8_t, 14> kEth = {0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01, 0x08, 0x00};
    out.insert(out.end(), kEth.begin(), kEth.end());
    out.insert(out.end(), p.ip_header.begin(), p.ip_header.end());
    out.insert(out.end(), p.transport_header.begin(), p.transport_header.end());
    out.insert(out.end(), p.payload_len, 0);
  }
  return out;
}

}  // namespace pcap

inline FlowSet parse_pcap_bytes(std::span<const std::uint8_t> data, ClassId label, std::size_t max_packets_per_flow,
                                std::string label_name = {}) {
  FlowSet set;
  set.flows = assemble_flows(pcap::read_packets(data), label, max_packets_per_flow);
  set.label_names[label] = label_name.empty() ? "class" + std::to_string(label) : std::move(label_name);
  return set;
}

inline FlowSet parse_pcap(const std::filesystem::path& path, ClassId label, std::size_t max_packets_per_flow = 4,
                          std::string label_name = {}) {
  if (!std::filesystem::exists(path)) throw ConfigError("pcap file '" + path.string() + "' does not exist");
  const auto text = detail::read_file(path.string());
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  return parse_pcap_bytes(bytes, label, max_packets_per_flow, std::move(label_name));
}

// Writes the packets of the given flows to a pcap file in timestamp order.
inline void write_pcap(const std::filesystem::path& path, std::span<const FlowRecord> flows) {
  std::vector<PacketSnapshot> packets;
  for (const auto& f : flows) packets.insert(packets.end(), f.packets.begin(), f.packets.end());
  std::stable_sort(packets.begin(), packets.end(),
                   [](const PacketSnapshot& a, const PacketSnapshot& b) { return a.timestamp < b.timestamp; });
  const auto bytes = pcap::write_packets(packets);
  detail::write_file(path.string(), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// Train/test split.

// Shuffled partition with |train| = min(floor(fraction * n), n - 1).  When
// every class has at least two flows the per-class train counts follow the
// class proportions (largest remainder), so the split is stratified.
inline std::pair<FlowSet, FlowSet> split_train_test(const FlowSet& set, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1), got " + detail::format_double(train_fraction));
  if (set.empty()) throw ArgumentError("cannot split an empty flow set");

  const std::size_t n = set.size();
  const auto n_train = std::min(static_cast<std::size_t>(train_fraction * static_cast<double>(n)), n - 1);

  detail::Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(std::span(order));

  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (auto i : order) by_class[set.flows[i].label].push_back(i);
  const bool stratify = std::all_of(by_class.begin(), by_class.end(), [](const auto& kv) { return kv.second.size() >= 2; });

  std::vector<bool> in_train(n, false);
  if (stratify) {
    struct Quota {
      ClassId cls;
      std::size_t count;
      double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [cls, idx] : by_class) {
      const double exact = static_cast<double>(n_train) * static_cast<double>(idx.size()) / static_cast<double>(n);
      const auto base = static_cast<std::size_t>(exact);
      quotas.push_back({cls, base, exact - static_cast<double>(base)});
      assigned += base;
    }
    std::vector<std::size_t> by_remainder(quotas.size());
    for (std::size_t i = 0; i < quotas.size(); ++i) by_remainder[i] = i;
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < n_train; k = (k + 1) % quotas.size()) {
      auto& q = quotas[by_remainder[k]];
      if (q.count < by_class[q.cls].size()) {
        ++q.count;
        ++assigned;
      }
    }
    for (const auto& q : quotas) {
      const auto& idx = by_class[q.cls];
      for (std::size_t j = 0; j < q.count; ++j) in_train[idx[j]] = true;
    }
  } else {
    for (std::size_t j = 0; j < n_train; ++j) in_train[order[j]] = true;
  }

  FlowSet train, test;
  train.label_names = test.label_names = set.label_names;
  for (auto i : order) (in_train[i] ? train : test).flows.push_back(set.flows[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace acdc
