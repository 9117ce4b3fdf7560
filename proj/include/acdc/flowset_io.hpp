// flowset_io.hpp - JSON serialization of labelled flow sets.
//
// {"format": "acdc-flowset", "version": 1,
//  "label_names": {"0": "name", ...},
//  "flows": [{"label": 0, "key": [src_ip, dst_ip, src_port, dst_port, proto],
//             "packets": [{"ts": 1.5, "proto": "tcp", "ip": "<hex>",
//                          "l4": "<hex>", "payload_len": 0}, ...]}, ...]}

#pragma once

#include <filesystem>
#include <string>

#include "acdc/traffic.hpp"
#include "json.hpp"

namespace acdc {

inline constexpr int kFlowSetVersion = 1;

inline nlohmann::json flowset_to_json(const FlowSet& set) {
  nlohmann::json names = nlohmann::json::object();
  for (const auto& [id, name] : set.label_names) names[std::to_string(id)] = name;
  nlohmann::json flows = nlohmann::json::array();
  for (const auto& f : set.flows) {
    nlohmann::json pkts = nlohmann::json::array();
    for (const auto& p : f.packets) {
      pkts.push_back({{"ts", p.timestamp},
                      {"proto", to_string(p.transport_proto)},
                      {"ip", detail::to_hex(p.ip_header)},
                      {"l4", detail::to_hex(p.transport_header)},
                      {"payload_len", p.payload_len}});
    }
    flows.push_back({{"label", f.label},
                     {"key",
                      {f.key.src_ip, f.key.dst_ip, f.key.src_port, f.key.dst_port, static_cast<int>(f.key.proto)}},
                     {"packets", std::move(pkts)}});
  }
  return {{"format", "acdc-flowset"}, {"version", kFlowSetVersion}, {"label_names", names}, {"flows", flows}};
}

inline FlowSet flowset_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "acdc-flowset") throw FormatError("not an acdc-flowset document");
    if (j.at("version").get<int>() != kFlowSetVersion)
      throw FormatError("unsupported flowset version " + j.at("version").dump());
    FlowSet set;
    for (const auto& [id, name] : j.at("label_names").items())
      set.label_names[detail::parse_int<ClassId>(id, "label id")] = name.get<std::string>();
    for (const auto& jf : j.at("flows")) {
      FlowRecord f;
      f.label = jf.at("label").get<ClassId>();
      const auto& k = jf.at("key");
      f.key = FlowKey{k.at(0).get<std::uint32_t>(), k.at(1).get<std::uint32_t>(), k.at(2).get<std::uint16_t>(),
                      k.at(3).get<std::uint16_t>(), static_cast<TransportProto>(k.at(4).get<int>())};
      for (const auto& jp : jf.at("packets")) {
        PacketSnapshot p;
        p.timestamp = jp.at("ts").get<double>();
        const auto proto = jp.at("proto").get<std::string>();
        if (proto != "tcp" && proto != "udp") throw FormatError("unknown transport '" + proto + "'");
        p.transport_proto = proto == "tcp" ? TransportProto::tcp : TransportProto::udp;
        p.ip_header = detail::from_hex(jp.at("ip").get<std::string>());
        p.transport_header = detail::from_hex(jp.at("l4").get<std::string>());
        p.payload_len = jp.at("payload_len").get<std::uint32_t>();
        f.packets.push_back(std::move(p));
      }
      set.flows.push_back(std::move(f));
    }
    set.validate();
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed flowset: ") + e.what());
  }
}

inline void save_flowset(const std::filesystem::path& path, const FlowSet& set) {
  detail::write_file(path.string(), flowset_to_json(set).dump());
}

inline FlowSet load_flowset(const std::filesystem::path& path) {
  const auto text = detail::read_file(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return flowset_from_json(j);
}

}  // namespace acdc
