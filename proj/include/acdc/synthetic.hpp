// synthetic.hpp - labelled synthetic traffic generator.
//
// Each class describes the header-field distributions of one application's
// endpoints (initial TTL and hop count, DF usage, TOS marking, TCP window and
// option layout, FIN-terminated short flows, UDP share, IP options) together
// with payload-size, inter-arrival and RTT distributions.  Classes overlap on
// every individual field, so single fields are only partially informative.
//
// The JSON schema accepted by generator_config_from_json() is documented in
// docs/generator_config.md.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/error.hpp"
#include "acdc/traffic.hpp"
#include "json.hpp"

namespace acdc {

struct LogNormal {
  double mean_log = 0.0;
  double sd_log = 1.0;
};

struct ClassProfile {
  std::string name;
  std::size_t flows = 0;
  std::vector<int> ttl_bases{64};
  int ttl_hops_min = 0;
  int ttl_hops_max = 8;
  double df_prob = 0.9;
  std::vector<int> tos_values{0};
  double udp_prob = 0.0;
  int window_min = 8192;
  int window_max = 65535;
  // Option kind names: mss, sackok, ts, nop, wscale, eol.
  std::vector<std::vector<std::string>> option_templates{{"mss", "sackok", "ts", "nop", "wscale"}};
  std::vector<double> option_template_probs{1.0};
  int mss = 1460;
  int wscale = 7;
  double fin_prob = 0.05;
  double psh_prob = 0.8;
  double ip_options_prob = 0.0;
  double udp_zero_checksum_prob = 0.0;
  LogNormal payload_size{6.5, 1.0};
  LogNormal iat{-3.5, 1.3};
  LogNormal rtt{-3.0, 0.5};
};

struct GeneratorConfig {
  std::vector<ClassProfile> classes;
  std::size_t packets_per_flow = 8;
  double time_span = 60.0;  // flow start times are uniform in [0, time_span)

  void validate() const {
    if (classes.size() < 2)
      throw ConfigError("classes: need at least 2 classes, got " + std::to_string(classes.size()));
    if (packets_per_flow < 4) throw ConfigError("packets_per_flow: must be >= 4");
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto& k = classes[c];
      const auto where = "classes[" + std::to_string(c) + "].";
      if (k.flows == 0) throw ConfigError(where + "flows: must be >= 1");
      if (k.ttl_bases.empty()) throw ConfigError(where + "ttl_bases: empty");
      if (k.ttl_hops_min < 0 || k.ttl_hops_max < k.ttl_hops_min) throw ConfigError(where + "ttl_hops: bad range");
      if (k.tos_values.empty()) throw ConfigError(where + "tos_values: empty");
      if (k.window_min < 0 || k.window_max > 65535 || k.window_max < k.window_min)
        throw ConfigError(where + "window: bad range");
      if (k.option_templates.empty() || k.option_templates.size() != k.option_template_probs.size())
        throw ConfigError(where + "option_templates: need one probability per template");
    }
  }
};

// Built-in class profiles used by `acdc generate --classes N --flows M`.
inline GeneratorConfig default_generator_config(std::size_t num_classes, std::size_t flows_per_class) {
  static const std::vector<std::vector<std::string>> kTemplates = {
      {"mss", "sackok", "ts", "nop", "wscale"},
      {"mss", "nop", "wscale", "nop", "nop", "sackok"},
      {"mss", "nop", "nop", "sackok"},
      {"mss", "nop", "wscale", "nop", "nop", "ts", "sackok", "eol"},
  };
  static const std::vector<std::vector<int>> kTos = {{0, 0x28}, {0}, {0xb8, 0}, {0}, {0x20, 0}};
  GeneratorConfig cfg;
  for (std::size_t i = 0; i < num_classes; ++i) {
    const int c = static_cast<int>(i);
    ClassProfile k;
    k.name = "app" + std::to_string(c);
    k.flows = flows_per_class;
    k.ttl_bases = {std::vector<int>{64, 128, 255}[c % 3]};
    k.ttl_hops_min = (c / 3) % 4 * 2;
    k.ttl_hops_max = k.ttl_hops_min + 5;
    k.df_prob = c % 2 == 0 ? 0.92 : 0.35;
    k.tos_values = kTos[c % 5];
    k.udp_prob = c % 4 == 3 ? 0.6 : 0.05;
    k.window_min = 8192 + 4096 * (c % 6);
    k.window_max = k.window_min + 12000;
    const auto primary = static_cast<std::size_t>(c % 4);
    k.option_templates = {kTemplates[primary], kTemplates[(primary + 1) % 4]};
    k.option_template_probs = {0.8, 0.2};
    k.mss = 1460 - 40 * (c % 3);
    k.wscale = 6 + c % 4;
    k.fin_prob = 0.05 + 0.08 * (c % 5);
    k.psh_prob = c % 3 == 1 ? 0.3 : 0.85;
    k.ip_options_prob = c % 7 == 6 ? 0.3 : 0.0;
    k.udp_zero_checksum_prob = c % 2 == 0 ? 0.7 : 0.1;
    k.payload_size = {6.2 + 0.12 * (c % 7), 1.0};
    k.iat = {-3.5 + 0.2 * (c % 5), 1.3};
    k.rtt = {-3.0 + 0.15 * (c % 6), 0.5};
    cfg.classes.push_back(std::move(k));
  }
  return cfg;
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  try {
    GeneratorConfig cfg;
    cfg.packets_per_flow = j.value("packets_per_flow", cfg.packets_per_flow);
    cfg.time_span = j.value("time_span", cfg.time_span);
    if (!j.contains("classes") || !j.at("classes").is_array()) throw ConfigError("classes: missing or not an array");
    for (const auto& jc : j.at("classes")) {
      ClassProfile k;
      k.name = jc.value("name", "class" + std::to_string(cfg.classes.size()));
      k.flows = jc.value("flows", std::size_t{0});
      k.ttl_bases = jc.value("ttl_bases", k.ttl_bases);
      if (jc.contains("ttl_hops")) {
        k.ttl_hops_min = jc.at("ttl_hops").at(0).get<int>();
        k.ttl_hops_max = jc.at("ttl_hops").at(1).get<int>();
      }
      k.df_prob = jc.value("df_prob", k.df_prob);
      k.tos_values = jc.value("tos_values", k.tos_values);
      k.udp_prob = jc.value("udp_prob", k.udp_prob);
      if (jc.contains("window")) {
        k.window_min = jc.at("window").at(0).get<int>();
        k.window_max = jc.at("window").at(1).get<int>();
      }
      k.option_templates = jc.value("option_templates", k.option_templates);
      k.option_template_probs =
          jc.value("option_template_probs", std::vector<double>(k.option_templates.size(), 1.0 / k.option_templates.size()));
      k.mss = jc.value("mss", k.mss);
      k.wscale = jc.value("wscale", k.wscale);
      k.fin_prob = jc.value("fin_prob", k.fin_prob);
      k.psh_prob = jc.value("psh_prob", k.psh_prob);
      k.ip_options_prob = jc.value("ip_options_prob", k.ip_options_prob);
      k.udp_zero_checksum_prob = jc.value("udp_zero_checksum_prob", k.udp_zero_checksum_prob);
      auto lognormal = [&](const char* key, LogNormal def) {
        if (!jc.contains(key)) return def;
        return LogNormal{jc.at(key).at("mean_log").get<double>(), jc.at(key).at("sd_log").get<double>()};
      };
      k.payload_size = lognormal("payload_size", k.payload_size);
      k.iat = lognormal("iat", k.iat);
      k.rtt = lognormal("rtt", k.rtt);
      cfg.classes.push_back(std::move(k));
    }
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

namespace detail {

inline std::vector<std::uint8_t> build_tcp_options(const std::vector<std::string>& kinds, const ClassProfile& k,
                                                   Rng& rng) {
  std::vector<std::uint8_t> out;
  for (const auto& kind : kinds) {
    if (kind == "mss") {
      out.insert(out.end(), {2, 4, static_cast<std::uint8_t>(k.mss >> 8), static_cast<std::uint8_t>(k.mss)});
    } else if (kind == "sackok") {
      out.insert(out.end(), {4, 2});
    } else if (kind == "ts") {
      const auto tsval = static_cast<std::uint32_t>(rng.next());
      out.insert(out.end(), {8, 10});
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(tsval >> (24 - 8 * i)));
      out.insert(out.end(), {0, 0, 0, 0});
    } else if (kind == "nop") {
      out.push_back(1);
    } else if (kind == "wscale") {
      out.insert(out.end(), {3, 3, static_cast<std::uint8_t>(k.wscale)});
    } else if (kind == "eol") {
      out.push_back(0);
    } else {
      throw ConfigError("option_templates: unknown TCP option '" + kind + "'");
    }
  }
  if (out.size() > 40) throw ConfigError("option_templates: options exceed 40 bytes");
  return out;
}

// Ones-complement checksum over an IPv4 pseudo header plus the transport
// header; payload bytes are taken as zeros.
inline std::uint16_t transport_checksum(std::uint32_t src, std::uint32_t dst, TransportProto proto,
                                        const std::vector<std::uint8_t>& l4, std::size_t payload_len,
                                        std::size_t checksum_offset) {
  std::uint32_t sum = (src >> 16) + (src & 0xffff) + (dst >> 16) + (dst & 0xffff) + static_cast<std::uint32_t>(proto) +
                      static_cast<std::uint32_t>(l4.size() + payload_len);
  for (std::size_t i = 0; i + 1 < l4.size(); i += 2)
    if (i != checksum_offset) sum += net::load16(l4, i);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  auto c = static_cast<std::uint16_t>(~sum);
  return c == 0 ? 0xffff : c;
}

inline double sample_lognormal(Rng& rng, LogNormal d) { return std::exp(rng.normal(d.mean_log, d.sd_log)); }

inline FlowRecord generate_flow(const ClassProfile& k, ClassId label, std::size_t packets_per_flow, double time_span,
                                Rng& rng) {
  static constexpr std::uint16_t kServerPorts[] = {443, 80, 8443, 3478, 5222, 1935};
  const bool udp = rng.bernoulli(k.udp_prob);
  const auto proto = udp ? TransportProto::udp : TransportProto::tcp;
  const std::uint32_t client_ip = 0x0a000000u | static_cast<std::uint32_t>(rng.index(1u << 24));
  const std::uint32_t server_ip =
      0xac100000u | static_cast<std::uint32_t>(label & 0xff) << 8 | static_cast<std::uint32_t>(rng.index(256));
  const auto client_port = static_cast<std::uint16_t>(rng.between(1024, 65535));
  const auto server_port = kServerPorts[rng.index(std::size(kServerPorts))];

  // Endpoint stack properties are fixed per flow.
  auto pick_ttl = [&] {
    const int base = k.ttl_bases[rng.index(k.ttl_bases.size())];
    return static_cast<std::uint8_t>(std::max(1, base - static_cast<int>(rng.between(k.ttl_hops_min, k.ttl_hops_max))));
  };
  const std::uint8_t client_ttl = pick_ttl();
  const std::uint8_t server_ttl = pick_ttl();
  const bool df = rng.bernoulli(k.df_prob);
  const auto tos = static_cast<std::uint8_t>(k.tos_values[rng.index(k.tos_values.size())]);
  const auto client_window = static_cast<std::uint16_t>(rng.between(k.window_min, k.window_max));
  const auto server_window = static_cast<std::uint16_t>(rng.between(k.window_min, k.window_max));
  std::size_t tmpl = k.option_templates.size() - 1;
  {
    double u = rng.uniform(), acc = 0.0;
    for (std::size_t i = 0; i < k.option_template_probs.size(); ++i) {
      acc += k.option_template_probs[i];
      if (u < acc) {
        tmpl = i;
        break;
      }
    }
  }
  const bool ip_opts = rng.bernoulli(k.ip_options_prob);
  const bool short_flow = rng.bernoulli(k.fin_prob);
  const bool zero_udp_checksum = rng.bernoulli(k.udp_zero_checksum_prob);
  std::uint16_t ip_id = static_cast<std::uint16_t>(rng.index(65536));
  std::uint32_t client_seq = static_cast<std::uint32_t>(rng.next());
  std::uint32_t server_seq = static_cast<std::uint32_t>(rng.next());

  FlowRecord flow;
  flow.label = label;
  flow.key = FlowKey{client_ip, server_ip, client_port, server_port, proto}.canonical();

  double t = rng.uniform(0.0, time_span);
  const double rtt = std::min(1.0, sample_lognormal(rng, k.rtt));

  auto emit = [&](bool from_client, std::vector<std::uint8_t> l4, std::uint32_t payload) {
    net::Ipv4Fields ip;
    ip.tos = tos;
    ip.id = ip_id++;
    ip.dont_fragment = df;
    ip.ttl = from_client ? client_ttl : server_ttl;
    ip.proto = proto;
    ip.src = from_client ? client_ip : server_ip;
    ip.dst = from_client ? server_ip : client_ip;
    if (ip_opts) ip.options = {0x94, 0x04, 0x00, 0x00};  // router alert
    const std::size_t csum_off = proto == TransportProto::tcp ? 16 : 6;
    if (proto == TransportProto::udp && zero_udp_checksum) {
      net::store16(l4, 6, 0);
    } else {
      net::store16(l4, csum_off, transport_checksum(ip.src, ip.dst, proto, l4, payload, csum_off));
    }
    PacketSnapshot p;
    p.timestamp = t;
    p.ip_header = net::make_ipv4_header(ip, l4.size() + payload);
    p.transport_header = std::move(l4);
    p.transport_proto = proto;
    p.payload_len = payload;
    flow.packets.push_back(std::move(p));
  };
  auto payload_size = [&] {
    return static_cast<std::uint32_t>(std::clamp(sample_lognormal(rng, k.payload_size), 1.0, 1460.0));
  };

  if (udp) {
    for (std::size_t i = 0; i < packets_per_flow; ++i) {
      const bool from_client = i % 2 == 0;
      const auto payload = payload_size();
      emit(from_client,
           net::make_udp_header(from_client ? client_port : server_port, from_client ? server_port : client_port,
                                payload, 0),
           payload);
      t += sample_lognormal(rng, k.iat);
    }
    return flow;
  }

  using namespace net::tcp_flag;
  const auto& kinds = k.option_templates[tmpl];
  const bool has_ts = std::find(kinds.begin(), kinds.end(), "ts") != kinds.end();
  auto tcp = [&](bool from_client, std::uint16_t flags, std::vector<std::uint8_t> options) {
    net::TcpFields f;
    f.sport = from_client ? client_port : server_port;
    f.dport = from_client ? server_port : client_port;
    f.seq = from_client ? client_seq : server_seq;
    f.ack = (flags & ack) ? (from_client ? server_seq : client_seq) : 0;
    f.flags = flags;
    f.window = from_client ? client_window : server_window;
    f.options = std::move(options);
    return net::make_tcp_header(f);
  };
  auto ts_only = [&] { return has_ts ? build_tcp_options({"nop", "nop", "ts"}, k, rng) : std::vector<std::uint8_t>{}; };

  emit(true, tcp(true, syn, build_tcp_options(kinds, k, rng)), 0);
  ++client_seq;
  t += rtt;
  emit(false, tcp(false, syn | ack, build_tcp_options(kinds, k, rng)), 0);
  ++server_seq;
  t += rtt * 0.1;
  emit(true, tcp(true, short_flow ? (fin | ack) : ack, ts_only()), 0);
  for (std::size_t i = 3; i < packets_per_flow; ++i) {
    t += sample_lognormal(rng, k.iat);
    const bool from_client = i == 3 || i % 4 == 0;
    const bool pure_ack = from_client && i != 3;
    const std::uint32_t payload = pure_ack ? 0 : payload_size();
    const std::uint16_t flags = ack | (payload > 0 && rng.bernoulli(k.psh_prob) ? psh : 0);
    emit(from_client, tcp(from_client, flags, ts_only()), payload);
    (from_client ? client_seq : server_seq) += payload;
  }
  return flow;
}

}  // namespace detail

// Deterministic in (config, seed).  Flows are emitted class by class.
inline FlowSet generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  FlowSet set;
  std::uint64_t stream = 0;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const auto& k = config.classes[c];
    const auto label = static_cast<ClassId>(c);
    set.label_names[label] = k.name;
    for (std::size_t i = 0; i < k.flows; ++i) {
      detail::Rng rng(detail::mix_seed(seed, stream++));
      set.flows.push_back(detail::generate_flow(k, label, config.packets_per_flow, config.time_span, rng));
    }
  }
  return set;
}

}  // namespace acdc
