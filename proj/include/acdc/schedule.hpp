// schedule.hpp - adaptive selection of a (classifier, batch size) combination.
//
// Given the current traffic rate and memory budget the scheduler keeps the
// combinations meeting the minimum performance requirement (MPR), drops those
// whose concurrent memory demand exceeds the budget and returns the one with
// the highest F1/TTD ratio.  If no combination meets the MPR the candidates
// become the combinations with the highest F1.  If nothing fits in memory the
// candidate with the smallest total memory is returned flagged as overcommit.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "acdc/detail/text.hpp"
#include "acdc/error.hpp"
#include "acdc/profile.hpp"

namespace acdc {

struct SchedulerInput {
  double rate = 0.0;  // flows per second
  Bytes mem_available = 0;
  std::optional<double> mpr;
  std::span<const ProfileEntry> profiles;
};

struct SchedulerDecision {
  int classifier_id = 0;
  std::uint64_t batch_size = 0;
  std::uint64_t instances = 0;
  Bytes total_mem = 0;
  double expected_f1 = 0.0;
  double ttd = 0.0;
  Bytes unit_mem = 0;
  double ratio = 0.0;
  bool overcommit = false;
  std::size_t entry_index = 0;  // position in SchedulerInput::profiles

  bool operator==(const SchedulerDecision&) const = default;
};

inline Bytes required_memory(const ProfileEntry& e, double rate) {
  return total_memory(concurrent_instances(e.batch_size, rate, e.ttd), e.unit_mem);
}

inline bool feasible(const ProfileEntry& e, double rate, Bytes mem_available) {
  return required_memory(e, rate) <= mem_available;
}

inline SchedulerDecision make_decision(std::span<const ProfileEntry> profiles, std::size_t index, double rate,
                                       bool overcommit) {
  const auto& e = profiles[index];
  SchedulerDecision d;
  d.classifier_id = e.classifier_id;
  d.batch_size = e.batch_size;
  d.instances = concurrent_instances(e.batch_size, rate, e.ttd);
  d.total_mem = total_memory(d.instances, e.unit_mem);
  d.expected_f1 = e.f1;
  d.ttd = e.ttd;
  d.unit_mem = e.unit_mem;
  d.ratio = e.f1 / e.ttd;
  d.overcommit = overcommit;
  d.entry_index = index;
  return d;
}

inline SchedulerDecision select(const SchedulerInput& in) {
  if (in.profiles.empty()) throw ArgumentError("select: empty profile table");
  if (!(in.rate > 0.0)) throw ArgumentError("select: rate must be > 0");
  const auto& p = in.profiles;

  // MPR filter with max-F1 fallback.
  std::vector<std::size_t> candidates;
  if (in.mpr) {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i].f1 >= *in.mpr) candidates.push_back(i);
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) candidates.push_back(i);
  }
  if (candidates.empty()) {
    double best_f1 = p[0].f1;
    for (const auto& e : p) best_f1 = std::max(best_f1, e.f1);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i].f1 == best_f1) candidates.push_back(i);
  }

  std::vector<Bytes> mem(p.size(), 0);
  for (auto i : candidates) mem[i] = required_memory(p[i], in.rate);

  std::optional<std::size_t> best;
  auto better = [&](std::size_t a, std::size_t b) {  // is a preferred over b
    const double ra = p[a].f1 / p[a].ttd, rb = p[b].f1 / p[b].ttd;
    if (ra != rb) return ra > rb;
    return std::tie(mem[a], p[a].batch_size, p[a].classifier_id) < std::tie(mem[b], p[b].batch_size, p[b].classifier_id);
  };
  for (auto i : candidates)
    if (mem[i] <= in.mem_available && (!best || better(i, *best))) best = i;
  if (best) return make_decision(p, *best, in.rate, false);

  // Nothing fits: smallest total memory among the candidates.
  std::size_t pick = candidates.front();
  for (auto i : candidates)
    if (std::tie(mem[i], p[i].batch_size, p[i].classifier_id) <
        std::tie(mem[pick], p[pick].batch_size, p[pick].classifier_id))
      pick = i;
  return make_decision(p, pick, in.rate, true);
}

// Decision log CSV: tick,rate,mem_available,classifier_id,batch_size,instances,total_mem,f1,ratio,overcommit
inline std::string decision_log_header() {
  return "tick,rate,mem_available,classifier_id,batch_size,instances,total_mem,f1,ratio,overcommit\n";
}

inline std::string decision_log_row(std::int64_t tick, double rate, Bytes mem_available, const SchedulerDecision& d) {
  std::ostringstream out;
  out << tick << ',' << detail::format_double(rate) << ',' << mem_available << ',' << d.classifier_id << ','
      << d.batch_size << ',' << d.instances << ',' << d.total_mem << ',' << detail::format_double(d.expected_f1) << ','
      << detail::format_double(d.ratio) << ',' << (d.overcommit ? 1 : 0) << '\n';
  return out.str();
}

}  // namespace acdc
