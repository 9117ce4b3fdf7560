// simulate.hpp - deterministic replay of a traffic/memory scenario against
// a profile table.
//
// Time advances in 1-second ticks.  The flows of tick t arrive evenly spaced
// over [t, t+1).  The scheduler is consulted once per tick with that tick's
// rate and memory budget.  A batch is dispatched as soon as the backlog holds
// B flows and the memory of running instances plus one more fits the budget;
// it occupies its unit memory for exactly ttd seconds (plus switch_cost when
// the classifier differs from the previous dispatch).  Backlog is unbounded.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/detail/text.hpp"
#include "acdc/error.hpp"
#include "acdc/explore.hpp"
#include "acdc/profile.hpp"
#include "acdc/schedule.hpp"
#include "json.hpp"

namespace acdc {

struct Scenario {
  std::size_t duration = 0;    // ticks
  std::vector<double> rate;    // flows/second, one per tick
  std::vector<Bytes> memory;   // budget, one per tick
  std::optional<double> mpr;
  double switch_cost = 0.0;    // seconds
  double arrival_jitter = 0.0; // relative, uniform in [-j, j] per tick, drawn from the run seed

  void validate() const {
    if (duration < 1) throw ConfigError("scenario: duration must be >= 1 tick");
    if (rate.size() != duration) throw ConfigError("scenario: rate schedule must cover every tick");
    if (memory.size() != duration) throw ConfigError("scenario: memory schedule must cover every tick");
    for (std::size_t t = 0; t < duration; ++t)
      if (!(rate[t] > 0.0)) throw ConfigError("scenario: rate at tick " + std::to_string(t) + " must be > 0");
    if (switch_cost < 0.0) throw ConfigError("scenario: switch_cost must be >= 0");
    if (arrival_jitter < 0.0 || arrival_jitter >= 1.0) throw ConfigError("scenario: arrival_jitter must be in [0, 1)");
  }

  static Scenario constant(std::size_t duration, double rate, Bytes memory, std::optional<double> mpr = {}) {
    Scenario s;
    s.duration = duration;
    s.rate.assign(duration, rate);
    s.memory.assign(duration, memory);
    s.mpr = mpr;
    return s;
  }
};

// Accepts a plain byte count or a string with a decimal unit: "1.5GB", "300MB".
inline Bytes parse_bytes(const nlohmann::json& j) {
  if (j.is_number()) {
    const double v = j.get<double>();
    if (v < 0) throw ConfigError("memory: negative byte count");
    return static_cast<Bytes>(std::llround(v));
  }
  if (!j.is_string()) throw ConfigError("memory: expected a number or a string like \"2GB\"");
  auto s = j.get<std::string>();
  double scale = 1.0;
  auto ends_with = [&](std::string_view suf) {
    return s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends_with("GB")) scale = kGigabyte;
  else if (ends_with("MB")) scale = kMegabyte;
  else if (ends_with("KB")) scale = 1e3;
  if (scale != 1.0) s.resize(s.size() - 2);
  else if (ends_with("B")) s.resize(s.size() - 1);
  try {
    return static_cast<Bytes>(std::llround(detail::parse_double(s, "memory") * scale));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

namespace detail {

// A schedule is a scalar (constant), an array with one value per tick, or an
// array of {"tick": t, "value": v} steps holding from t onward.
template <typename T, typename Parse>
std::vector<T> parse_schedule(const nlohmann::json& j, std::size_t duration, const char* name, Parse parse) {
  std::vector<T> out(duration);
  if (!j.is_array()) {
    std::fill(out.begin(), out.end(), parse(j));
    return out;
  }
  if (!j.empty() && j.front().is_object()) {
    std::map<std::size_t, T> steps;
    for (const auto& s : j) steps[s.at("tick").get<std::size_t>()] = parse(s.at("value"));
    if (!steps.contains(0)) throw ConfigError(std::string("scenario: ") + name + " schedule must start at tick 0");
    for (std::size_t t = 0; t < duration; ++t) out[t] = std::prev(steps.upper_bound(t))->second;
    return out;
  }
  if (j.size() != duration)
    throw ConfigError(std::string("scenario: ") + name + " array has " + std::to_string(j.size()) + " entries for " +
                      std::to_string(duration) + " ticks");
  for (std::size_t t = 0; t < duration; ++t) out[t] = parse(j[t]);
  return out;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  try {
    Scenario s;
    s.duration = j.at("duration").get<std::size_t>();
    s.rate = detail::parse_schedule<double>(j.at("rate"), s.duration, "rate",
                                            [](const nlohmann::json& v) { return v.get<double>(); });
    s.memory = detail::parse_schedule<Bytes>(j.at("memory"), s.duration, "memory", parse_bytes);
    if (j.contains("mpr") && !j.at("mpr").is_null()) s.mpr = j.at("mpr").get<double>();
    s.switch_cost = j.value("switch_cost", 0.0);
    s.arrival_jitter = j.value("arrival_jitter", 0.0);
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return scenario_from_json(nlohmann::json::parse(detail::read_file(path.string())));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("scenario '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

struct TickRecord {
  std::int64_t tick = 0;
  double rate = 0.0;
  Bytes mem_budget = 0;
  std::uint64_t arrivals = 0;
  std::uint64_t dispatched_batches = 0;
  std::uint64_t completed_flows = 0;
  std::uint64_t backlog = 0;               // queued, not yet dispatched (end of tick)
  std::uint64_t in_flight = 0;             // flows inside running instances (end of tick)
  std::uint64_t concurrent_instances = 0;  // peak during the tick
  Bytes mem_in_use = 0;                    // peak during the tick
  SchedulerDecision decision;

  bool operator==(const TickRecord&) const = default;
};

struct SimulationTrace {
  std::vector<TickRecord> ticks;

  std::uint64_t total_arrivals() const {
    std::uint64_t s = 0;
    for (const auto& t : ticks) s += t.arrivals;
    return s;
  }
  std::uint64_t total_completed() const {
    std::uint64_t s = 0;
    for (const auto& t : ticks) s += t.completed_flows;
    return s;
  }

  bool operator==(const SimulationTrace&) const = default;
};

// Checks that every profile entry belongs to a manifest member and that each
// member is profiled at every batch size offered to the scheduler.
inline void check_profile_coverage(std::span<const ManifestRow> manifest, std::span<const ProfileEntry> profiles) {
  if (profiles.empty()) throw ConfigError("profile table is empty");
  if (manifest.empty()) return;
  std::set<int> members;
  for (const auto& m : manifest) members.insert(m.member_id);
  std::set<std::uint64_t> offered;
  std::map<int, std::set<std::uint64_t>> covered;
  for (const auto& e : profiles) {
    if (!members.contains(e.classifier_id))
      throw ConfigError("profile references classifier " + std::to_string(e.classifier_id) +
                        " which is not in the pool manifest");
    offered.insert(e.batch_size);
    covered[e.classifier_id].insert(e.batch_size);
  }
  for (int id : members)
    if (covered[id] != offered)
      throw ConfigError("profile table does not cover pool member " + std::to_string(id) +
                        " at every offered batch size");
}

inline SimulationTrace run(std::span<const ManifestRow> manifest, std::span<const ProfileEntry> profiles,
                           const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();
  check_profile_coverage(manifest, profiles);

  struct Instance {
    double end;
    std::uint64_t flows;
    Bytes mem;
    std::uint64_t seq;
    bool operator>(const Instance& o) const { return end != o.end ? end > o.end : seq > o.seq; }
  };
  std::priority_queue<Instance, std::vector<Instance>, std::greater<>> running;
  std::uint64_t seq = 0;
  std::uint64_t backlog = 0, in_flight = 0;
  Bytes mem_used = 0;
  std::optional<int> last_classifier;
  detail::Rng rng(seed);
  double cumulative = 0.0;

  SimulationTrace trace;
  for (std::size_t t = 0; t < scenario.duration; ++t) {
    TickRecord rec;
    rec.tick = static_cast<std::int64_t>(t);
    rec.rate = scenario.rate[t];
    rec.mem_budget = scenario.memory[t];
    double r = scenario.rate[t];
    if (scenario.arrival_jitter > 0.0) r *= 1.0 + rng.uniform(-scenario.arrival_jitter, scenario.arrival_jitter);
    const double before = std::floor(cumulative);
    cumulative += r;
    rec.arrivals = static_cast<std::uint64_t>(std::floor(cumulative) - before);

    rec.decision = select({scenario.rate[t], scenario.memory[t], scenario.mpr, profiles});
    const auto& entry = profiles[rec.decision.entry_index];

    const double tick_start = static_cast<double>(t), tick_end = tick_start + 1.0;
    std::uint64_t next_arrival = 0;
    double now = tick_start;
    rec.concurrent_instances = running.size();
    rec.mem_in_use = mem_used;
    for (;;) {
      while (backlog >= entry.batch_size && mem_used + entry.unit_mem <= scenario.memory[t]) {
        double duration = entry.ttd;
        if (last_classifier && *last_classifier != entry.classifier_id) duration += scenario.switch_cost;
        last_classifier = entry.classifier_id;
        running.push({now + duration, entry.batch_size, entry.unit_mem, seq++});
        backlog -= entry.batch_size;
        in_flight += entry.batch_size;
        mem_used += entry.unit_mem;
        ++rec.dispatched_batches;
        rec.concurrent_instances = std::max<std::uint64_t>(rec.concurrent_instances, running.size());
        rec.mem_in_use = std::max(rec.mem_in_use, mem_used);
      }
      const double arrival_time =
          next_arrival < rec.arrivals
              ? tick_start + static_cast<double>(next_arrival) / static_cast<double>(rec.arrivals)
              : std::numeric_limits<double>::infinity();
      const double completion_time = running.empty() ? std::numeric_limits<double>::infinity() : running.top().end;
      if (std::min(arrival_time, completion_time) >= tick_end) break;
      if (completion_time <= arrival_time) {
        const auto done = running.top();
        running.pop();
        in_flight -= done.flows;
        mem_used -= done.mem;
        rec.completed_flows += done.flows;
        now = completion_time;
      } else {
        ++backlog;
        ++next_arrival;
        now = arrival_time;
      }
    }
    rec.backlog = backlog;
    rec.in_flight = in_flight;
    trace.ticks.push_back(rec);
  }
  return trace;
}

// Completed flows per second over consecutive windows; a trailing partial
// window is averaged over its own length.
inline std::vector<double> throughput_report(const SimulationTrace& trace, std::size_t window) {
  if (window < 1) throw ArgumentError("throughput_report: window must be >= 1");
  if (window > trace.ticks.size())
    throw ArgumentError("throughput_report: window " + std::to_string(window) + " exceeds trace duration " +
                        std::to_string(trace.ticks.size()));
  std::vector<double> out;
  for (std::size_t start = 0; start < trace.ticks.size(); start += window) {
    const std::size_t end = std::min(trace.ticks.size(), start + window);
    std::uint64_t done = 0;
    for (std::size_t i = start; i < end; ++i) done += trace.ticks[i].completed_flows;
    out.push_back(static_cast<double>(done) / static_cast<double>(end - start));
  }
  return out;
}

inline double median_batch_size(const SimulationTrace& trace) {
  if (trace.ticks.empty()) throw ArgumentError("median_batch_size: empty trace");
  std::vector<double> b;
  for (const auto& t : trace.ticks) b.push_back(static_cast<double>(t.decision.batch_size));
  std::sort(b.begin(), b.end());
  const auto n = b.size();
  return n % 2 == 1 ? b[n / 2] : 0.5 * (b[n / 2 - 1] + b[n / 2]);
}

enum class TrendDirection { increasing, decreasing };

struct TrendVerdict {
  std::vector<double> medians;  // per sweep point, in sweep order
  std::size_t violations = 0;   // adjacent pairs moving against the expected direction
  bool monotone() const { return violations == 0; }
};

// Checks that the median selected batch size moves weakly in the expected
// direction across the swept traces.
inline TrendVerdict trend_check(std::span<const SimulationTrace> traces, TrendDirection direction) {
  if (traces.size() < 3) throw ArgumentError("trend_check: need at least 3 sweep points");
  TrendVerdict v;
  for (const auto& t : traces) v.medians.push_back(median_batch_size(t));
  for (std::size_t i = 1; i < v.medians.size(); ++i) {
    const bool bad = direction == TrendDirection::increasing ? v.medians[i] < v.medians[i - 1]
                                                             : v.medians[i] > v.medians[i - 1];
    if (bad) ++v.violations;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Trace CSV (schema line, then header, one row per tick).

inline constexpr const char* kTraceSchema = "# acdc-trace v1";

inline std::string trace_csv(const SimulationTrace& trace) {
  std::ostringstream out;
  out << kTraceSchema << '\n'
      << "tick,rate,mem_budget,arrivals,dispatched_batches,completed_flows,backlog,in_flight,"
         "concurrent_instances,mem_in_use,classifier_id,batch_size,overcommit\n";
  for (const auto& t : trace.ticks)
    out << t.tick << ',' << detail::format_double(t.rate) << ',' << t.mem_budget << ',' << t.arrivals << ','
        << t.dispatched_batches << ',' << t.completed_flows << ',' << t.backlog << ',' << t.in_flight << ','
        << t.concurrent_instances << ',' << t.mem_in_use << ',' << t.decision.classifier_id << ','
        << t.decision.batch_size << ',' << (t.decision.overcommit ? 1 : 0) << '\n';
  return out.str();
}

inline SimulationTrace parse_trace_csv(std::string_view text) {
  if (text.substr(0, std::string_view(kTraceSchema).size()) != kTraceSchema)
    throw FormatError("trace: missing '" + std::string(kTraceSchema) + "' schema line");
  const auto table = detail::parse_csv(text);
  SimulationTrace trace;
  auto u64 = [](const std::string& s, const char* what) { return detail::parse_int<std::uint64_t>(s, what); };
  const auto c = [&](const char* n) { return table.column(n); };
  const auto c_tick = c("tick"), c_rate = c("rate"), c_budget = c("mem_budget"), c_arr = c("arrivals"),
             c_disp = c("dispatched_batches"), c_done = c("completed_flows"), c_backlog = c("backlog"),
             c_flight = c("in_flight"), c_conc = c("concurrent_instances"), c_mem = c("mem_in_use"),
             c_id = c("classifier_id"), c_b = c("batch_size"), c_over = c("overcommit");
  for (const auto& r : table.rows) {
    TickRecord t;
    t.tick = detail::parse_int<std::int64_t>(r[c_tick], "tick");
    t.rate = detail::parse_double(r[c_rate], "rate");
    t.mem_budget = u64(r[c_budget], "mem_budget");
    t.arrivals = u64(r[c_arr], "arrivals");
    t.dispatched_batches = u64(r[c_disp], "dispatched_batches");
    t.completed_flows = u64(r[c_done], "completed_flows");
    t.backlog = u64(r[c_backlog], "backlog");
    t.in_flight = u64(r[c_flight], "in_flight");
    t.concurrent_instances = u64(r[c_conc], "concurrent_instances");
    t.mem_in_use = u64(r[c_mem], "mem_in_use");
    t.decision.classifier_id = detail::parse_int<int>(r[c_id], "classifier_id");
    t.decision.batch_size = u64(r[c_b], "batch_size");
    t.decision.overcommit = u64(r[c_over], "overcommit") != 0;
    trace.ticks.push_back(t);
  }
  return trace;
}

}  // namespace acdc
