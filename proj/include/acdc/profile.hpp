// profile.hpp - time-to-decision (TTD) and memory profiles per classifier
// and batch size, plus the concurrency/memory arithmetic the scheduler uses.
//
// TTD covers staging the batch's raw headers, encoding them, writing and
// reloading the encoded features as intermediate text, and prediction.  MEASURED entries time that pipeline on this machine; MODELED
// entries come from an affine cost model in (subset bits x batch size).

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory_resource>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "acdc/detail/text.hpp"
#include "acdc/encode.hpp"
#include "acdc/error.hpp"
#include "acdc/models/ensemble.hpp"
#include "acdc/models/metrics.hpp"
#include "json.hpp"

namespace acdc {

using Bytes = std::uint64_t;

inline constexpr double kMegabyte = 1e6;
inline constexpr double kGigabyte = 1e9;

enum class ProfileMode : std::uint8_t { measured, modeled };

inline const char* to_string(ProfileMode m) { return m == ProfileMode::measured ? "MEASURED" : "MODELED"; }

struct ProfileEntry {
  int classifier_id = 0;
  std::string subset;  // qualified field names joined by '&'
  std::uint64_t batch_size = 1;
  double f1 = 0.0;
  double ttd = 0.0;  // seconds
  Bytes unit_mem = 0;
  ProfileMode mode = ProfileMode::modeled;

  bool operator==(const ProfileEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Concurrency and memory.

// Instances running at once when a batch of B flows fills every B/R seconds
// and each instance runs for ttd seconds: ceil(ttd * R / B).
inline std::uint64_t concurrent_instances(std::uint64_t batch_size, double rate, double ttd) {
  if (batch_size < 1) throw ArgumentError("concurrent_instances: batch size must be >= 1");
  if (!(rate > 0.0)) throw ArgumentError("concurrent_instances: rate must be > 0");
  if (!(ttd > 0.0)) throw ArgumentError("concurrent_instances: ttd must be > 0");
  const double n = std::ceil(ttd * rate / static_cast<double>(batch_size));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(n));
}

// The same ratio without the ceiling.
inline double concurrent_load(std::uint64_t batch_size, double rate, double ttd) {
  return ttd * rate / static_cast<double>(batch_size);
}

inline Bytes total_memory(std::uint64_t instances, Bytes unit_mem) {
  if (instances < 1) throw ArgumentError("total_memory: instance count must be >= 1");
  if (unit_mem == 0) throw ArgumentError("total_memory: unit memory must be > 0");
  if (unit_mem > UINT64_MAX / instances) return UINT64_MAX;
  return instances * unit_mem;
}

// Flows classified per second when each second's arrivals take ttd seconds.
inline double throughput(double rate, double ttd) {
  if (!(rate > 0.0) || !(ttd > 0.0)) throw ArgumentError("throughput: rate and ttd must be > 0");
  return rate / ttd;
}

// Throughput as reported: never more than the arrival rate.
inline double handled_throughput(double rate, double ttd) { return std::min(rate, throughput(rate, ttd)); }

// ---------------------------------------------------------------------------
// Cost model.

struct CostSample {
  double bit_flows = 0.0;  // subset_bits x batch size
  double ttd = 0.0;
  double mem = 0.0;
};

struct CostModel {
  double ttd_intercept = 0.0;
  double ttd_per_bitflow = 0.0;
  double mem_intercept = 0.0;
  double mem_per_bitflow = 0.0;
  double pearson_ttd = 0.0;
  double pearson_mem = 0.0;

  double ttd(double bit_flows) const { return std::max(1e-9, ttd_intercept + ttd_per_bitflow * bit_flows); }
  Bytes mem(double bit_flows) const {
    return static_cast<Bytes>(std::max(1.0, std::round(mem_intercept + mem_per_bitflow * bit_flows)));
  }

  bool operator==(const CostModel&) const = default;
};

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double pearson = 0.0;
};

inline LinearFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  const auto n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx <= 0.0) throw DegenerateFitError("cost model: regressor is constant");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  // A constant response is fitted exactly by a flat line but has no defined
  // correlation; report 0.
  fit.pearson = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 0.0;
  return fit;
}

// Least-squares affine fits of ttd and mem against bits x B.
inline CostModel calibrate_cost_model(std::span<const CostSample> samples) {
  if (samples.size() < 3) throw DegenerateFitError("cost model: need at least 3 samples");
  std::vector<double> x, t, m;
  for (const auto& s : samples) {
    x.push_back(s.bit_flows);
    t.push_back(s.ttd);
    m.push_back(s.mem);
  }
  const auto ft = fit_line(x, t);
  const auto fm = fit_line(x, m);
  return CostModel{ft.intercept, ft.slope, fm.intercept, fm.slope, ft.pearson, fm.pearson};
}

inline nlohmann::json cost_model_to_json(const CostModel& c) {
  return {{"format", "acdc-cost-model"},
          {"version", 1},
          {"ttd_intercept", c.ttd_intercept},
          {"ttd_per_bitflow", c.ttd_per_bitflow},
          {"mem_intercept", c.mem_intercept},
          {"mem_per_bitflow", c.mem_per_bitflow},
          {"pearson_ttd", c.pearson_ttd},
          {"pearson_mem", c.pearson_mem}};
}

inline CostModel cost_model_from_json(const nlohmann::json& j) {
  try {
    CostModel c;
    c.ttd_intercept = j.at("ttd_intercept").get<double>();
    c.ttd_per_bitflow = j.at("ttd_per_bitflow").get<double>();
    c.mem_intercept = j.at("mem_intercept").get<double>();
    c.mem_per_bitflow = j.at("mem_per_bitflow").get<double>();
    c.pearson_ttd = j.value("pearson_ttd", 0.0);
    c.pearson_mem = j.value("pearson_mem", 0.0);
    if (c.ttd_per_bitflow < 0.0 || c.mem_per_bitflow < 0.0) throw ConfigError("cost model: slopes must be >= 0");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cost model: ") + e.what());
  }
}

inline CostModel load_cost_model(const std::filesystem::path& path) {
  try {
    return cost_model_from_json(nlohmann::json::parse(detail::read_file(path.string())));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cost model '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Modeled profiles.

// One MODELED entry per batch size; f1 is the member's held-out score.
inline std::vector<ProfileEntry> model_profile(int classifier_id, const FeatureSubset& subset,
                                               std::span<const std::uint64_t> batch_sizes, const CostModel& cost,
                                               double f1) {
  const double bits = subset_bits(subset);
  std::vector<ProfileEntry> out;
  for (auto b : batch_sizes) {
    if (b < 1) throw ArgumentError("model_profile: batch size must be >= 1");
    const double x = bits * static_cast<double>(b);
    out.push_back({classifier_id, subset.to_string(), b, f1, cost.ttd(x), cost.mem(x), ProfileMode::modeled});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Measured profiles.

// Counts bytes currently allocated through it and the high-water mark.
class TrackingResource : public std::pmr::memory_resource {
 public:
  explicit TrackingResource(std::pmr::memory_resource* upstream = std::pmr::new_delete_resource())
      : upstream_(upstream) {}

  std::size_t current() const { return current_; }
  std::size_t peak() const { return peak_; }

 private:
  void* do_allocate(std::size_t bytes, std::size_t align) override {
    void* p = upstream_->allocate(bytes, align);
    current_ += bytes;
    peak_ = std::max(peak_, current_);
    return p;
  }
  void do_deallocate(void* p, std::size_t bytes, std::size_t align) override {
    upstream_->deallocate(p, bytes, align);
    current_ -= bytes;
  }
  bool do_is_equal(const std::pmr::memory_resource& other) const noexcept override { return this == &other; }

  std::pmr::memory_resource* upstream_;
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

struct MeasureOptions {
  int repeats = 5;             // TTD is the median over repeats
  double safety_factor = 1.2;  // applied to peak allocation + model size
  std::optional<double> f1;    // fixed F1 (held-out); otherwise F1 of the batch
};

namespace detail {

// Stages the raw headers of a batch into one contiguous buffer, as a capture
// process hands extracted features to a classifier instance.
inline std::pmr::vector<std::uint8_t> stage_raw_headers(std::span<const FlowRecord> flows, int k_packets,
                                                         std::pmr::memory_resource* mr) {
  std::pmr::vector<std::uint8_t> buf(mr);
  for (const auto& f : flows) {
    const auto n = std::min<std::size_t>(f.packets.size(), static_cast<std::size_t>(k_packets));
    buf.push_back(static_cast<std::uint8_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = f.packets[i];
      buf.push_back(static_cast<std::uint8_t>(p.transport_proto));
      buf.push_back(static_cast<std::uint8_t>(p.ip_header.size()));
      buf.push_back(static_cast<std::uint8_t>(p.transport_header.size()));
      buf.insert(buf.end(), p.ip_header.begin(), p.ip_header.end());
      buf.insert(buf.end(), p.transport_header.begin(), p.transport_header.end());
    }
  }
  return buf;
}

// Loads a staged buffer back into per-flow packet headers and encodes it.
inline FeatureMatrix load_and_encode(std::span<const std::uint8_t> buf, std::size_t flows,
                                     const FeatureSubset& subset, int k_packets, std::pmr::memory_resource* mr) {
  FeatureMatrix m(flows, encoded_length(subset, k_packets), mr);
  std::size_t off = 0;
  FlowRecord scratch;
  for (std::size_t r = 0; r < flows; ++r) {
    const std::size_t n = buf[off++];
    scratch.packets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& p = scratch.packets[i];
      p.transport_proto = static_cast<TransportProto>(buf[off]);
      const std::size_t ip_len = buf[off + 1], l4_len = buf[off + 2];
      off += 3;
      p.ip_header.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                         buf.begin() + static_cast<std::ptrdiff_t>(off + ip_len));
      off += ip_len;
      p.transport_header.assign(buf.begin() + static_cast<std::ptrdiff_t>(off),
                                buf.begin() + static_cast<std::ptrdiff_t>(off + l4_len));
      off += l4_len;
    }
    encode_flow_into(scratch, subset, k_packets, m.row(r));
  }
  return m;
}

// Writes encoded rows as the comma-separated ternary text an nPrint-style
// extractor hands to the classifier, one flow per line.
inline std::pmr::string write_feature_text(const FeatureMatrix& m, std::pmr::memory_resource* mr) {
  std::pmr::string out(mr);
  out.reserve(m.rows * (m.cols * 2 + 1));
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out.push_back(',');
      if (row[c] < 0) out.push_back('-');
      out.push_back(row[c] == 0 ? '0' : '1');
    }
    out.push_back('\n');
  }
  return out;
}

// Loads the intermediate feature text back into a matrix for prediction.
inline FeatureMatrix read_feature_text(std::string_view text, std::size_t rows, std::size_t cols,
                                       std::pmr::memory_resource* mr) {
  FeatureMatrix m(rows, cols, mr);
  std::size_t pos = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const char sep = c + 1 == cols ? '\n' : ',';
      const auto end = text.find(sep, pos);
      if (end == std::string_view::npos) throw FormatError("feature text: truncated at row " + std::to_string(r));
      const auto token = text.substr(pos, end - pos);
      if (token == "-1") m.data[r * cols + c] = -1;
      else if (token == "0") m.data[r * cols + c] = 0;
      else if (token == "1") m.data[r * cols + c] = 1;
      else throw FormatError("feature text: bad value '" + std::string(token) + "' at row " + std::to_string(r));
      pos = end + 1;
    }
  if (pos != text.size()) throw FormatError("feature text: trailing data");
  return m;
}

}  // namespace detail

struct InstanceRun {
  double seconds = 0.0;
  std::size_t peak_bytes = 0;
  std::vector<ClassId> predictions;
};

// Runs one classifier instance over a batch and times it end to end.
inline InstanceRun run_instance(const EnsembleModel& model, std::span<const FlowRecord> batch) {
  TrackingResource tracker;
  InstanceRun run;
  const auto start = std::chrono::steady_clock::now();
  {
    auto staged = detail::stage_raw_headers(batch, model.k_packets, &tracker);
    auto encoded = detail::load_and_encode(staged, batch.size(), model.subset, model.k_packets, &tracker);
    const auto text = detail::write_feature_text(encoded, &tracker);
    auto x = detail::read_feature_text(text, encoded.rows, encoded.cols, &tracker);
    std::pmr::vector<double> scores(model.classes.size(), &tracker);
    std::pmr::vector<ClassId> preds(x.rows, &tracker);
    for (std::size_t i = 0; i < x.rows; ++i) {
      model.scores(x.row(i), scores);
      preds[i] = model.classes[static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin())];
    }
    run.predictions.assign(preds.begin(), preds.end());
  }
  const auto stop = std::chrono::steady_clock::now();
  run.seconds = std::max(1e-9, std::chrono::duration<double>(stop - start).count());
  run.peak_bytes = tracker.peak();
  return run;
}

// One MEASURED entry per batch size, timing the first B test flows.
inline std::vector<ProfileEntry> measure_profile(int classifier_id, const EnsembleModel& model,
                                                 std::span<const FlowRecord> test_flows,
                                                 std::span<const std::uint64_t> batch_sizes,
                                                 const MeasureOptions& options = {}) {
  if (options.repeats < 1) throw ArgumentError("measure_profile: repeats must be >= 1");
  std::vector<ProfileEntry> out;
  for (auto b : batch_sizes) {
    if (b < 1) throw ArgumentError("measure_profile: batch size must be >= 1");
    if (b > test_flows.size())
      throw ArgumentError("measure_profile: batch size " + std::to_string(b) + " exceeds the " +
                          std::to_string(test_flows.size()) + " available test flows");
    const auto batch = test_flows.first(b);
    std::vector<double> times;
    std::size_t peak = 0;
    std::vector<ClassId> preds;
    for (int r = 0; r < options.repeats; ++r) {
      auto run = run_instance(model, batch);
      times.push_back(run.seconds);
      peak = std::max(peak, run.peak_bytes);
      preds = std::move(run.predictions);
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
    double f1 = 0.0;
    if (options.f1) {
      f1 = *options.f1;
    } else {
      std::vector<ClassId> truth;
      for (const auto& f : batch) truth.push_back(f.label);
      f1 = weighted_f1(truth, preds);
    }
    const auto mem = static_cast<Bytes>(
        std::ceil(static_cast<double>(peak + model.footprint_bytes()) * options.safety_factor));
    out.push_back({classifier_id, model.subset.to_string(), b, f1, times[times.size() / 2], std::max<Bytes>(1, mem),
                   ProfileMode::measured});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Profile table CSV: classifier_id,subset,batch_size,f1,ttd_s,unit_mem_bytes,mode

inline std::string profile_csv(std::span<const ProfileEntry> entries) {
  std::ostringstream out;
  out << "classifier_id,subset,batch_size,f1,ttd_s,unit_mem_bytes,mode\n";
  for (const auto& e : entries)
    out << e.classifier_id << ',' << e.subset << ',' << e.batch_size << ',' << detail::format_double(e.f1) << ','
        << detail::format_double(e.ttd) << ',' << e.unit_mem << ',' << to_string(e.mode) << '\n';
  return out.str();
}

inline std::vector<ProfileEntry> parse_profile_csv(std::string_view text) {
  const auto table = detail::parse_csv(text);
  const auto c_id = table.column("classifier_id"), c_subset = table.column("subset"),
             c_b = table.column("batch_size"), c_f1 = table.column("f1"), c_ttd = table.column("ttd_s"),
             c_mem = table.column("unit_mem_bytes"), c_mode = table.column("mode");
  std::vector<ProfileEntry> out;
  for (const auto& r : table.rows) {
    ProfileEntry e;
    e.classifier_id = detail::parse_int<int>(r[c_id], "classifier_id");
    e.subset = std::string(detail::trim(r[c_subset]));
    e.batch_size = detail::parse_int<std::uint64_t>(r[c_b], "batch_size");
    e.f1 = detail::parse_double(r[c_f1], "f1");
    e.ttd = detail::parse_double(r[c_ttd], "ttd_s");
    e.unit_mem = detail::parse_int<Bytes>(r[c_mem], "unit_mem_bytes");
    const auto mode = detail::trim(r[c_mode]);
    if (mode == "MEASURED") e.mode = ProfileMode::measured;
    else if (mode == "MODELED") e.mode = ProfileMode::modeled;
    else throw FormatError("profile: unknown mode '" + std::string(mode) + "'");
    if (e.batch_size < 1 || !(e.ttd > 0.0) || e.unit_mem == 0)
      throw FormatError("profile: entry for classifier " + std::to_string(e.classifier_id) +
                        " needs batch_size >= 1, ttd > 0 and unit_mem > 0");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<ProfileEntry> load_profile(const std::filesystem::path& path) {
  return parse_profile_csv(detail::read_file(path.string()));
}

}  // namespace acdc
