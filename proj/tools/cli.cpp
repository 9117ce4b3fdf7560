#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "acdc/acdc.hpp"

namespace fs = std::filesystem;

namespace acdc::cli {
namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : detail::split(s, ',')) {
    auto t = std::string(detail::trim(part));
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s, const std::string& flag) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(detail::parse_int<std::uint64_t>(item, flag));
    } catch (const ParseError&) {
      throw ConfigError(flag + ": '" + item + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw ConfigError(flag + ": empty list");
  return out;
}

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw ConfigError(flag + ": file '" + path + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file(path.string(), text);
}

std::string member_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%03d.json", id);
  return std::string("models/") + buf;
}

// ---------------------------------------------------------------------------

struct GenerateOpts {
  int classes = 10;
  int flows = 100;
  std::uint64_t seed = 1;
  std::string out;
  std::string generator;
  bool pcap = false;
};

void cmd_generate(const GenerateOpts& o, std::ostream& out) {
  GeneratorConfig cfg;
  if (!o.generator.empty()) {
    require_file(o.generator, "--generator");
    try {
      cfg = generator_config_from_json(nlohmann::json::parse(detail::read_file(o.generator)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("--generator: invalid JSON: " + std::string(e.what()));
    }
  } else {
    if (o.classes < 0) throw ConfigError("classes: must be >= 2, got " + std::to_string(o.classes));
    if (o.flows < 0) throw ConfigError("flows: must be >= 1, got " + std::to_string(o.flows));
    cfg = default_generator_config(static_cast<std::size_t>(o.classes), static_cast<std::size_t>(o.flows));
    if (o.flows == 0) throw ConfigError("flows: must be >= 1, got 0");
  }
  const auto set = generate_synthetic(cfg, o.seed);
  fs::create_directories(o.out);
  save_flowset(fs::path(o.out) / "flows.json", set);
  if (o.pcap) {
    for (const auto& [id, name] : set.label_names) {
      std::vector<FlowRecord> flows;
      for (const auto& f : set.flows)
        if (f.label == id) flows.push_back(f);
      write_pcap(fs::path(o.out) / (name + ".pcap"), flows);
    }
  }
  out << "generated " << set.size() << " flows in " << set.label_names.size() << " classes -> "
      << (fs::path(o.out) / "flows.json").string() << '\n';
}

struct IngestOpts {
  std::vector<std::string> classes;
  std::size_t max_packets = 4;
  std::string out;
};

void cmd_ingest(const IngestOpts& o, std::ostream& out) {
  FlowSet set;
  ClassId next = 0;
  for (const auto& group : o.classes)
    for (const auto& item : split_list(group)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
        throw ConfigError("--class: expected NAME=FILE.pcap, got '" + item + "'");
      const auto name = item.substr(0, eq), path = item.substr(eq + 1);
      require_file(path, "--class " + name);
      auto part = parse_pcap(path, next, o.max_packets, name);
      set.flows.insert(set.flows.end(), part.flows.begin(), part.flows.end());
      set.label_names[next] = name;
      ++next;
    }
  if (set.label_names.empty()) throw ConfigError("--class: at least one NAME=FILE.pcap is required");
  save_flowset(o.out, set);
  out << "ingested " << set.size() << " flows in " << set.label_names.size() << " classes -> " << o.out << '\n';
}

struct TrainOpts {
  std::string data;
  std::string out;
  std::string sizes = "1,2,3,4,5,6,7,8,9";
  std::size_t combos = 10;
  std::uint64_t seed = 1;
  double train_fraction = 0.5;
  int rounds = 50;
  int depth = 6;
  double learning_rate = 0.1;
  int importance_repeats = 3;
  std::size_t flowstats_components = 2;
};

void cmd_train_pool(const TrainOpts& o, std::ostream& out) {
  require_file(o.data, "--data");
  const auto data = load_flowset(o.data);
  const auto [train, test] = split_train_test(data, o.train_fraction, o.seed);
  PoolConfig cfg;
  cfg.sizes.clear();
  for (auto n : parse_u64_list(o.sizes, "sizes")) cfg.sizes.push_back(n);
  cfg.num_combos = o.combos;
  EnsembleParams params;
  params.num_rounds = o.rounds;
  params.max_depth = o.depth;
  params.learning_rate = o.learning_rate;
  if (o.rounds < 1 || o.depth < 1 || !(o.learning_rate > 0.0))
    throw ConfigError("rounds, depth and learning-rate must be positive");
  if (o.importance_repeats < 1) throw ConfigError("importance-repeats: must be >= 1");

  const fs::path dir = o.out;
  fs::create_directories(dir / "models");

  const FeatureSubset all(preliminary_field_ids());
  const auto y_train = train.labels(), y_test = test.labels();
  const auto x_test = encode_flows(test.flows, all);
  const auto full = train_ensemble(encode_flows(train.flows, all), y_train, all, params, o.seed);
  const double full_f1 = weighted_f1(y_test, full.predict(x_test));
  save_ensemble(dir / "all_features.json", full);

  const auto report = permutation_importance(full, x_test, y_test, o.importance_repeats, o.seed);
  const auto ranked = rank_features(report.importance);
  cfg.validate(ranked.size());
  {
    std::ostringstream csv;
    csv << "rank,field_id,field,bits,importance,ratio\n";
    for (std::size_t i = 0; i < ranked.size(); ++i)
      csv << i << ',' << ranked[i].field_id << ',' << field_by_id(ranked[i].field_id).qualified_name() << ','
          << ranked[i].bits << ',' << detail::format_double(ranked[i].importance) << ','
          << detail::format_double(ranked[i].ratio) << '\n';
    write_text(dir / "importance.csv", csv.str());
  }

  const auto pool = build_pool(train, report.importance, cfg, params, o.seed);
  std::vector<ManifestRow> rows;
  for (const auto& m : pool.members) {
    const auto path = member_file(m.id);
    save_ensemble(dir / path, m.model);
    const double f1 = weighted_f1(y_test, m.model.predict(encode_flows(test.flows, m.subset)));
    rows.push_back({m.id, m.size, m.subset, m.heuristic_score, path, f1});
  }
  write_text(dir / "manifest.csv", manifest_csv(rows));

  FlowStatsParams fsp;
  fsp.components_per_class = o.flowstats_components;
  const auto baseline = train_flowstats(train, fsp, o.seed);
  const double baseline_f1 = weighted_f1(y_test, predict_flowstats(baseline, test.flows));
  {
    std::ostringstream csv;
    csv << "model,bits,heldout_f1\n"
        << "all_features," << subset_bits(all) << ',' << detail::format_double(full_f1) << '\n'
        << "flow_stats,0," << detail::format_double(baseline_f1) << '\n';
    write_text(dir / "baselines.csv", csv.str());
  }
  save_flowset(dir / "train_flows.json", train);
  save_flowset(dir / "test_flows.json", test);

  const auto best = std::max_element(rows.begin(), rows.end(),
                                     [](const auto& a, const auto& b) { return a.heldout_f1 < b.heldout_f1; });
  out << "pool of " << rows.size() << " members -> " << (dir / "manifest.csv").string() << '\n'
      << "held-out weighted F1: all-feature " << detail::format_double(full_f1) << ", flow-stats "
      << detail::format_double(baseline_f1) << ", best member " << detail::format_double(best->heldout_f1) << '\n';
}

struct Pool {
  fs::path dir;
  std::vector<ManifestRow> rows;
};

Pool load_pool(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / "manifest.csv";
  require_file(manifest.string(), "--pool");
  return {dir, load_manifest(manifest)};
}

std::vector<int> pick_members(const Pool& pool, const std::string& spec) {
  std::vector<int> ids;
  if (spec.empty()) {
    for (std::size_t i = 0; i < pool.rows.size(); i += 10) ids.push_back(pool.rows[i].member_id);
    if (ids.size() < 2 && pool.rows.size() >= 2) ids.push_back(pool.rows.back().member_id);
    return ids;
  }
  for (auto v : parse_u64_list(spec, "members")) ids.push_back(static_cast<int>(v));
  return ids;
}

const ManifestRow& row_of(const Pool& pool, int id) {
  for (const auto& r : pool.rows)
    if (r.member_id == id) return r;
  throw ConfigError("members: no pool member with id " + std::to_string(id));
}

FlowSet load_test_flows(const Pool& pool) {
  const auto path = pool.dir / "test_flows.json";
  require_file(path.string(), "--pool");
  return load_flowset(path);
}

void check_batches(const std::vector<std::uint64_t>& bs, std::size_t available) {
  for (auto b : bs) {
    if (b < 1) throw ConfigError("batch-sizes: must be >= 1");
    if (b > available)
      throw ConfigError("batch-sizes: " + std::to_string(b) + " exceeds the " + std::to_string(available) +
                        " held-out flows available for measurement");
  }
}

struct CalibrateOpts {
  std::string pool;
  std::string batch_sizes = "50,100,200,400";
  std::string members;
  int repeats = 3;
  std::string out;
};

void cmd_calibrate(const CalibrateOpts& o, std::ostream& out) {
  const auto pool = load_pool(o.pool);
  const auto test = load_test_flows(pool);
  const auto bs = parse_u64_list(o.batch_sizes, "batch-sizes");
  check_batches(bs, test.size());
  MeasureOptions mo;
  mo.repeats = o.repeats;
  std::vector<CostSample> samples;
  for (int id : pick_members(pool, o.members)) {
    const auto& row = row_of(pool, id);
    const auto model = load_ensemble(pool.dir / row.model_path);
    const double bits = subset_bits(model.subset);
    for (const auto& e : measure_profile(id, model, test.flows, bs, mo))
      samples.push_back({bits * static_cast<double>(e.batch_size), e.ttd, static_cast<double>(e.unit_mem)});
  }
  const auto model = calibrate_cost_model(samples);
  write_text(o.out, cost_model_to_json(model).dump(2) + "\n");
  out << "calibrated on " << samples.size() << " (member, batch) points: pearson(bits x B, ttd) "
      << detail::format_double(model.pearson_ttd) << ", pearson(bits x B, mem) "
      << detail::format_double(model.pearson_mem) << " -> " << o.out << '\n';
}

struct ProfileOpts {
  std::string pool;
  std::string mode = "modeled";
  std::string batch_sizes = "50,100,200,500,1000,2000,5000";
  std::string calibration;
  int repeats = 5;
  std::string out;
};

void cmd_profile(const ProfileOpts& o, std::ostream& out) {
  const auto pool = load_pool(o.pool);
  const auto bs = parse_u64_list(o.batch_sizes, "batch-sizes");
  std::vector<ProfileEntry> entries;
  if (o.mode == "modeled") {
    if (o.calibration.empty()) throw ConfigError("calibration: required in modeled mode");
    require_file(o.calibration, "--calibration");
    const auto cost = load_cost_model(o.calibration);
    for (const auto& r : pool.rows) {
      auto e = model_profile(r.member_id, r.subset, bs, cost, r.heldout_f1);
      entries.insert(entries.end(), e.begin(), e.end());
    }
  } else if (o.mode == "measured") {
    const auto test = load_test_flows(pool);
    check_batches(bs, test.size());
    MeasureOptions mo;
    mo.repeats = o.repeats;
    for (const auto& r : pool.rows) {
      mo.f1 = r.heldout_f1;
      const auto model = load_ensemble(pool.dir / r.model_path);
      auto e = measure_profile(r.member_id, model, test.flows, bs, mo);
      entries.insert(entries.end(), e.begin(), e.end());
    }
  } else {
    throw ConfigError("mode: expected 'modeled' or 'measured', got '" + o.mode + "'");
  }
  write_text(o.out, profile_csv(entries));
  out << "profiled " << pool.rows.size() << " members x " << bs.size() << " batch sizes (" << o.mode << ") -> "
      << o.out << '\n';
}

struct SimulateOpts {
  std::string profile;
  std::string scenario;
  std::string manifest;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_simulate(const SimulateOpts& o, std::ostream& out) {
  require_file(o.profile, "--profile");
  require_file(o.scenario, "--scenario");
  const auto profiles = load_profile(o.profile);
  const auto scenario = load_scenario(o.scenario);
  std::vector<ManifestRow> manifest;
  if (!o.manifest.empty()) {
    require_file(o.manifest, "--manifest");
    manifest = load_manifest(o.manifest);
  }
  const auto trace = acdc::run(manifest, profiles, scenario, o.seed);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_text(dir / "trace.csv", trace_csv(trace));
  std::string log = decision_log_header();
  for (const auto& t : trace.ticks) log += decision_log_row(t.tick, t.rate, t.mem_budget, t.decision);
  write_text(dir / "decisions.csv", log);
  std::size_t overcommit = 0;
  for (const auto& t : trace.ticks) overcommit += t.decision.overcommit;
  out << "simulated " << trace.ticks.size() << " ticks: " << trace.total_arrivals() << " arrivals, "
      << trace.total_completed() << " completed, final backlog " << trace.ticks.back().backlog << ", "
      << overcommit << " overcommit ticks -> " << dir.string() << '\n';
}

struct ReportOpts {
  std::vector<std::string> traces;
  std::string profile;
  std::string trend = "none";
  std::string out;
};

void cmd_report(const ReportOpts& o, std::ostream& out) {
  std::vector<std::string> paths;
  for (const auto& t : o.traces)
    for (auto& p : split_list(t)) paths.push_back(std::move(p));
  if (paths.empty() && o.profile.empty()) throw ConfigError("trace: give at least one trace or a profile");
  if (o.trend != "none" && o.trend != "increasing" && o.trend != "decreasing")
    throw ConfigError("trend: expected none, increasing or decreasing");

  std::vector<SimulationTrace> traces;
  std::ostringstream summary;
  summary << "trace,ticks,arrivals,completed,throughput,median_batch_size,overcommit_ticks,peak_mem_in_use,final_backlog\n";
  for (const auto& p : paths) {
    require_file(p, "--trace");
    traces.push_back(parse_trace_csv(detail::read_file(p)));
    const auto& t = traces.back();
    if (t.ticks.empty()) throw FormatError("trace '" + p + "' has no ticks");
    std::size_t over = 0;
    Bytes peak = 0;
    for (const auto& r : t.ticks) {
      over += r.decision.overcommit;
      peak = std::max(peak, r.mem_in_use);
    }
    summary << p << ',' << t.ticks.size() << ',' << t.total_arrivals() << ',' << t.total_completed() << ','
            << detail::format_double(throughput_report(t, t.ticks.size())[0]) << ','
            << detail::format_double(median_batch_size(t)) << ',' << over << ',' << peak << ','
            << t.ticks.back().backlog << '\n';
  }

  std::string verdict;
  if (o.trend != "none") {
    const auto v = trend_check(traces, o.trend == "increasing" ? TrendDirection::increasing : TrendDirection::decreasing);
    verdict = "trend " + o.trend + ": " + (v.monotone() ? "monotone" : "NOT monotone") + ", " +
              std::to_string(v.violations) + " violations\n";
  }

  std::string classifiers;
  if (!o.profile.empty()) {
    require_file(o.profile, "--profile");
    std::ostringstream csv;
    csv << "classifier_id,subset,bits,batch_size,f1,ttd_s,unit_mem_bytes,ratio\n";
    for (const auto& e : load_profile(o.profile))
      csv << e.classifier_id << ',' << e.subset << ',' << subset_bits(FeatureSubset::parse(e.subset)) << ','
          << e.batch_size << ',' << detail::format_double(e.f1) << ',' << detail::format_double(e.ttd) << ','
          << e.unit_mem << ',' << detail::format_double(e.f1 / e.ttd) << '\n';
    classifiers = csv.str();
  }

  if (!o.out.empty()) {
    fs::create_directories(o.out);
    if (!paths.empty()) write_text(fs::path(o.out) / "summary.csv", summary.str());
    if (!classifiers.empty()) write_text(fs::path(o.out) / "classifiers.csv", classifiers);
    if (!verdict.empty()) write_text(fs::path(o.out) / "trend.txt", verdict);
  }
  if (!paths.empty()) out << summary.str();
  if (!classifiers.empty()) out << (paths.empty() ? "" : "\n") << classifiers;
  out << verdict;
}

// Turns the JSON object in a --config file into extra "--key=value" arguments
// appended after the command line, so config values take precedence.
std::vector<std::string> config_args(std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return {};
  require_file(path, "--config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config: invalid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("--config: expected a JSON object of flag names to values");
  auto scalar = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  std::vector<std::string> extra;
  for (const auto& [key, v] : j.items()) {
    if (key == "config") continue;
    std::string value;
    if (v.is_array()) {
      for (const auto& item : v) value += (value.empty() ? "" : ",") + scalar(item);
    } else {
      value = scalar(v);
    }
    extra.push_back("--" + key + "=" + value);
  }
  return extra;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"acdc: adaptive classifier pool, profiler, scheduler and simulator"};
  app.name("acdc");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config;
  app.add_option("--config", config, "JSON file of flag values; overrides flags given on the command line");

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "generate a labelled synthetic flow set");
  g->add_option("--classes", gen.classes, "number of classes (built-in profiles)");
  g->add_option("--flows", gen.flows, "flows per class");
  g->add_option("--seed", gen.seed, "random seed");
  g->add_option("-o,--out", gen.out, "output directory (created)")->required();
  g->add_option("--generator", gen.generator, "generator config JSON (replaces --classes/--flows)");
  g->add_flag("--pcap", gen.pcap, "also write one pcap per class");

  IngestOpts ing;
  auto* in = app.add_subcommand("ingest", "assemble labelled flows from pcap files");
  in->add_option("--class", ing.classes, "NAME=FILE.pcap, repeatable or comma separated; class ids follow order")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  in->add_option("--max-packets", ing.max_packets, "packets retained per flow");
  in->add_option("-o,--out", ing.out, "output flow set JSON")->required();

  std::string registry_out;
  auto* reg = app.add_subcommand("registry", "dump the header-field registry as CSV");
  reg->add_option("-o,--out", registry_out, "output file (default stdout)");

  TrainOpts tr;
  auto* t = app.add_subcommand("train-pool", "rank features and train the classifier pool");
  t->add_option("--data", tr.data, "flow set JSON")->required();
  t->add_option("-o,--out", tr.out, "output directory (created)")->required();
  t->add_option("--sizes", tr.sizes, "subset sizes, comma separated");
  t->add_option("--combos", tr.combos, "subsets per size");
  t->add_option("--seed", tr.seed, "random seed");
  t->add_option("--train-fraction", tr.train_fraction, "share of flows used for training");
  t->add_option("--rounds", tr.rounds, "boosting rounds");
  t->add_option("--depth", tr.depth, "maximum tree depth");
  t->add_option("--learning-rate", tr.learning_rate, "boosting learning rate");
  t->add_option("--importance-repeats", tr.importance_repeats, "permutations per field");
  t->add_option("--flowstats-components", tr.flowstats_components, "mixture components per class (baseline)");

  CalibrateOpts cal;
  auto* c = app.add_subcommand("calibrate", "fit the affine cost model from measured runs");
  c->add_option("--pool", cal.pool, "pool directory (from train-pool)")->required();
  c->add_option("--batch-sizes", cal.batch_sizes, "batch sizes, comma separated");
  c->add_option("--members", cal.members, "member ids, comma separated (default every 10th)");
  c->add_option("--repeats", cal.repeats, "timed runs per point (median)");
  c->add_option("-o,--out", cal.out, "output cost model JSON")->required();

  ProfileOpts prof;
  auto* p = app.add_subcommand("profile", "build the profile table for every pool member");
  p->add_option("--pool", prof.pool, "pool directory (from train-pool)")->required();
  p->add_option("--mode", prof.mode, "modeled or measured");
  p->add_option("--batch-sizes", prof.batch_sizes, "batch sizes, comma separated");
  p->add_option("--calibration", prof.calibration, "cost model JSON (modeled mode)");
  p->add_option("--repeats", prof.repeats, "timed runs per point (measured mode)");
  p->add_option("-o,--out", prof.out, "output profile CSV")->required();

  SimulateOpts sim;
  auto* s = app.add_subcommand("simulate", "replay a scenario against a profile table");
  s->add_option("--profile", sim.profile, "profile CSV")->required();
  s->add_option("--scenario", sim.scenario, "scenario JSON")->required();
  s->add_option("--manifest", sim.manifest, "pool manifest CSV, checked against the profile");
  s->add_option("--seed", sim.seed, "random seed (arrival jitter)");
  s->add_option("-o,--out", sim.out, "output directory for trace.csv and decisions.csv")->required();

  ReportOpts rep;
  auto* r = app.add_subcommand("report", "summarize traces and profiles");
  r->add_option("--trace", rep.traces, "trace CSV files, one per swept point, in sweep order")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  r->add_option("--profile", rep.profile, "profile CSV for the per-classifier table");
  r->add_option("--trend", rep.trend, "expected batch-size trend across traces: none, increasing, decreasing");
  r->add_option("-o,--out", rep.out, "output directory (optional)");

  try {
    auto extra = config_args(args);
    args.insert(args.end(), extra.begin(), extra.end());
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);

    if (*g) cmd_generate(gen, out);
    else if (*in) cmd_ingest(ing, out);
    else if (*reg) {
      if (registry_out.empty()) out << registry_csv();
      else write_text(registry_out, registry_csv());
    } else if (*t) cmd_train_pool(tr, out);
    else if (*c) cmd_calibrate(cal, out);
    else if (*p) cmd_profile(prof, out);
    else if (*s) cmd_simulate(sim, out);
    else if (*r) cmd_report(rep, out);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "acdc: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "acdc: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "acdc: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace acdc::cli
