#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "acdc/acdc.hpp"
#include "cli.hpp"
#include "oracles.hpp"

using namespace acdc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result acdc_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("acdc_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

// Small pool shared by the downstream command tests.
const fs::path& small_pool() {
  static const fs::path dir = [] {
    const auto root = scratch("pool");
    EXPECT_EQ(acdc_cli({"generate", "--classes", "4", "--flows", "40", "--seed", "3", "-o", (root / "data").string()}).code, 0);
    const auto r = acdc_cli({"train-pool", "--data", (root / "data/flows.json").string(), "--sizes", "1,2", "--combos",
                             "3", "--rounds", "10", "--seed", "3", "-o", (root / "pool").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return root / "pool";
  }();
  return dir;
}

}  // namespace

TEST(Cli, GenerateWritesRequestedFlows) {
  const auto dir = scratch("gen");
  const auto r = acdc_cli({"generate", "--classes", "10", "--flows", "50", "-o", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto set = load_flowset(dir / "flows.json");
  EXPECT_EQ(set.size(), 500u);
  EXPECT_EQ(set.label_names.size(), 10u);
}

TEST(Cli, GenerateCreatesMissingOutputDirectory) {
  const auto dir = scratch("nested") / "a" / "b";
  ASSERT_EQ(acdc_cli({"generate", "--classes", "2", "--flows", "3", "-o", dir.string()}).code, 0);
  EXPECT_TRUE(fs::exists(dir / "flows.json"));
}

TEST(Cli, ZeroClassesIsConfigError) {
  const auto r = acdc_cli({"generate", "--classes", "0", "-o", scratch("zero").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("classes"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << "one-line diagnostic";
}

TEST(Cli, ParseErrorsAndHelp) {
  EXPECT_EQ(acdc_cli({}).code, cli::kExitConfig);
  EXPECT_EQ(acdc_cli({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(acdc_cli({"generate", "--flows", "ten", "-o", "x"}).code, cli::kExitConfig);
  const auto h = acdc_cli({"generate", "--help"});
  EXPECT_EQ(h.code, cli::kExitOk);
  EXPECT_NE(h.out.find("--flows"), std::string::npos);
  EXPECT_NE(h.out.find("100"), std::string::npos) << "defaults are shown";
}

TEST(Cli, ConfigFileOverridesFlags) {
  const auto dir = scratch("config");
  fs::create_directories(dir);
  detail::write_file((dir / "cfg.json").string(), R"({"classes": 3, "flows": 7})");
  const auto r = acdc_cli({"--config", (dir / "cfg.json").string(), "generate", "--classes", "9", "-o", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_flowset(dir / "out/flows.json").size(), 21u);
  EXPECT_EQ(acdc_cli({"--config", (dir / "missing.json").string(), "registry"}).code, cli::kExitConfig);
}

TEST(Cli, RegistryCsv) {
  const auto r = acdc_cli({"registry"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, registry_csv());
}

TEST(Cli, IngestPcaps) {
  const auto dir = scratch("ingest");
  fs::create_directories(dir);
  std::vector<std::uint8_t> a = oracle::pcap_global_header(), b = oracle::pcap_global_header();
  for (int i = 0; i < 3; ++i)
    oracle::pcap_record(a, i, oracle::tcp_frame(0x0a000001, 0x0a000002, 1000 + i, 443, net::tcp_flag::syn, 0));
  oracle::pcap_record(b, 0, oracle::udp_frame(0x0a000003, 0x0a000004, 53, 5353, 3));
  detail::write_file((dir / "web.pcap").string(), std::string(a.begin(), a.end()));
  detail::write_file((dir / "dns.pcap").string(), std::string(b.begin(), b.end()));
  const auto r = acdc_cli({"ingest", "--class", "web=" + (dir / "web.pcap").string(), "--class",
                           "dns=" + (dir / "dns.pcap").string(), "-o", (dir / "flows.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto set = load_flowset(dir / "flows.json");
  EXPECT_EQ(set.size(), 4u);
  EXPECT_EQ(set.label_names.at(0), "web");
  EXPECT_EQ(set.label_names.at(1), "dns");
  EXPECT_EQ(acdc_cli({"ingest", "--class", "bad", "-o", (dir / "x.json").string()}).code, cli::kExitConfig);
  EXPECT_EQ(acdc_cli({"ingest", "--class", "x=" + (dir / "nope.pcap").string(), "-o", (dir / "x.json").string()}).code,
            cli::kExitConfig);
}

TEST(Cli, TrainPoolIsDeterministic) {
  const auto& pool = small_pool();
  const auto rows = load_manifest(pool / "manifest.csv");
  EXPECT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_TRUE(fs::exists(pool / r.model_path));
  for (const char* f : {"importance.csv", "baselines.csv", "all_features.json", "test_flows.json"})
    EXPECT_TRUE(fs::exists(pool / f)) << f;

  const auto again = scratch("pool_again");
  ASSERT_EQ(acdc_cli({"train-pool", "--data", (pool.parent_path() / "data/flows.json").string(), "--sizes", "1,2",
                      "--combos", "3", "--rounds", "10", "--seed", "3", "-o", again.string()})
                .code,
            0);
  EXPECT_EQ(detail::read_file((pool / "manifest.csv").string()), detail::read_file((again / "manifest.csv").string()));
}

TEST(Cli, TrainPoolRejectsBadSizes) {
  const auto& pool = small_pool();
  const auto data = (pool.parent_path() / "data/flows.json").string();
  EXPECT_EQ(acdc_cli({"train-pool", "--data", data, "--sizes", "1,x", "-o", scratch("bad").string()}).code,
            cli::kExitConfig);
  EXPECT_EQ(acdc_cli({"train-pool", "--data", "missing.json", "-o", scratch("bad").string()}).code, cli::kExitConfig);
}

TEST(Cli, ModeledProfileIsByteIdentical) {
  const auto& pool = small_pool();
  const auto cost = oracle::fixture_path("configs/cost_model.json");
  const auto a = scratch("prof_a") / "p.csv", b = scratch("prof_b") / "p.csv";
  ASSERT_EQ(acdc_cli({"profile", "--pool", pool.string(), "--calibration", cost, "-o", a.string()}).code, 0);
  ASSERT_EQ(acdc_cli({"profile", "--pool", pool.string(), "--calibration", cost, "-o", b.string()}).code, 0);
  EXPECT_EQ(detail::read_file(a.string()), detail::read_file(b.string()));
  EXPECT_EQ(load_profile(a).size(), 6u * 7u);
  EXPECT_EQ(acdc_cli({"profile", "--pool", pool.string(), "-o", a.string()}).code, cli::kExitConfig)
      << "modeled mode needs a calibration";
}

TEST(Cli, MeasuredProfileAndCalibration) {
  const auto& pool = small_pool();
  const auto dir = scratch("measured");
  const auto r = acdc_cli({"profile", "--pool", pool.string(), "--mode", "measured", "--batch-sizes", "10,40",
                           "--repeats", "1", "-o", (dir / "p.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto entries = load_profile(dir / "p.csv");
  const auto rows = load_manifest(pool / "manifest.csv");
  ASSERT_EQ(entries.size(), 12u);
  for (const auto& e : entries) {
    EXPECT_EQ(e.mode, ProfileMode::measured);
    EXPECT_EQ(e.f1, rows[static_cast<std::size_t>(e.classifier_id)].heldout_f1);
  }
  EXPECT_EQ(acdc_cli({"profile", "--pool", pool.string(), "--mode", "measured", "--batch-sizes", "100000", "-o",
                      (dir / "q.csv").string()})
                .code,
            cli::kExitConfig);

  const auto c = acdc_cli({"calibrate", "--pool", pool.string(), "--members", "0,3", "--batch-sizes", "10,20,40",
                           "--repeats", "1", "-o", (dir / "cost.json").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  const auto cost = load_cost_model(dir / "cost.json");
  EXPECT_GE(cost.ttd_per_bitflow, 0.0);
  EXPECT_EQ(acdc_cli({"calibrate", "--pool", pool.string(), "--members", "99", "-o", (dir / "x.json").string()}).code,
            cli::kExitConfig);
}

TEST(Cli, SimulateFirstDecisionMatchesReferenceProfile) {
  const auto dir = scratch("sim");
  fs::create_directories(dir);
  detail::write_file((dir / "s.json").string(), R"({"duration": 5, "rate": 1000, "memory": "2GB"})");
  const auto r = acdc_cli({"simulate", "--profile", oracle::fixture_path("configs/reference_profile.csv"), "--scenario",
                           (dir / "s.json").string(), "-o", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = detail::parse_csv(detail::read_file((dir / "out/decisions.csv").string()));
  ASSERT_EQ(log.rows.size(), 5u);
  EXPECT_EQ(log.rows[0][log.column("classifier_id")], "0");
  EXPECT_EQ(log.rows[0][log.column("batch_size")], "500");
  const auto trace = parse_trace_csv(detail::read_file((dir / "out/trace.csv").string()));
  EXPECT_EQ(trace.ticks.size(), 5u);

  detail::write_file((dir / "bad.json").string(), R"({"duration": 0, "rate": 1000, "memory": "2GB"})");
  EXPECT_EQ(acdc_cli({"simulate", "--profile", oracle::fixture_path("configs/reference_profile.csv"), "--scenario",
                      (dir / "bad.json").string(), "-o", (dir / "out2").string()})
                .code,
            cli::kExitConfig);
}

TEST(Cli, ReportSummarizesTracesAndTrend) {
  const auto dir = scratch("report");
  fs::create_directories(dir);
  std::vector<std::string> traces;
  for (const char* gb : {"0.4GB", "2GB", "8GB"}) {
    const auto s = dir / (std::string(gb) + ".json");
    detail::write_file(s.string(), std::string(R"({"duration": 10, "rate": 7000, "memory": ")") + gb + "\"}");
    ASSERT_EQ(acdc_cli({"simulate", "--profile", oracle::fixture_path("configs/reference_profile.csv"), "--scenario",
                        s.string(), "-o", (dir / gb).string()})
                  .code,
              0);
    traces.push_back((dir / gb / "trace.csv").string());
  }
  const auto r = acdc_cli({"report", "--trace", traces[0], "--trace", traces[1], "--trace", traces[2], "--trend",
                           "decreasing", "--profile", oracle::fixture_path("configs/reference_profile.csv"), "-o",
                           (dir / "rep").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = detail::parse_csv(detail::read_file((dir / "rep/summary.csv").string()));
  EXPECT_EQ(summary.rows.size(), 3u);
  EXPECT_EQ(summary.rows[0][summary.column("ticks")], "10");
  EXPECT_NE(r.out.find("trend decreasing: monotone"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "rep/classifiers.csv"));
  EXPECT_EQ(acdc_cli({"report", "--trace", traces[0], "--trend", "sideways"}).code, cli::kExitConfig);
}
