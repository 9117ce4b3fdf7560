#include <gtest/gtest.h>

#include <set>

#include "acdc/acdc.hpp"
#include "oracles.hpp"

using namespace acdc;

namespace {

using oracle::random_ranked;

std::vector<std::string> names(const std::vector<RankedFeature>& r) {
  std::vector<std::string> out;
  for (const auto& f : r) out.push_back(field_by_id(f.field_id).qualified_name());
  return out;
}


}  // namespace

TEST(Rank, ReferenceImportanceOrder) {
  const auto scores = oracle::reference_importance_scores();
  const auto r = rank_features(scores);
  const std::vector<std::string> expected = {
      "ipv4.dfbit", "tcp.fin",   "ipv4.ttl",  "tcp.doff",  "tcp.ackf",  "tcp.wsize",
      "tcp.psh",    "ipv4.cksum", "udp.len",  "tcp.cksum", "ipv4.tl",   "tcp.opt",
      "udp.cksum",  "ipv4.tos",  "ipv4.proto", "tcp.rst",  "tcp.seq",   "tcp.ackn"};
  EXPECT_EQ(names(r), expected);
  const std::vector<double> ratios{0.0481, 0.0178, 0.0151, 0.00817, 0.00811, 0.00179, 0.00133};
  for (std::size_t i = 0; i < ratios.size(); ++i) EXPECT_NEAR(r[i].ratio, ratios[i], 5e-5) << i;
}

TEST(Rank, SingletonAndTies) {
  std::vector<FeatureScore> one{{find_field("ipv4.ttl").id, 0.5, 8}};
  EXPECT_EQ(rank_features(one).size(), 1u);
  std::vector<FeatureScore> tie{{find_field("ipv4.ttl").id, 0.8, 8}, {find_field("tcp.fin").id, 0.1, 1}};
  auto r = rank_features(tie);
  EXPECT_EQ(field_by_id(r[0].field_id).qualified_name(), "tcp.fin");
  std::vector<FeatureScore> same_bits{{5, 0.1, 1}, {2, 0.1, 1}};
  EXPECT_EQ(rank_features(same_bits)[0].field_id, 2);
}

TEST(Rank, IsPermutationAndRejectsUnknown) {
  detail::Rng rng(1);
  auto r = random_ranked(rng, 12);
  std::set<int> ids;
  for (const auto& f : r) ids.insert(f.field_id);
  EXPECT_EQ(ids.size(), 12u);
  std::vector<FeatureScore> bad{{99, 0.1, 1}};
  EXPECT_THROW(rank_features(bad), ArgumentError);
  std::map<int, double> bad_map{{-1, 0.2}};
  EXPECT_THROW(rank_features(bad_map), ArgumentError);
}

TEST(KBest, ReferenceImportanceGolden) {
  const auto scores = oracle::reference_importance_scores();
  const auto r = rank_features(scores);
  auto best = k_best_subsets(r, 4, 2);
  ASSERT_EQ(best.size(), 2u);
  EXPECT_EQ(best[0].subset(), FeatureSubset::parse("ipv4.dfbit&tcp.fin&ipv4.ttl&tcp.doff"));
  EXPECT_EQ(best[1].subset(), FeatureSubset::parse("ipv4.dfbit&tcp.fin&ipv4.ttl&tcp.ackf"));
  EXPECT_NEAR(best[0].score, 0.089181, 1e-6);
  EXPECT_NEAR(best[1].score, 0.089125, 1e-6);
}

TEST(KBest, FullSetAndExhaustion) {
  detail::Rng rng(5);
  auto r = random_ranked(rng, 6);
  auto full = k_best_subsets(r, 6, 3);
  ASSERT_EQ(full.size(), 1u);
  EXPECT_EQ(full[0].ranks.size(), 6u);
  auto all = k_best_subsets(r, 2, 100);
  EXPECT_EQ(all.size(), 15u);
  std::set<std::vector<std::size_t>> distinct;
  for (const auto& s : all) distinct.insert(s.ranks);
  EXPECT_EQ(distinct.size(), 15u);
  EXPECT_THROW(k_best_subsets(r, 7, 1), ArgumentError);
  EXPECT_THROW(k_best_subsets(r, 2, 0), ArgumentError);
}

TEST(KBest, MatchesBruteForceOn200Fixtures) {
  detail::Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    const auto m = rng.between(1, 12);
    const auto n = rng.between(1, std::min<std::int64_t>(6, m));
    const auto k = rng.between(1, 20);
    const auto r = random_ranked(rng, static_cast<std::size_t>(m));
    const auto got = k_best_subsets(r, static_cast<std::size_t>(n), static_cast<std::size_t>(k));
    const auto want = oracle::brute_force_k_best(r, static_cast<std::size_t>(n), static_cast<std::size_t>(k));
    ASSERT_EQ(got.size(), want.size()) << "fixture " << t;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].ranks, want[i].ranks) << "fixture " << t << " position " << i;
      EXPECT_EQ(got[i].score, want[i].score);
      if (i > 0) EXPECT_LE(got[i].score, got[i - 1].score);
    }
  }
}

TEST(PoolPlan, DefaultIsNinetyDistinct) {
  const auto scores = oracle::reference_importance_scores();
  const auto r = rank_features(scores);
  const PoolConfig cfg;
  const auto plan = plan_pool(r, cfg);
  EXPECT_EQ(plan.size(), 90u);
  EXPECT_EQ(cfg.pool_size(), 90u);
  std::set<FeatureSubset> distinct;
  for (const auto& p : plan) distinct.insert(p.subset);
  EXPECT_EQ(distinct.size(), 90u);
  for (std::size_t i = 1; i < plan.size(); ++i)
    if (plan[i].size == plan[i - 1].size) EXPECT_LE(plan[i].heuristic_score, plan[i - 1].heuristic_score);
}

TEST(PoolPlan, ConfigErrors) {
  const auto scores = oracle::reference_importance_scores();
  const auto r = rank_features(scores);
  EXPECT_THROW(plan_pool(r, PoolConfig{{19}, 1}), ConfigError);
  EXPECT_THROW(plan_pool(r, PoolConfig{{}, 1}), ConfigError);
  EXPECT_THROW(plan_pool(r, PoolConfig{{2}, 0}), ConfigError);
  EXPECT_THROW(plan_pool(r, PoolConfig{{18}, 2}), ConfigError);
  EXPECT_THROW(plan_pool(r, PoolConfig{{2, 2}, 1}), ConfigError);
}

TEST(Pool, SmallPoolsTrainAndAreDeterministic) {
  auto set = generate_synthetic(default_generator_config(3, 30), 4);
  std::map<int, double> imp;
  for (const auto& s : oracle::reference_importance_scores()) imp[s.field_id] = s.importance;
  EnsembleParams p;
  p.num_rounds = 5;
  p.max_depth = 3;

  auto single = build_pool(set, imp, PoolConfig{{1}, 1}, p, 1);
  ASSERT_EQ(single.members.size(), 1u);
  EXPECT_EQ(single.members[0].subset, FeatureSubset::parse("ipv4.dfbit"));

  auto a = build_pool(set, imp, PoolConfig{{1, 2}, 3}, p, 9);
  auto b = build_pool(set, imp, PoolConfig{{1, 2}, 3}, p, 9);
  ASSERT_EQ(a.members.size(), 6u);
  std::set<FeatureSubset> distinct;
  for (std::size_t i = 0; i < a.members.size(); ++i) {
    EXPECT_EQ(a.members[i].id, static_cast<int>(i));
    EXPECT_EQ(a.members[i].model, b.members[i].model);
    EXPECT_EQ(a.members[i].model.subset, a.members[i].subset);
    distinct.insert(a.members[i].subset);
  }
  EXPECT_EQ(distinct.size(), 6u);
}

TEST(Pool, TrainingErrorNamesMember) {
  auto set = generate_synthetic(default_generator_config(2, 5), 4);
  for (auto& f : set.flows) f.label = 0;
  std::map<int, double> imp{{find_field("ipv4.ttl").id, 0.5}};
  try {
    build_pool(set, imp, PoolConfig{{1}, 1}, {}, 1);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("ipv4.ttl"), std::string::npos) << e.what();
  }
}

TEST(Manifest, RoundTrip) {
  std::vector<ManifestRow> rows = {
      {0, 1, FeatureSubset::parse("ipv4.ttl"), 0.015, "models/member_000.json", 0.7},
      {1, 2, FeatureSubset::parse("ipv4.ttl&tcp.fin"), 0.03, "models/member_001.json", 0.8125},
  };
  auto back = parse_manifest(manifest_csv(rows));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].member_id, rows[i].member_id);
    EXPECT_EQ(back[i].subset, rows[i].subset);
    EXPECT_EQ(back[i].heuristic_score, rows[i].heuristic_score);
    EXPECT_EQ(back[i].model_path, rows[i].model_path);
    EXPECT_EQ(back[i].heldout_f1, rows[i].heldout_f1);
  }
  rows[1].member_id = 0;
  EXPECT_THROW(parse_manifest(manifest_csv(rows)), FormatError);
}
