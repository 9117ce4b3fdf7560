// explore.hpp - heuristic feature exploration and classifier pool assembly.
//
// Fields are ranked by importance per bit.  For every requested subset size
// the k subsets with the highest summed ratio are enumerated exactly, then
// one ensemble is trained per subset.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/detail/text.hpp"
#include "acdc/encode.hpp"
#include "acdc/error.hpp"
#include "acdc/models/ensemble.hpp"
#include "acdc/traffic.hpp"

namespace acdc {

struct FeatureScore {
  int field_id = 0;
  double importance = 0.0;
  int bits = 0;
};

struct RankedFeature {
  int field_id = 0;
  double importance = 0.0;
  int bits = 0;
  double ratio = 0.0;

  bool operator==(const RankedFeature&) const = default;
};

// Sorted by importance/bits descending; ties go to fewer bits, then lower id.
inline std::vector<RankedFeature> rank_features(std::span<const FeatureScore> scores) {
  std::vector<RankedFeature> out;
  out.reserve(scores.size());
  std::set<int> seen;
  for (const auto& s : scores) {
    (void)field_by_id(s.field_id);
    if (!seen.insert(s.field_id).second)
      throw ArgumentError("rank_features: duplicate field " + field_by_id(s.field_id).qualified_name());
    if (s.bits <= 0) throw ArgumentError("rank_features: field " + field_by_id(s.field_id).qualified_name() +
                                         " has non-positive bit width");
    const double ratio = s.importance / s.bits;
    if (!std::isfinite(ratio))
      throw ArgumentError("rank_features: non-finite ratio for " + field_by_id(s.field_id).qualified_name());
    out.push_back({s.field_id, s.importance, s.bits, ratio});
  }
  std::sort(out.begin(), out.end(), [](const RankedFeature& a, const RankedFeature& b) {
    if (a.ratio != b.ratio) return a.ratio > b.ratio;
    if (a.bits != b.bits) return a.bits < b.bits;
    return a.field_id < b.field_id;
  });
  return out;
}

// Bit widths are taken from the registry.
inline std::vector<RankedFeature> rank_features(const std::map<int, double>& importances) {
  std::vector<FeatureScore> scores;
  for (const auto& [id, fi] : importances) scores.push_back({id, fi, field_by_id(id).bits});
  return rank_features(scores);
}

struct ScoredSubset {
  std::vector<std::size_t> ranks;  // ascending positions in the ranked list
  std::vector<int> field_ids;      // same order as ranks
  double score = 0.0;              // sum of ratios, accumulated in rank order

  FeatureSubset subset() const { return FeatureSubset(field_ids); }
};

namespace detail {

inline double rank_sum(std::span<const RankedFeature> ranked, const std::vector<std::size_t>& ranks) {
  double s = 0.0;
  for (auto r : ranks) s += ranked[r].ratio;
  return s;
}

// Total order used for enumeration: higher score first, then the
// lexicographically smaller rank vector.  A subset's swap predecessor always
// precedes it under this order.
inline bool subset_before(double sa, const std::vector<std::size_t>& ra, double sb, const std::vector<std::size_t>& rb) {
  if (sa != sb) return sa > sb;
  return ra < rb;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    if (r > UINT64_MAX / (n - k + i)) return UINT64_MAX;
    r = r * (n - k + i) / i;
  }
  return r;
}

}  // namespace detail

// Exact k best size-n subsets by summed ratio.  Best-first search from the
// top-n set; successors replace one member with a lower-ranked non-member.
// Returns min(k, C(|ranked|, n)) subsets with non-increasing scores.
inline std::vector<ScoredSubset> k_best_subsets(std::span<const RankedFeature> ranked, std::size_t n, std::size_t k) {
  if (n < 1) throw ArgumentError("k_best_subsets: subset size must be >= 1");
  if (n > ranked.size())
    throw ArgumentError("k_best_subsets: subset size " + std::to_string(n) + " exceeds " +
                        std::to_string(ranked.size()) + " ranked features");
  if (k < 1) throw ArgumentError("k_best_subsets: k must be >= 1");

  struct Entry {
    double score;
    std::vector<std::size_t> ranks;
    bool operator<(const Entry& o) const { return detail::subset_before(score, ranks, o.score, o.ranks); }
  };
  std::set<Entry> frontier;
  std::set<std::vector<std::size_t>> visited;

  std::vector<std::size_t> top(n);
  for (std::size_t i = 0; i < n; ++i) top[i] = i;
  frontier.insert({detail::rank_sum(ranked, top), top});
  visited.insert(top);

  std::vector<ScoredSubset> out;
  const std::size_t m = ranked.size();
  while (!frontier.empty() && out.size() < k) {
    auto node = frontier.extract(frontier.begin()).value();
    ScoredSubset s;
    s.ranks = node.ranks;
    s.score = node.score;
    for (auto r : node.ranks) s.field_ids.push_back(ranked[r].field_id);
    out.push_back(std::move(s));

    std::vector<bool> chosen(m, false);
    for (auto r : node.ranks) chosen[r] = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t q = node.ranks[i] + 1; q < m; ++q) {
        if (chosen[q]) continue;
        auto next = node.ranks;
        next[i] = q;
        std::sort(next.begin(), next.end());
        if (!visited.insert(next).second) continue;
        frontier.insert({detail::rank_sum(ranked, next), std::move(next)});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pool.

struct PoolConfig {
  std::vector<std::size_t> sizes{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t num_combos = 10;

  void validate(std::size_t ranked_count) const {
    if (sizes.empty()) throw ConfigError("sizes: must not be empty");
    if (num_combos < 1) throw ConfigError("num_combos: must be >= 1");
    std::set<std::size_t> distinct(sizes.begin(), sizes.end());
    if (distinct.size() != sizes.size()) throw ConfigError("sizes: duplicate subset size");
    for (auto n : sizes) {
      if (n < 1) throw ConfigError("sizes: subset sizes must be >= 1");
      if (n > ranked_count)
        throw ConfigError("sizes: subset size " + std::to_string(n) + " exceeds the " + std::to_string(ranked_count) +
                          " ranked features");
      if (detail::binomial(ranked_count, n) < num_combos)
        throw ConfigError("num_combos: only " + std::to_string(detail::binomial(ranked_count, n)) +
                          " distinct subsets of size " + std::to_string(n) + " exist");
    }
  }

  std::size_t pool_size() const { return sizes.size() * num_combos; }
};

struct PlannedMember {
  std::size_t size = 0;
  FeatureSubset subset;
  double heuristic_score = 0.0;
};

// Subsets of the pool in generation order (size by size, best first).
inline std::vector<PlannedMember> plan_pool(std::span<const RankedFeature> ranked, const PoolConfig& config) {
  config.validate(ranked.size());
  std::vector<PlannedMember> plan;
  for (auto n : config.sizes)
    for (auto& s : k_best_subsets(ranked, n, config.num_combos)) plan.push_back({n, s.subset(), s.score});
  return plan;
}

struct PoolMember {
  int id = 0;
  std::size_t size = 0;
  FeatureSubset subset;
  double heuristic_score = 0.0;
  EnsembleModel model;
};

struct ClassifierPool {
  std::vector<PoolMember> members;
  PoolConfig config;
};

// Trains one ensemble per planned subset.  Member i uses seed mix(seed, i).
inline ClassifierPool build_pool(const FlowSet& train, const std::map<int, double>& importances,
                                 const PoolConfig& config, const EnsembleParams& params, std::uint64_t seed) {
  const auto ranked = rank_features(importances);
  const auto plan = plan_pool(ranked, config);
  const auto labels = train.labels();
  ClassifierPool pool;
  pool.config = config;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& p = plan[i];
    try {
      const auto x = encode_flows(train.flows, p.subset);
      auto model = train_ensemble(x, labels, p.subset, params, detail::mix_seed(seed, i));
      pool.members.push_back({static_cast<int>(i), p.size, p.subset, p.heuristic_score, std::move(model)});
    } catch (const Error& e) {
      throw TrainingError("pool member " + std::to_string(i) + " (" + p.subset.to_string() + "): " + e.what());
    }
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Pool manifest: CSV, one row per member.  model_path is relative to the
// manifest's directory.

struct ManifestRow {
  int member_id = 0;
  std::size_t size = 0;
  FeatureSubset subset;
  double heuristic_score = 0.0;
  std::string model_path;
  double heldout_f1 = 0.0;
};

inline std::string manifest_csv(std::span<const ManifestRow> rows) {
  std::ostringstream out;
  out << "member_id,size,subset,heuristic_score,model_path,heldout_f1\n";
  for (const auto& r : rows)
    out << r.member_id << ',' << r.size << ',' << r.subset.to_string() << ',' << detail::format_double(r.heuristic_score)
        << ',' << r.model_path << ',' << detail::format_double(r.heldout_f1) << '\n';
  return out.str();
}

inline std::vector<ManifestRow> parse_manifest(std::string_view text) {
  const auto table = detail::parse_csv(text);
  const auto c_id = table.column("member_id"), c_size = table.column("size"), c_subset = table.column("subset"),
             c_score = table.column("heuristic_score"), c_path = table.column("model_path"),
             c_f1 = table.column("heldout_f1");
  std::vector<ManifestRow> rows;
  std::set<int> ids;
  for (const auto& r : table.rows) {
    ManifestRow m;
    m.member_id = detail::parse_int<int>(r[c_id], "member_id");
    m.size = detail::parse_int<std::size_t>(r[c_size], "size");
    m.subset = FeatureSubset::parse(r[c_subset]);
    m.heuristic_score = detail::parse_double(r[c_score], "heuristic_score");
    m.model_path = std::string(detail::trim(r[c_path]));
    m.heldout_f1 = detail::parse_double(r[c_f1], "heldout_f1");
    if (!ids.insert(m.member_id).second)
      throw FormatError("manifest: duplicate member_id " + std::to_string(m.member_id));
    rows.push_back(std::move(m));
  }
  return rows;
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(detail::read_file(path.string()));
}

}  // namespace acdc
