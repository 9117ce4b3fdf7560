// importance.hpp - field-granular permutation feature importance.

#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/encode.hpp"
#include "acdc/models/ensemble.hpp"
#include "acdc/models/metrics.hpp"

namespace acdc {

struct ImportanceReport {
  std::map<int, double> importance;  // field id -> mean weighted-F1 drop
  double baseline_f1 = 0.0;
  int n_repeats = 0;
  std::uint64_t seed = 0;

  bool operator==(const ImportanceReport&) const = default;
};

// For each field, permutes all of that field's columns (every encoded packet)
// jointly across samples and records the mean drop in weighted F1 over
// n_repeats permutations.  fields defaults to the model's whole subset.
inline ImportanceReport permutation_importance(const EnsembleModel& model, const FeatureMatrix& x,
                                               std::span<const ClassId> y, int n_repeats, std::uint64_t seed,
                                               std::span<const int> fields = {}) {
  if (x.rows == 0) throw ArgumentError("permutation_importance: empty evaluation set");
  if (x.rows != y.size()) throw ArgumentError("permutation_importance: label count mismatch");
  if (n_repeats < 1) throw ArgumentError("permutation_importance: n_repeats must be >= 1");
  if (fields.empty()) fields = model.subset.ids();
  for (int id : fields)
    if (!model.subset.contains(id))
      throw ArgumentError("permutation_importance: field " + field_by_id(id).qualified_name() +
                          " is not in the model subset " + model.subset.to_string());

  ImportanceReport report;
  report.n_repeats = n_repeats;
  report.seed = seed;
  report.baseline_f1 = weighted_f1(y, model.predict(x));

  FeatureMatrix permuted = x;
  std::vector<std::size_t> perm(x.rows);
  for (int id : fields) {
    const auto cols = field_columns(model.subset, id, model.k_packets);
    double drop_sum = 0.0;
    for (int r = 0; r < n_repeats; ++r) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      detail::Rng rng(detail::mix_seed(seed, static_cast<std::uint64_t>(id) * 1000003ULL + static_cast<std::uint64_t>(r)));
      rng.shuffle(std::span(perm));
      for (std::size_t i = 0; i < x.rows; ++i)
        for (auto c : cols) permuted.data[i * x.cols + c] = x.data[perm[i] * x.cols + c];
      drop_sum += report.baseline_f1 - weighted_f1(y, model.predict(permuted));
    }
    for (std::size_t i = 0; i < x.rows; ++i)
      for (auto c : cols) permuted.data[i * x.cols + c] = x.data[i * x.cols + c];
    report.importance[id] = drop_sum / n_repeats;
  }
  return report;
}

}  // namespace acdc
