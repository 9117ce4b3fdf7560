#pragma once

#include <map>
#include <span>

#include "acdc/error.hpp"
#include "acdc/traffic.hpp"

namespace acdc {

// Support-weighted mean of per-class F1 over the classes present in truth.
// Classes only ever predicted get zero weight but still cost precision.
inline double weighted_f1(std::span<const ClassId> truth, std::span<const ClassId> pred) {
  if (truth.size() != pred.size())
    throw ArgumentError("weighted_f1: truth has " + std::to_string(truth.size()) + " labels, pred has " +
                        std::to_string(pred.size()));
  if (truth.empty()) throw ArgumentError("weighted_f1: empty input");

  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
  };
  std::map<ClassId, Counts> per_class;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++per_class[truth[i]].support;
    if (truth[i] == pred[i]) {
      ++per_class[truth[i]].tp;
    } else {
      ++per_class[pred[i]].fp;
      ++per_class[truth[i]].fn;
    }
  }
  double total = 0.0;
  for (const auto& [cls, c] : per_class) {
    if (c.support == 0 || c.tp == 0) continue;
    const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    total += static_cast<double>(c.support) * (2.0 * precision * recall / (precision + recall));
  }
  return total / static_cast<double>(truth.size());
}

}  // namespace acdc
