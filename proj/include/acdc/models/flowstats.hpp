// flowstats.hpp - flow-statistics baseline classifier.
//
// Features: payload sizes and inter-arrival times of the first four packets
// with a non-zero payload (8 values).  The first inter-arrival time is
// measured from the flow's first packet.  Each class is modelled by a
// diagonal-covariance Gaussian mixture fitted with EM on log-transformed
// features; prediction is argmax of prior x mixture likelihood.  Flows with
// fewer than four non-empty packets are assigned the most probable class.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/error.hpp"
#include "acdc/traffic.hpp"

namespace acdc {

inline constexpr std::size_t kFlowStatsDims = 8;
using FlowStatsFeatures = std::array<double, kFlowStatsDims>;

// Sizes in [0..3], inter-arrival times (seconds) in [4..7].
inline std::optional<FlowStatsFeatures> flowstats_features(const FlowRecord& flow) {
  FlowStatsFeatures out{};
  std::size_t found = 0;
  double prev = flow.packets.empty() ? 0.0 : flow.packets.front().timestamp;
  for (const auto& p : flow.packets) {
    if (p.payload_len == 0) continue;
    out[found] = static_cast<double>(p.payload_len);
    out[4 + found] = p.timestamp - prev;
    prev = p.timestamp;
    if (++found == 4) return out;
  }
  return std::nullopt;
}

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<FlowStatsFeatures> means;
  std::vector<FlowStatsFeatures> variances;
  std::vector<double> log_likelihood_trace;  // total log-likelihood after each EM iteration

  double log_density(const FlowStatsFeatures& x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(weights.size());
    for (std::size_t m = 0; m < weights.size(); ++m) {
      double lp = weights[m] > 0.0 ? std::log(weights[m]) : -std::numeric_limits<double>::infinity();
      for (std::size_t d = 0; d < kFlowStatsDims; ++d) {
        const double diff = x[d] - means[m][d];
        lp -= 0.5 * (std::log(2.0 * 3.14159265358979323846 * variances[m][d]) + diff * diff / variances[m][d]);
      }
      terms[m] = lp;
      best = std::max(best, lp);
    }
    if (!std::isfinite(best)) return best;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
  }
};

struct FlowStatsParams {
  std::size_t components_per_class = 2;
  double variance_floor = 1e-6;
  double tolerance = 1e-6;
  int max_iterations = 200;
};

struct FlowStatsModel {
  std::map<ClassId, double> priors;
  std::map<ClassId, GaussianMixture> mixtures;  // classes with at least one full feature vector
  FlowStatsParams params;

  ClassId most_probable() const {
    return std::max_element(priors.begin(), priors.end(), [](const auto& a, const auto& b) {
             return a.second < b.second;
           })->first;
  }
};

namespace detail {

inline FlowStatsFeatures transform_flowstats(const FlowStatsFeatures& raw) {
  FlowStatsFeatures out;
  for (std::size_t d = 0; d < 4; ++d) out[d] = std::log1p(raw[d]);
  for (std::size_t d = 4; d < 8; ++d) out[d] = std::log1p(std::max(0.0, raw[d]) * 1000.0);
  return out;
}

inline GaussianMixture fit_mixture(const std::vector<FlowStatsFeatures>& data, std::size_t components,
                                   const FlowStatsParams& params, Rng& rng) {
  const std::size_t n = data.size();
  const std::size_t m_count = std::max<std::size_t>(1, std::min(components, n));
  GaussianMixture gm;

  FlowStatsFeatures mean{}, var{};
  for (const auto& x : data)
    for (std::size_t d = 0; d < kFlowStatsDims; ++d) mean[d] += x[d] / static_cast<double>(n);
  for (const auto& x : data)
    for (std::size_t d = 0; d < kFlowStatsDims; ++d) var[d] += (x[d] - mean[d]) * (x[d] - mean[d]) / static_cast<double>(n);
  for (auto& v : var) v = std::max(v, params.variance_floor);

  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(std::span(idx));
  for (std::size_t m = 0; m < m_count; ++m) {
    gm.weights.push_back(1.0 / static_cast<double>(m_count));
    gm.means.push_back(data[idx[m]]);
    gm.variances.push_back(var);
  }

  std::vector<double> resp(n * m_count);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < m_count; ++m) {
        double lp = gm.weights[m] > 0.0 ? std::log(gm.weights[m]) : -std::numeric_limits<double>::infinity();
        for (std::size_t d = 0; d < kFlowStatsDims; ++d) {
          const double diff = data[i][d] - gm.means[m][d];
          lp -= 0.5 * (std::log(2.0 * 3.14159265358979323846 * gm.variances[m][d]) + diff * diff / gm.variances[m][d]);
        }
        resp[i * m_count + m] = lp;
        best = std::max(best, lp);
      }
      double s = 0.0;
      for (std::size_t m = 0; m < m_count; ++m) s += std::exp(resp[i * m_count + m] - best);
      const double lse = best + std::log(s);
      ll += lse;
      for (std::size_t m = 0; m < m_count; ++m) resp[i * m_count + m] = std::exp(resp[i * m_count + m] - lse);
    }
    gm.log_likelihood_trace.push_back(ll);
    if (iter > 0 && std::abs(ll - prev_ll) < params.tolerance) break;
    prev_ll = ll;

    // M-step
    for (std::size_t m = 0; m < m_count; ++m) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp[i * m_count + m];
      gm.weights[m] = nk / static_cast<double>(n);
      if (nk <= 0.0) continue;
      FlowStatsFeatures mu{}, sig{};
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < kFlowStatsDims; ++d) mu[d] += resp[i * m_count + m] * data[i][d];
      for (auto& v : mu) v /= nk;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < kFlowStatsDims; ++d) {
          const double diff = data[i][d] - mu[d];
          sig[d] += resp[i * m_count + m] * diff * diff;
        }
      for (auto& v : sig) v = std::max(v / nk, params.variance_floor);
      gm.means[m] = mu;
      gm.variances[m] = sig;
    }
  }
  return gm;
}

}  // namespace detail

inline FlowStatsModel train_flowstats(const FlowSet& train, const FlowStatsParams& params, std::uint64_t seed) {
  if (train.empty()) throw TrainingError("train_flowstats: empty training set");
  if (params.components_per_class < 1) throw ArgumentError("train_flowstats: components_per_class must be >= 1");
  FlowStatsModel model;
  model.params = params;
  std::map<ClassId, std::vector<FlowStatsFeatures>> by_class;
  for (const auto& f : train.flows) {
    model.priors[f.label] += 1.0;
    if (auto feats = flowstats_features(f)) by_class[f.label].push_back(detail::transform_flowstats(*feats));
  }
  for (auto& [cls, p] : model.priors) p /= static_cast<double>(train.size());
  for (const auto& [cls, data] : by_class) {
    detail::Rng rng(detail::mix_seed(seed, static_cast<std::uint64_t>(cls)));
    model.mixtures[cls] = detail::fit_mixture(data, params.components_per_class, params, rng);
  }
  return model;
}

inline std::vector<ClassId> predict_flowstats(const FlowStatsModel& model, std::span<const FlowRecord> flows) {
  std::vector<ClassId> out;
  out.reserve(flows.size());
  const ClassId fallback = model.most_probable();
  for (const auto& f : flows) {
    const auto feats = flowstats_features(f);
    if (!feats || model.mixtures.empty()) {
      out.push_back(fallback);
      continue;
    }
    const auto x = detail::transform_flowstats(*feats);
    ClassId best = fallback;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [cls, gm] : model.mixtures) {
      const double s = std::log(model.priors.at(cls)) + gm.log_density(x);
      if (s > best_score) {
        best_score = s;
        best = cls;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace acdc
