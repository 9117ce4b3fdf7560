// ensemble.hpp - gradient-boosted decision trees over ternary feature vectors.
//
// Multiclass softmax boosting: every round fits one regression tree per class
// to the Newton step of the cross-entropy loss.  Inputs take values in
// {-1, 0, 1}, so each column has at most two useful split points and tree
// growth runs on exact three-bin histograms.  Constant and duplicate columns
// are removed before training; splits always refer to original columns.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "acdc/detail/random.hpp"
#include "acdc/detail/text.hpp"
#include "acdc/encode.hpp"
#include "acdc/error.hpp"
#include "json.hpp"

namespace acdc {

struct EnsembleParams {
  int num_rounds = 50;
  int max_depth = 6;
  double learning_rate = 0.1;
  double l2 = 1.0;
  int min_samples_leaf = 2;
  double bagging_fraction = 1.0;  // < 1 samples rows per round using the seed

  bool operator==(const EnsembleParams&) const = default;
};

struct TreeNode {
  std::int32_t column = -1;  // -1 marks a leaf
  std::int8_t threshold = 0;  // x <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double eval(std::span<const std::int8_t> x) const {
    std::size_t i = 0;
    while (nodes[i].column >= 0)
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].column)] <= nodes[i].threshold ? nodes[i].left
                                                                                                      : nodes[i].right);
    return nodes[i].value;
  }

  bool operator==(const Tree&) const = default;
};

class EnsembleModel {
 public:
  FeatureSubset subset;
  int k_packets = kDefaultEncodedPackets;
  std::vector<ClassId> classes;
  EnsembleParams params;
  std::uint64_t train_seed = 0;
  std::vector<double> base_score;  // per class
  std::vector<Tree> trees;         // round-major: trees[round * classes + class]

  std::size_t input_length() const { return encoded_length(subset, k_packets); }

  void check_length(std::size_t n) const {
    if (n != input_length())
      throw ShapeError("vector length " + std::to_string(n) + " does not match model input length " +
                       std::to_string(input_length()) + " for subset " + subset.to_string());
  }

  // Raw per-class scores (logits).
  void scores(std::span<const std::int8_t> x, std::span<double> out) const {
    const std::size_t k = classes.size();
    std::copy(base_score.begin(), base_score.end(), out.begin());
    for (std::size_t t = 0; t < trees.size(); ++t) out[t % k] += trees[t].eval(x);
  }

  ClassId predict_one(std::span<const std::int8_t> x) const {
    check_length(x.size());
    std::vector<double> s(classes.size());
    scores(x, s);
    return classes[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())];
  }

  std::vector<ClassId> predict(const FeatureMatrix& m) const {
    if (m.rows > 0) check_length(m.cols);
    std::vector<ClassId> out(m.rows);
    std::vector<double> s(classes.size());
    for (std::size_t i = 0; i < m.rows; ++i) {
      scores(m.row(i), s);
      out[i] = classes[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())];
    }
    return out;
  }

  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& t : trees) n += t.nodes.size();
    return n;
  }

  // Approximate resident size of a loaded model.
  std::size_t footprint_bytes() const {
    return sizeof(*this) + node_count() * sizeof(TreeNode) + trees.size() * sizeof(Tree) +
           classes.size() * (sizeof(ClassId) + sizeof(double));
  }

  bool operator==(const EnsembleModel&) const = default;
};

namespace detail {

struct BinStats {
  double g[3] = {0, 0, 0};
  double h[3] = {0, 0, 0};
  std::uint32_t n[3] = {0, 0, 0};
};

// Column-major view of the deduplicated, non-constant columns, values stored
// as bins 0/1/2 for -1/0/1.
struct BinnedColumns {
  std::size_t rows = 0;
  std::vector<std::int32_t> original;  // original column of each kept column
  std::vector<std::uint8_t> bins;      // kept.size() x rows

  const std::uint8_t* column(std::size_t k) const { return bins.data() + k * rows; }
};

inline BinnedColumns bin_columns(const FeatureMatrix& x) {
  BinnedColumns out;
  out.rows = x.rows;
  std::vector<std::uint8_t> col(x.rows);
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;  // hash -> kept indices
  for (std::size_t c = 0; c < x.cols; ++c) {
    bool constant = true;
    std::uint64_t hash = 1469598103934665603ULL;
    for (std::size_t r = 0; r < x.rows; ++r) {
      col[r] = static_cast<std::uint8_t>(x.at(r, c) + 1);
      constant = constant && col[r] == col[0];
      hash = (hash ^ col[r]) * 1099511628211ULL;
    }
    if (constant) continue;
    auto& bucket = seen[hash];
    bool duplicate = false;
    for (auto k : bucket)
      if (std::equal(col.begin(), col.end(), out.column(k))) {
        duplicate = true;
        break;
      }
    if (duplicate) continue;
    bucket.push_back(out.original.size());
    out.original.push_back(static_cast<std::int32_t>(c));
    out.bins.insert(out.bins.end(), col.begin(), col.end());
  }
  return out;
}

class TreeBuilder {
 public:
  TreeBuilder(const BinnedColumns& cols, const EnsembleParams& params) : cols_(cols), params_(params) {}

  // Fits one tree to (grad, hess) over the given rows; writes each row's leaf
  // value into row_values.
  Tree build(std::span<const double> grad, std::span<const double> hess, std::vector<std::uint32_t> rows,
             std::span<double> row_values) {
    grad_ = grad;
    hess_ = hess;
    Tree tree;
    tree.nodes.emplace_back();
    auto hist = histogram(rows);
    grow(tree, 0, std::move(rows), std::move(hist), 0, row_values);
    return tree;
  }

 private:
  struct Split {
    double gain = 0.0;
    std::size_t feature = 0;
    int bin = -1;  // rows with bin <= this go left
  };

  std::vector<BinStats> histogram(const std::vector<std::uint32_t>& rows) const {
    std::vector<BinStats> hist(cols_.original.size());
    for (std::size_t f = 0; f < hist.size(); ++f) {
      const std::uint8_t* col = cols_.column(f);
      auto& h = hist[f];
      for (auto r : rows) {
        const auto b = col[r];
        h.g[b] += grad_[r];
        h.h[b] += hess_[r];
        ++h.n[b];
      }
    }
    return hist;
  }

  double leaf_value(double g, double h) const { return -params_.learning_rate * g / (h + params_.l2); }

  Split best_split(const std::vector<BinStats>& hist, double g, double h, std::size_t n) const {
    Split best;
    const double parent = g * g / (h + params_.l2);
    const auto min_leaf = static_cast<std::uint32_t>(std::max(1, params_.min_samples_leaf));
    for (std::size_t f = 0; f < hist.size(); ++f) {
      const auto& s = hist[f];
      double gl = 0.0, hl = 0.0;
      std::uint32_t nl = 0;
      for (int b = 0; b < 2; ++b) {
        gl += s.g[b];
        hl += s.h[b];
        nl += s.n[b];
        const auto nr = static_cast<std::uint32_t>(n) - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double gr = g - gl, hr = h - hl;
        const double gain = gl * gl / (hl + params_.l2) + gr * gr / (hr + params_.l2) - parent;
        if (gain > best.gain + 1e-12) best = Split{gain, f, b};
      }
    }
    return best;
  }

  void grow(Tree& tree, std::size_t node, std::vector<std::uint32_t> rows, std::vector<BinStats> hist, int depth,
            std::span<double> row_values) {
    double g = 0.0, h = 0.0;
    if (!hist.empty()) {
      for (int b = 0; b < 3; ++b) {
        g += hist[0].g[b];
        h += hist[0].h[b];
      }
    } else {
      for (auto r : rows) {
        g += grad_[r];
        h += hess_[r];
      }
    }
    Split split;
    if (depth < params_.max_depth && !hist.empty()) split = best_split(hist, g, h, rows.size());
    if (split.bin < 0) {
      const double v = leaf_value(g, h);
      tree.nodes[node].value = v;
      for (auto r : rows) row_values[r] = v;
      return;
    }
    const std::uint8_t* col = cols_.column(split.feature);
    std::vector<std::uint32_t> left, right;
    for (auto r : rows) (col[r] <= split.bin ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    // Histogram subtraction: scan the smaller child, derive the larger one.
    std::vector<BinStats> small_hist, large_hist;
    const bool left_small = left.size() <= right.size();
    if (depth + 1 < params_.max_depth) {
      small_hist = histogram(left_small ? left : right);
      large_hist = std::move(hist);
      for (std::size_t f = 0; f < large_hist.size(); ++f)
        for (int b = 0; b < 3; ++b) {
          large_hist[f].g[b] -= small_hist[f].g[b];
          large_hist[f].h[b] -= small_hist[f].h[b];
          large_hist[f].n[b] -= small_hist[f].n[b];
        }
    }
    const auto l = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[node].column = cols_.original[split.feature];
    tree.nodes[node].threshold = static_cast<std::int8_t>(split.bin - 1);
    tree.nodes[node].left = l;
    tree.nodes[node].right = l + 1;
    auto& lh = left_small ? small_hist : large_hist;
    auto& rh = left_small ? large_hist : small_hist;
    grow(tree, static_cast<std::size_t>(l), std::move(left), std::move(lh), depth + 1, row_values);
    grow(tree, static_cast<std::size_t>(l + 1), std::move(right), std::move(rh), depth + 1, row_values);
  }

  const BinnedColumns& cols_;
  const EnsembleParams& params_;
  std::span<const double> grad_;
  std::span<const double> hess_;
};

}  // namespace detail

// Trains on encoded vectors x (rows) with labels y.  Deterministic in
// (x, y, subset, params, seed).
inline EnsembleModel train_ensemble(const FeatureMatrix& x, std::span<const ClassId> y, const FeatureSubset& subset,
                                    const EnsembleParams& params = {}, std::uint64_t seed = 0,
                                    int k_packets = kDefaultEncodedPackets) {
  if (x.rows != y.size())
    throw ShapeError("train_ensemble: " + std::to_string(x.rows) + " vectors but " + std::to_string(y.size()) +
                     " labels");
  if (x.cols != encoded_length(subset, k_packets))
    throw ShapeError("train_ensemble: vector length " + std::to_string(x.cols) + " does not match subset " +
                     subset.to_string() + " (" + std::to_string(encoded_length(subset, k_packets)) + ")");
  if (params.num_rounds < 1 || params.max_depth < 1 || !(params.learning_rate > 0.0))
    throw ArgumentError("train_ensemble: invalid hyperparameters");

  EnsembleModel model;
  model.subset = subset;
  model.k_packets = k_packets;
  model.params = params;
  model.train_seed = seed;
  model.classes.assign(y.begin(), y.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2)
    throw TrainingError("train_ensemble: need at least 2 classes, got " + std::to_string(model.classes.size()));

  const std::size_t n = x.rows;
  const std::size_t k = model.classes.size();
  std::vector<std::size_t> label_index(n);
  std::vector<double> counts(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    label_index[i] = static_cast<std::size_t>(std::lower_bound(model.classes.begin(), model.classes.end(), y[i]) -
                                              model.classes.begin());
    counts[label_index[i]] += 1.0;
  }
  model.base_score.resize(k);
  for (std::size_t c = 0; c < k; ++c) model.base_score[c] = std::log(counts[c] / static_cast<double>(n));

  const auto cols = detail::bin_columns(x);
  detail::TreeBuilder builder(cols, params);

  std::vector<double> f(n * k);  // current logits
  for (std::size_t i = 0; i < n; ++i)
    std::copy(model.base_score.begin(), model.base_score.end(), f.begin() + static_cast<std::ptrdiff_t>(i * k));
  std::vector<double> prob(n * k), grad(n), hess(n), leaf(n);
  detail::Rng rng(seed);

  for (int round = 0; round < params.num_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* fi = f.data() + i * k;
      const double mx = *std::max_element(fi, fi + k);
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) z += (prob[i * k + c] = std::exp(fi[c] - mx));
      for (std::size_t c = 0; c < k; ++c) prob[i * k + c] /= z;
    }
    std::vector<std::uint32_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      if (params.bagging_fraction >= 1.0 || rng.bernoulli(params.bagging_fraction))
        rows.push_back(static_cast<std::uint32_t>(i));
    if (rows.empty()) rows.push_back(0);

    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * k + c];
        grad[i] = p - (label_index[i] == c ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-6);
      }
      auto tree = builder.build(grad, hess, rows, leaf);
      if (params.bagging_fraction < 1.0) {
        for (std::size_t i = 0; i < n; ++i) f[i * k + c] += tree.eval(x.row(i));
      } else {
        for (std::size_t i = 0; i < n; ++i) f[i * k + c] += leaf[i];
      }
      model.trees.push_back(std::move(tree));
    }
  }
  return model;
}

inline std::vector<ClassId> predict(const EnsembleModel& model, const FeatureMatrix& vectors) {
  return model.predict(vectors);
}

// ---------------------------------------------------------------------------
// Serialization (JSON, versioned).  Doubles are written with round-trip
// precision, so a reloaded model predicts identically.

inline constexpr int kEnsembleFormatVersion = 1;

inline nlohmann::json ensemble_to_json(const EnsembleModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    std::vector<std::int32_t> col, left, right;
    std::vector<int> thr;
    std::vector<double> val;
    for (const auto& nd : t.nodes) {
      col.push_back(nd.column);
      thr.push_back(nd.threshold);
      left.push_back(nd.left);
      right.push_back(nd.right);
      val.push_back(nd.value);
    }
    trees.push_back({{"col", col}, {"thr", thr}, {"left", left}, {"right", right}, {"value", val}});
  }
  std::vector<int> ids(m.subset.ids().begin(), m.subset.ids().end());
  return {{"format", "acdc-ensemble"},
          {"version", kEnsembleFormatVersion},
          {"subset", ids},
          {"subset_names", m.subset.to_string()},
          {"k_packets", m.k_packets},
          {"classes", m.classes},
          {"params",
           {{"num_rounds", m.params.num_rounds},
            {"max_depth", m.params.max_depth},
            {"learning_rate", m.params.learning_rate},
            {"l2", m.params.l2},
            {"min_samples_leaf", m.params.min_samples_leaf},
            {"bagging_fraction", m.params.bagging_fraction}}},
          {"train_seed", m.train_seed},
          {"base_score", m.base_score},
          {"trees", trees}};
}

inline EnsembleModel ensemble_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "acdc-ensemble") throw FormatError("not an acdc-ensemble document");
    if (j.at("version").get<int>() != kEnsembleFormatVersion)
      throw FormatError("unsupported ensemble version " + j.at("version").dump());
    EnsembleModel m;
    m.subset = FeatureSubset(j.at("subset").get<std::vector<int>>());
    m.k_packets = j.at("k_packets").get<int>();
    m.classes = j.at("classes").get<std::vector<ClassId>>();
    const auto& p = j.at("params");
    m.params.num_rounds = p.at("num_rounds").get<int>();
    m.params.max_depth = p.at("max_depth").get<int>();
    m.params.learning_rate = p.at("learning_rate").get<double>();
    m.params.l2 = p.at("l2").get<double>();
    m.params.min_samples_leaf = p.at("min_samples_leaf").get<int>();
    m.params.bagging_fraction = p.at("bagging_fraction").get<double>();
    m.train_seed = j.at("train_seed").get<std::uint64_t>();
    m.base_score = j.at("base_score").get<std::vector<double>>();
    const auto length = static_cast<std::int32_t>(m.input_length());
    for (const auto& jt : j.at("trees")) {
      const auto col = jt.at("col").get<std::vector<std::int32_t>>();
      const auto thr = jt.at("thr").get<std::vector<int>>();
      const auto left = jt.at("left").get<std::vector<std::int32_t>>();
      const auto right = jt.at("right").get<std::vector<std::int32_t>>();
      const auto val = jt.at("value").get<std::vector<double>>();
      const auto n = col.size();
      if (thr.size() != n || left.size() != n || right.size() != n || val.size() != n || n == 0)
        throw FormatError("inconsistent tree arrays");
      Tree t;
      for (std::size_t i = 0; i < n; ++i) {
        if (col[i] >= length) throw FormatError("tree split column out of range");
        if (col[i] >= 0 && (left[i] <= static_cast<std::int32_t>(i) || right[i] <= static_cast<std::int32_t>(i) ||
                            left[i] >= static_cast<std::int32_t>(n) || right[i] >= static_cast<std::int32_t>(n)))
          throw FormatError("tree child index out of range");
        t.nodes.push_back(TreeNode{col[i], static_cast<std::int8_t>(thr[i]), left[i], right[i], val[i]});
      }
      m.trees.push_back(std::move(t));
    }
    if (m.classes.size() < 2 || m.base_score.size() != m.classes.size() || m.trees.size() % m.classes.size() != 0)
      throw FormatError("inconsistent class/tree counts");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ensemble: ") + e.what());
  }
}

inline void save_ensemble(const std::filesystem::path& path, const EnsembleModel& m) {
  detail::write_file(path.string(), ensemble_to_json(m).dump());
}

inline EnsembleModel load_ensemble(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return ensemble_from_json(j);
}

}  // namespace acdc
