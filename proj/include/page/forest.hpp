#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "page/dataset.hpp"
#include "page/ears.hpp"
#include "page/parallel.hpp"
#include "page/rng.hpp"
#include "page/textfeat.hpp"

namespace page {

inline constexpr const char* kForestSchema = "page-forest/1";

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Number of features inspected per split.
struct MaxFeatures {
  enum class Rule { Sqrt, All, Fixed };
  Rule rule = Rule::Sqrt;
  std::size_t count = 0;  // Fixed only

  static MaxFeatures sqrt() { return {}; }
  static MaxFeatures all() { return {Rule::All, 0}; }
  static MaxFeatures fixed(std::size_t n) { return {Rule::Fixed, n}; }

  std::size_t resolve(std::size_t n_features) const {
    if (n_features == 0) return 0;
    switch (rule) {
      case Rule::Sqrt:
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))));
      case Rule::All: return n_features;
      case Rule::Fixed: return std::clamp<std::size_t>(count, 1, n_features);
    }
    return n_features;
  }
  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

struct HyperParams {
  std::size_t n_estimators = 100;
  std::optional<std::size_t> max_depth = 10;  // nullopt: unlimited
  std::size_t min_samples_split = 5;
  MaxFeatures max_features = MaxFeatures::sqrt();
  bool bootstrap = true;  // off only in tests

  void validate() const {
    if (n_estimators == 0) throw std::invalid_argument("n_estimators must be positive");
    if (max_depth && *max_depth == 0) throw std::invalid_argument("max_depth must be positive or unlimited");
    if (min_samples_split < 2) throw std::invalid_argument("min_samples_split must be at least 2");
    if (max_features.rule == MaxFeatures::Rule::Fixed && max_features.count == 0) {
      throw std::invalid_argument("max_features must be positive");
    }
  }

  std::string describe() const {
    std::ostringstream out;
    out << "n_estimators=" << n_estimators << " max_depth=";
    if (max_depth) out << *max_depth;
    else out << "unlimited";
    out << " min_samples_split=" << min_samples_split;
    return out.str();
  }

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

/// n_estimators {50,100,200} x max_depth {5,10,unlimited} x min_samples_split {2,5,10}.
inline std::vector<HyperParams> default_grid() {
  std::vector<HyperParams> grid;
  for (std::size_t trees : {50, 100, 200}) {
    for (std::optional<std::size_t> depth : {std::optional<std::size_t>(5), std::optional<std::size_t>(10),
                                             std::optional<std::size_t>()}) {
      for (std::size_t split : {2, 5, 10}) {
        HyperParams p;
        p.n_estimators = trees;
        p.max_depth = depth;
        p.min_samples_split = split;
        grid.push_back(p);
      }
    }
  }
  return grid;
}

/// Column-major dense copy of a set of sparse vectors, used during training.
class FeatureMatrix {
 public:
  FeatureMatrix(std::span<const FeatureVector> rows, std::size_t n_features)
      : n_rows_(rows.size()), n_features_(n_features), values_(n_rows_ * n_features_, 0.0) {
    for (std::size_t r = 0; r < n_rows_; ++r) {
      for (const auto& [index, weight] : rows[r].entries) {
        if (index >= n_features_) throw std::out_of_range("feature index beyond matrix width");
        values_[static_cast<std::size_t>(index) * n_rows_ + r] = weight;
      }
    }
  }

  std::size_t rows() const noexcept { return n_rows_; }
  std::size_t features() const noexcept { return n_features_; }
  double operator()(std::size_t row, std::size_t feature) const noexcept { return values_[feature * n_rows_ + row]; }

 private:
  std::size_t n_rows_;
  std::size_t n_features_;
  std::vector<double> values_;
};

using ClassCounts = std::array<std::uint32_t, kNumCategories>;

/// Majority class; ties resolved by canonical order.
inline EarsCategory majority(const ClassCounts& counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumCategories; ++c) {
    if (counts[c] > counts[best]) best = c;
  }
  return category_at(best);
}

inline double gini(const ClassCounts& counts, std::size_t total) {
  if (total == 0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when value <= threshold
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  ClassCounts counts{};

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  /// Longest root-to-leaf path, in edges.
  std::size_t depth() const {
    if (nodes_.empty()) return 0;
    std::size_t deepest = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [id, d] = stack.back();
      stack.pop_back();
      const auto& node = nodes_[id];
      if (node.is_leaf()) {
        deepest = std::max(deepest, d);
      } else {
        stack.emplace_back(node.left, d + 1);
        stack.emplace_back(node.right, d + 1);
      }
    }
    return deepest;
  }

  template <typename ValueAt>
  const TreeNode& leaf_for(ValueAt&& value_at) const {
    if (nodes_.empty()) throw ModelError("empty decision tree");
    std::uint32_t id = 0;
    while (!nodes_[id].is_leaf()) {
      const auto& node = nodes_[id];
      id = value_at(static_cast<std::uint32_t>(node.feature)) <= node.threshold ? node.left : node.right;
    }
    return nodes_[id];
  }

  EarsCategory predict(const FeatureVector& v) const {
    return majority(leaf_for([&](std::uint32_t f) { return v.at(f); }).counts);
  }

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const EarsCategory> y, const HyperParams& params, Rng& rng)
      : x_(x), y_(y), params_(params), rng_(rng), per_split_(params.max_features.resolve(x.features())) {
    feature_order_.resize(x.features());
    for (std::size_t f = 0; f < feature_order_.size(); ++f) feature_order_[f] = f;
  }

  DecisionTree build(std::vector<std::size_t> samples) {
    nodes_.clear();
    grow(std::move(samples), 0);
    return DecisionTree(std::move(nodes_));
  }

 private:
  struct Split {
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  static constexpr double kEps = 1e-12;

  std::uint32_t grow(std::vector<std::size_t> samples, std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    ClassCounts counts{};
    for (std::size_t s : samples) ++counts[index_of(y_[s])];
    nodes_[id].counts = counts;

    const double parent = gini(counts, samples.size());
    const bool depth_reached = params_.max_depth && depth >= *params_.max_depth;
    if (depth_reached || parent <= 0.0 || samples.size() < params_.min_samples_split) return id;

    auto split = best_split(samples, counts);
    if (!split || !(split->impurity < parent - kEps)) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t s : samples) {
      (x_(s, split->feature) <= split->threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    nodes_[id].feature = static_cast<std::int32_t>(split->feature);
    nodes_[id].threshold = split->threshold;
    const auto l = grow(std::move(left), depth + 1);
    nodes_[id].left = l;
    const auto r = grow(std::move(right), depth + 1);
    nodes_[id].right = r;
    return id;
  }

  // Features are visited in a seeded random order until `per_split_`
  // non-constant ones have been evaluated. Among those, the lowest weighted
  // Gini wins; ties go to the lower feature index, then lower threshold.
  std::optional<Split> best_split(const std::vector<std::size_t>& samples, const ClassCounts& counts) {
    std::optional<Split> best;
    std::size_t evaluated = 0;
    const std::size_t n_features = feature_order_.size();
    std::vector<std::pair<double, std::size_t>> column(samples.size());
    for (std::size_t drawn = 0; drawn < n_features && evaluated < per_split_; ++drawn) {
      const auto pick = drawn + static_cast<std::size_t>(uniform_below(rng_, n_features - drawn));
      std::swap(feature_order_[drawn], feature_order_[pick]);
      const std::size_t feature = feature_order_[drawn];

      for (std::size_t i = 0; i < samples.size(); ++i) {
        column[i] = {x_(samples[i], feature), index_of(y_[samples[i]])};
      }
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;  // constant here
      ++evaluated;

      ClassCounts left{};
      const std::size_t n = column.size();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left[column[i].second];
        if (column[i].first == column[i + 1].first) continue;
        ClassCounts right{};
        for (std::size_t c = 0; c < kNumCategories; ++c) right[c] = counts[c] - left[c];
        const std::size_t n_left = i + 1;
        const std::size_t n_right = n - n_left;
        const double impurity = (static_cast<double>(n_left) * gini(left, n_left) +
                                 static_cast<double>(n_right) * gini(right, n_right)) /
                                static_cast<double>(n);
        const double threshold = column[i].first + (column[i + 1].first - column[i].first) / 2.0;
        if (!best || impurity < best->impurity - kEps ||
            (impurity <= best->impurity + kEps &&
             (feature < best->feature || (feature == best->feature && threshold < best->threshold)))) {
          best = Split{feature, threshold, impurity};
        }
      }
    }
    return best;
  }

  const FeatureMatrix& x_;
  std::span<const EarsCategory> y_;
  const HyperParams& params_;
  Rng& rng_;
  std::size_t per_split_;
  std::vector<std::size_t> feature_order_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Greedy Gini tree over the rows listed in `samples` (duplicates allowed).
inline DecisionTree train_tree(const FeatureMatrix& x, std::span<const EarsCategory> y, std::vector<std::size_t> samples,
                               const HyperParams& params, Rng& rng) {
  if (x.rows() != y.size()) throw std::invalid_argument("train_tree: feature rows and labels differ in length");
  if (samples.empty()) throw std::invalid_argument("train_tree: no training samples");
  params.validate();
  return detail::TreeBuilder(x, y, params, rng).build(std::move(samples));
}

inline DecisionTree train_tree(std::span<const FeatureVector> x, std::span<const EarsCategory> y,
                               std::size_t n_features, const HyperParams& params, Rng& rng) {
  if (x.empty()) throw std::invalid_argument("train_tree: empty input");
  std::vector<std::size_t> all(x.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return train_tree(FeatureMatrix(x, n_features), y, std::move(all), params, rng);
}

class RandomForestModel {
 public:
  HyperParams params;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;
  Vocabulary vocabulary;  // empty when trained on raw vectors

  /// Per-class vote counts over all trees.
  ClassCounts votes(const FeatureVector& v) const {
    ClassCounts tally{};
    for (const auto& tree : trees) ++tally[index_of(tree.predict(v))];
    return tally;
  }

  EarsCategory predict(const FeatureVector& v) const {
    if (trees.empty()) throw ModelError("model has no trees");
    return majority(votes(v));
  }

  EarsCategory predict_text(std::string_view text) const { return predict(vocabulary.vectorize_text(text)); }
};

/// Each tree t draws its bootstrap sample and split features from the
/// stream derive_rng(seed, t), so the result does not depend on `threads`.
inline RandomForestModel train_forest(std::span<const FeatureVector> x, std::span<const EarsCategory> y,
                                      std::size_t n_features, const HyperParams& params, std::uint64_t seed,
                                      std::size_t threads = default_threads()) {
  if (x.empty()) throw std::invalid_argument("train_forest: empty input");
  if (x.size() != y.size()) throw std::invalid_argument("train_forest: features and labels differ in length");
  params.validate();
  const FeatureMatrix matrix(x, n_features);

  RandomForestModel model;
  model.params = params;
  model.seed = seed;
  model.n_features = n_features;
  model.trees.resize(params.n_estimators);
  parallel_for(params.n_estimators, threads, [&](std::size_t t) {
    Rng rng = derive_rng(seed, t);
    std::vector<std::size_t> samples(x.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      samples[i] = params.bootstrap ? static_cast<std::size_t>(uniform_below(rng, x.size())) : i;
    }
    model.trees[t] = detail::TreeBuilder(matrix, y, params, rng).build(std::move(samples));
  });
  return model;
}

/// Fits the vocabulary on `records`, then the forest on their TF-IDF vectors.
inline RandomForestModel train_text_classifier(const std::vector<RequirementRecord>& records, const HyperParams& params,
                                               std::uint64_t seed, std::size_t threads = default_threads()) {
  if (records.empty()) throw std::invalid_argument("cannot train a classifier on no records");
  std::vector<TokenList> docs;
  docs.reserve(records.size());
  for (const auto& r : records) docs.push_back(tokenize(r.natural));
  Vocabulary vocab = Vocabulary::fit(docs);
  std::vector<FeatureVector> x;
  std::vector<EarsCategory> y;
  for (std::size_t i = 0; i < records.size(); ++i) {
    x.push_back(vocab.vectorize(docs[i]));
    y.push_back(records[i].label);
  }
  RandomForestModel model = train_forest(x, y, vocab.size(), params, seed, threads);
  model.vocabulary = std::move(vocab);
  return model;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::array<ClassMetrics, kNumCategories> per_class{};
  std::array<bool, kNumCategories> present{};  // appears in y_true or y_pred
  double accuracy = 0.0;
  ClassMetrics macro;     // support = total
  ClassMetrics weighted;  // support = total
  std::size_t total = 0;
};

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Macro and support-weighted means of per-class rows.
inline std::pair<ClassMetrics, ClassMetrics> average_rows(std::span<const ClassMetrics> rows) {
  ClassMetrics macro, weighted;
  if (rows.empty()) return {macro, weighted};
  std::size_t total = 0;
  for (const auto& row : rows) {
    macro.precision += row.precision;
    macro.recall += row.recall;
    macro.f1 += row.f1;
    weighted.precision += row.precision * static_cast<double>(row.support);
    weighted.recall += row.recall * static_cast<double>(row.support);
    weighted.f1 += row.f1 * static_cast<double>(row.support);
    total += row.support;
  }
  const auto k = static_cast<double>(rows.size());
  macro.precision /= k;
  macro.recall /= k;
  macro.f1 /= k;
  if (total > 0) {
    weighted.precision /= static_cast<double>(total);
    weighted.recall /= static_cast<double>(total);
    weighted.f1 /= static_cast<double>(total);
  }
  macro.support = weighted.support = total;
  return {macro, weighted};
}

struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumCategories>, kNumCategories> counts{};  // [true][predicted]

  std::size_t total() const {
    std::size_t sum = 0;
    for (const auto& row : counts)
      for (auto v : row) sum += v;
    return sum;
  }
  std::size_t trace() const {
    std::size_t sum = 0;
    for (std::size_t c = 0; c < kNumCategories; ++c) sum += counts[c][c];
    return sum;
  }
  std::size_t row_sum(std::size_t c) const {
    std::size_t sum = 0;
    for (auto v : counts[c]) sum += v;
    return sum;
  }
  std::size_t column_sum(std::size_t c) const {
    std::size_t sum = 0;
    for (const auto& row : counts) sum += row[c];
    return sum;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion_matrix(std::span<const EarsCategory> y_true, std::span<const EarsCategory> y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < y_true.size(); ++i) ++m.counts[index_of(y_true[i])][index_of(y_pred[i])];
  return m;
}

/// Per-class precision/recall/F1 with support, accuracy, and macro/weighted
/// averages over the classes that occur in y_true or y_pred.
inline ClassificationReport classification_report(std::span<const EarsCategory> y_true,
                                                  std::span<const EarsCategory> y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("classification_report: length mismatch");
  if (y_true.empty()) throw std::invalid_argument("classification_report: no samples");
  const ConfusionMatrix m = confusion_matrix(y_true, y_pred);
  ClassificationReport report;
  report.total = y_true.size();
  report.accuracy = static_cast<double>(m.trace()) / static_cast<double>(report.total);
  std::vector<ClassMetrics> rows;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    const std::size_t tp = m.counts[c][c];
    const std::size_t support = m.row_sum(c);
    const std::size_t predicted = m.column_sum(c);
    auto& row = report.per_class[c];
    row.support = support;
    row.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    row.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    row.f1 = f1_score(row.precision, row.recall);
    report.present[c] = support > 0 || predicted > 0;
    if (report.present[c]) rows.push_back(row);
  }
  std::tie(report.macro, report.weighted) = average_rows(rows);
  return report;
}

inline double accuracy(std::span<const EarsCategory> y_true, std::span<const EarsCategory> y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty()) throw std::invalid_argument("accuracy: bad lengths");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) hits += y_true[i] == y_pred[i];
  return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

/// Tabular text in the familiar precision/recall/f1-score/support layout.
inline std::string format_report(const ClassificationReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  const int name_w = 18;
  out << std::setw(name_w) << "" << std::setw(11) << "precision" << std::setw(10) << "recall" << std::setw(10)
      << "f1-score" << std::setw(10) << "support" << "\n\n";
  auto line = [&](std::string_view name, const ClassMetrics& m) {
    out << std::setw(name_w) << name << std::setw(11) << m.precision << std::setw(10) << m.recall << std::setw(10)
        << m.f1 << std::setw(10) << m.support << "\n";
  };
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (r.present[c]) line(to_string(category_at(c)), r.per_class[c]);
  }
  out << "\n"
      << std::setw(name_w) << "accuracy" << std::setw(31) << r.accuracy << std::setw(10) << r.total << "\n";
  line("macro avg", r.macro);
  line("weighted avg", r.weighted);
  return out.str();
}

inline std::string format_confusion(const ConfusionMatrix& m) {
  static constexpr std::array<const char*, kNumCategories> abbrev = {"EVT", "OPT", "STA", "UBQ", "UNW"};
  std::ostringstream out;
  out << "true\\pred";
  for (auto a : abbrev) out << std::setw(6) << a;
  out << "\n";
  for (std::size_t t = 0; t < kNumCategories; ++t) {
    out << std::setw(9) << abbrev[t];
    for (std::size_t p = 0; p < kNumCategories; ++p) out << std::setw(6) << m.counts[t][p];
    out << "\n";
  }
  return out.str();
}

inline nlohmann::json to_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

inline nlohmann::json to_json(const ClassificationReport& r) {
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (r.present[c]) classes[std::string(to_string(category_at(c)))] = to_json(r.per_class[c]);
  }
  return {{"classes", classes},
          {"accuracy", r.accuracy},
          {"macro_avg", to_json(r.macro)},
          {"weighted_avg", to_json(r.weighted)},
          {"total", r.total}};
}

inline nlohmann::json to_json(const ConfusionMatrix& m) {
  nlohmann::json labels = nlohmann::json::array();
  for (auto c : kAllCategories) labels.push_back(std::string(to_string(c)));
  return {{"labels", labels}, {"counts", m.counts}};
}

// ---------------------------------------------------------------------------
// Model selection

struct GridSearchResult {
  std::size_t best_index = 0;
  HyperParams best;
  std::vector<double> mean_accuracy;  // parallel to the grid
};

/// k-fold stratified cross-validation of every grid point. The vocabulary
/// is refitted on each fold's training part. Highest mean accuracy wins;
/// ties go to the earlier grid entry.
inline GridSearchResult grid_search(const std::vector<RequirementRecord>& train, const std::vector<HyperParams>& grid,
                                    std::size_t k, std::uint64_t seed, std::size_t threads = default_threads()) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  for (const auto& p : grid) p.validate();

  std::vector<std::size_t> ids;
  std::vector<EarsCategory> labels;
  std::map<std::size_t, std::size_t> position;
  for (std::size_t i = 0; i < train.size(); ++i) {
    ids.push_back(train[i].id);
    labels.push_back(train[i].label);
    position.emplace(train[i].id, i);
  }
  const FoldPlan plan = make_folds(ids, labels, k, seed);

  struct FoldData {
    std::vector<FeatureVector> x_fit, x_eval;
    std::vector<EarsCategory> y_fit, y_eval;
    std::size_t n_features = 0;
  };
  std::vector<FoldData> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> fit_rows, eval_rows;
    for (std::size_t g = 0; g < k; ++g) {
      for (std::size_t id : plan.folds[g]) (g == f ? eval_rows : fit_rows).push_back(position.at(id));
    }
    std::sort(fit_rows.begin(), fit_rows.end());
    std::vector<TokenList> fit_docs;
    for (std::size_t row : fit_rows) fit_docs.push_back(tokenize(train[row].natural));
    const Vocabulary vocab = Vocabulary::fit(fit_docs);
    auto& fd = folds[f];
    fd.n_features = vocab.size();
    for (std::size_t i = 0; i < fit_rows.size(); ++i) {
      fd.x_fit.push_back(vocab.vectorize(fit_docs[i]));
      fd.y_fit.push_back(train[fit_rows[i]].label);
    }
    for (std::size_t row : eval_rows) {
      fd.x_eval.push_back(vocab.vectorize_text(train[row].natural));
      fd.y_eval.push_back(train[row].label);
    }
  }

  std::vector<double> scores(grid.size() * k, 0.0);
  parallel_for(scores.size(), threads, [&](std::size_t job) {
    const auto& params = grid[job / k];
    const auto& fd = folds[job % k];
    const auto model = train_forest(fd.x_fit, fd.y_fit, fd.n_features, params, seed, 1);
    std::vector<EarsCategory> predicted;
    for (const auto& v : fd.x_eval) predicted.push_back(model.predict(v));
    scores[job] = accuracy(fd.y_eval, predicted);
  });

  GridSearchResult result;
  result.mean_accuracy.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (std::size_t f = 0; f < k; ++f) sum += scores[g * k + f];
    result.mean_accuracy[g] = sum / static_cast<double>(k);
    if (result.mean_accuracy[g] > result.mean_accuracy[result.best_index]) result.best_index = g;
  }
  result.best = grid[result.best_index];
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json params_to_json(const HyperParams& p) {
  nlohmann::json j;
  j["n_estimators"] = p.n_estimators;
  j["max_depth"] = p.max_depth ? nlohmann::json(*p.max_depth) : nlohmann::json(nullptr);
  j["min_samples_split"] = p.min_samples_split;
  switch (p.max_features.rule) {
    case MaxFeatures::Rule::Sqrt: j["max_features"] = "sqrt"; break;
    case MaxFeatures::Rule::All: j["max_features"] = "all"; break;
    case MaxFeatures::Rule::Fixed: j["max_features"] = p.max_features.count; break;
  }
  j["bootstrap"] = p.bootstrap;
  return j;
}

inline HyperParams params_from_json(const nlohmann::json& j) {
  HyperParams p;
  p.n_estimators = j.at("n_estimators").get<std::size_t>();
  p.max_depth = j.at("max_depth").is_null() ? std::nullopt : std::optional(j.at("max_depth").get<std::size_t>());
  p.min_samples_split = j.at("min_samples_split").get<std::size_t>();
  const auto& mf = j.at("max_features");
  if (mf.is_string()) {
    const auto rule = mf.get<std::string>();
    if (rule == "sqrt") p.max_features = MaxFeatures::sqrt();
    else if (rule == "all") p.max_features = MaxFeatures::all();
    else throw ModelError("unknown max_features rule '" + rule + "'");
  } else {
    p.max_features = MaxFeatures::fixed(mf.get<std::size_t>());
  }
  p.bootstrap = j.value("bootstrap", true);
  p.validate();
  return p;
}

inline nlohmann::json model_to_json(const RandomForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes()) {
      if (n.is_leaf()) nodes.push_back({{"counts", n.counts}});
      else
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"counts", n.counts}});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"schema", kForestSchema},
          {"params", params_to_json(model.params)},
          {"seed", model.seed},
          {"n_features", model.n_features},
          {"vocabulary", model.vocabulary.to_json()},
          {"trees", std::move(trees)}};
}

inline RandomForestModel model_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kForestSchema) throw ModelError(std::string("model file is not ") + kForestSchema);
  RandomForestModel model;
  model.params = params_from_json(j.at("params"));
  model.seed = j.at("seed").get<std::uint64_t>();
  model.n_features = j.at("n_features").get<std::size_t>();
  model.vocabulary = Vocabulary::from_json(j.at("vocabulary"));
  for (const auto& jt : j.at("trees")) {
    std::vector<TreeNode> nodes;
    for (const auto& jn : jt) {
      TreeNode n;
      n.counts = jn.at("counts").get<ClassCounts>();
      if (jn.contains("feature")) {
        n.feature = jn.at("feature").get<std::int32_t>();
        n.threshold = jn.at("threshold").get<double>();
        n.left = jn.at("left").get<std::uint32_t>();
        n.right = jn.at("right").get<std::uint32_t>();
      }
      nodes.push_back(n);
    }
    for (const auto& n : nodes) {
      if (!n.is_leaf() && (n.left >= nodes.size() || n.right >= nodes.size() ||
                           static_cast<std::size_t>(n.feature) >= std::max<std::size_t>(model.n_features, 1))) {
        throw ModelError("model file has a dangling tree node");
      }
    }
    if (nodes.empty()) throw ModelError("model file has an empty tree");
    model.trees.emplace_back(std::move(nodes));
  }
  if (model.trees.size() != model.params.n_estimators) throw ModelError("tree count does not match n_estimators");
  return model;
}

inline void save_model(const RandomForestModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write model file '" + path.string() + "'");
  out << model_to_json(model).dump() << "\n";
}

inline RandomForestModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace page
