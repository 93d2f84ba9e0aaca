#include "page/forest.hpp"
#include "page/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <tuple>

#include "oracles.hpp"

using namespace page;

namespace {

constexpr auto ED = EarsCategory::EventDriven;
constexpr auto OP = EarsCategory::Optional;
constexpr auto SD = EarsCategory::StateDriven;
constexpr auto UB = EarsCategory::Ubiquitous;
constexpr auto UW = EarsCategory::UnwantedBehavior;

FeatureVector dense(const std::vector<double>& values) {
  FeatureVector v;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0) v.entries.emplace_back(static_cast<std::uint32_t>(i), values[i]);
  }
  return v;
}

HyperParams exact_params(std::optional<std::size_t> depth) {
  HyperParams p;
  p.n_estimators = 1;
  p.max_depth = depth;
  p.min_samples_split = 2;
  p.max_features = MaxFeatures::all();
  p.bootstrap = false;
  return p;
}

DecisionTree leaf(EarsCategory c) {
  TreeNode n;
  n.counts[index_of(c)] = 3;
  return DecisionTree({n});
}

// Weighted Gini of an internal node's children, from the stored counts.
double children_impurity(const DecisionTree& t, const TreeNode& n) {
  const auto& l = t.nodes()[n.left].counts;
  const auto& r = t.nodes()[n.right].counts;
  std::size_t nl = 0, nr = 0;
  for (auto c : l) nl += c;
  for (auto c : r) nr += c;
  return (nl * gini(l, nl) + nr * gini(r, nr)) / static_cast<double>(nl + nr);
}

const std::vector<RequirementRecord>& synthetic() {
  static const auto corpus = generate_synthetic_corpus(50, 42);
  return corpus;
}

}  // namespace

TEST(Gini, PureNodeIsZero) {
  EXPECT_DOUBLE_EQ(gini({4, 0, 0, 0, 0}, 4), 0.0);
  EXPECT_DOUBLE_EQ(gini({1, 1, 0, 0, 0}, 2), 0.5);
  EXPECT_DOUBLE_EQ(gini({}, 0), 0.0);
}

TEST(Majority, TiesGoToCanonicalOrder) {
  EXPECT_EQ(majority({2, 0, 0, 2, 0}), ED);
  EXPECT_EQ(majority({0, 1, 3, 3, 0}), SD);
  EXPECT_EQ(majority({0, 0, 0, 0, 0}), ED);
}

TEST(MaxFeatures, Resolve) {
  EXPECT_EQ(MaxFeatures::sqrt().resolve(100), 10u);
  EXPECT_EQ(MaxFeatures::sqrt().resolve(99), 9u);
  EXPECT_EQ(MaxFeatures::sqrt().resolve(1), 1u);
  EXPECT_EQ(MaxFeatures::all().resolve(7), 7u);
  EXPECT_EQ(MaxFeatures::fixed(20).resolve(7), 7u);
  EXPECT_EQ(MaxFeatures::fixed(3).resolve(7), 3u);
}

TEST(HyperParams, ValidateAndGrid) {
  HyperParams p;
  EXPECT_NO_THROW(p.validate());
  p.min_samples_split = 1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.n_estimators = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.max_depth = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);

  const auto grid = default_grid();
  EXPECT_EQ(grid.size(), 27u);
  HyperParams winner;
  winner.n_estimators = 100;
  winner.max_depth = 10;
  winner.min_samples_split = 5;
  EXPECT_NE(std::find(grid.begin(), grid.end(), winner), grid.end());
  EXPECT_EQ(winner.describe(), "n_estimators=100 max_depth=10 min_samples_split=5");
}

TEST(Tree, PureInputIsOneLeaf) {
  const std::vector<FeatureVector> x = {dense({0.1, 0.9}), dense({0.7, 0.0}), dense({0.2, 0.2})};
  const std::vector<EarsCategory> y(3, OP);
  Rng rng = derive_rng(1, 0);
  const auto tree = train_tree(x, y, 2, exact_params(std::nullopt), rng);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_TRUE(tree.nodes()[0].is_leaf());
  EXPECT_EQ(tree.predict(dense({5, 5})), OP);
}

TEST(Tree, TwoPointsSplitAtMidpoint) {
  const std::vector<FeatureVector> x = {dense({0.0}), dense({1.0})};
  const std::vector<EarsCategory> y = {ED, OP};
  Rng rng = derive_rng(1, 0);
  const auto tree = train_tree(x, y, 1, exact_params(1), rng);
  ASSERT_EQ(tree.nodes().size(), 3u);
  EXPECT_EQ(tree.nodes()[0].feature, 0);
  EXPECT_DOUBLE_EQ(tree.nodes()[0].threshold, 0.5);
  EXPECT_EQ(tree.predict(dense({0.2})), ED);
  EXPECT_EQ(tree.predict(dense({0.8})), OP);
  EXPECT_EQ(tree.depth(), 1u);
  EXPECT_EQ(tree.leaf_count(), 2u);
}

TEST(Tree, RootMatchesExhaustiveSplitSearch) {
  std::mt19937 gen(17);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 4 + gen() % 12, d = 1 + gen() % 3;
    std::vector<std::vector<double>> cols(d, std::vector<double>(n));
    std::vector<FeatureVector> x;
    std::vector<EarsCategory> y;
    std::vector<int> yi;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(d);
      for (std::size_t f = 0; f < d; ++f) row[f] = cols[f][i] = static_cast<double>(gen() % 5) / 4.0;
      x.push_back(dense(row));
      yi.push_back(static_cast<int>(gen() % 3));
      y.push_back(category_at(static_cast<std::size_t>(yi.back())));
    }
    // oracle: every (feature, midpoint), lowest impurity, then lowest feature, then threshold
    std::optional<std::tuple<double, std::size_t, double>> best;
    for (std::size_t f = 0; f < d; ++f) {
      for (const auto& s : oracle::all_splits(cols[f], yi)) {
        if (!best || s.impurity < std::get<0>(*best) - 1e-12) best = std::make_tuple(s.impurity, f, s.threshold);
      }
    }
    const double parent = oracle::gini_of(yi);
    Rng rng = derive_rng(trial, 0);
    const auto tree = train_tree(x, y, d, exact_params(1), rng);
    if (!best || !(std::get<0>(*best) < parent - 1e-12)) {
      EXPECT_EQ(tree.nodes().size(), 1u);
      continue;
    }
    ASSERT_FALSE(tree.nodes()[0].is_leaf());
    EXPECT_EQ(static_cast<std::size_t>(tree.nodes()[0].feature), std::get<1>(*best));
    EXPECT_DOUBLE_EQ(tree.nodes()[0].threshold, std::get<2>(*best));
    EXPECT_NEAR(children_impurity(tree, tree.nodes()[0]), std::get<0>(*best), 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 200);
}

TEST(Tree, SameStreamSameTree) {
  const auto& corpus = synthetic();
  std::vector<TokenList> docs;
  for (const auto& r : corpus) docs.push_back(tokenize(r.natural));
  const auto vocab = Vocabulary::fit(docs);
  std::vector<FeatureVector> x;
  std::vector<EarsCategory> y;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    x.push_back(vocab.vectorize(docs[i]));
    y.push_back(corpus[i].label);
  }
  HyperParams p;
  Rng a = derive_rng(5, 3), b = derive_rng(5, 3), c = derive_rng(6, 3);
  const auto ta = train_tree(x, y, vocab.size(), p, a);
  EXPECT_EQ(ta, train_tree(x, y, vocab.size(), p, b));
  EXPECT_NE(ta, train_tree(x, y, vocab.size(), p, c));
}

TEST(Tree, EverySplitLowersImpurityAndRespectsLimits) {
  std::mt19937 gen(4);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<FeatureVector> x;
    std::vector<EarsCategory> y;
    for (int i = 0; i < 60; ++i) {
      x.push_back(dense({double(gen() % 7), double(gen() % 3), double(gen() % 11) / 10}));
      y.push_back(category_at(gen() % kNumCategories));
    }
    HyperParams p;
    p.max_depth = 1 + gen() % 6;
    p.min_samples_split = 2 + gen() % 8;
    Rng rng = derive_rng(trial, 0);
    const auto tree = train_tree(x, y, 3, p, rng);
    EXPECT_LE(tree.depth(), *p.max_depth);
    for (const auto& n : tree.nodes()) {
      std::size_t total = 0;
      for (auto c : n.counts) total += c;
      if (n.is_leaf()) continue;
      EXPECT_GE(total, p.min_samples_split);
      EXPECT_LT(children_impurity(tree, n), gini(n.counts, total));
    }
  }
}

TEST(Forest, UnrestrictedSingleTreeFitsTrainingData) {
  // deduplicated and consistent: no two identical rows with different labels
  std::mt19937 gen(8);
  std::set<std::vector<int>> seen;
  std::vector<FeatureVector> x;
  std::vector<EarsCategory> y;
  while (x.size() < 80) {
    std::vector<int> row = {int(gen() % 6), int(gen() % 6), int(gen() % 6)};
    if (!seen.insert(row).second) continue;
    x.push_back(dense({double(row[0]), double(row[1]), double(row[2])}));
    y.push_back(category_at(gen() % kNumCategories));
  }
  const auto p = exact_params(std::nullopt);
  const auto model = train_forest(x, y, 3, p, 99, 1);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(model.predict(x[i]), y[i]);
}

TEST(Forest, VotesAndTieBreak) {
  RandomForestModel m;
  m.trees = {leaf(SD), leaf(SD), leaf(SD)};
  EXPECT_EQ(m.predict({}), SD);
  EXPECT_EQ(m.votes({}), (ClassCounts{0, 0, 3, 0, 0}));

  m.trees = {leaf(UB), leaf(ED)};
  EXPECT_EQ(m.predict({}), ED);

  m.trees.clear();
  EXPECT_THROW(m.predict({}), ModelError);
}

TEST(Forest, DeterministicAcrossThreadCounts) {
  HyperParams p;
  p.n_estimators = 30;
  const auto a = train_text_classifier(synthetic(), p, 7, 1);
  const auto b = train_text_classifier(synthetic(), p, 7, 4);
  EXPECT_EQ(model_to_json(a).dump(), model_to_json(b).dump());
  const auto c = train_text_classifier(synthetic(), p, 8, 1);
  EXPECT_NE(model_to_json(a).dump(), model_to_json(c).dump());
}

TEST(Forest, SyntheticCuesAreLearned) {
  const auto model = train_text_classifier(synthetic(), HyperParams{}, 42, 2);
  EXPECT_EQ(model.predict_text("The system shall block new logins while maintenance mode is active."), SD);
  EXPECT_EQ(model.predict_text("While maintenance mode is active, the system shall block new logins."), SD);
  EXPECT_EQ(model.predict_text("The application shall send a receipt when a purchase is completed."), ED);
  EXPECT_EQ(model.predict_text("The system shall display a warning if unauthorized access is detected."), UW);
  EXPECT_EQ(model.predict_text("The system shall enable voice control where the device supports it."), OP);
  EXPECT_EQ(model.predict_text("The system shall log all transactions."), UB);
}

TEST(Forest, PredictionIsAlwaysACategory) {
  HyperParams p;
  p.n_estimators = 11;
  const auto model = train_text_classifier(synthetic(), p, 3, 1);
  std::mt19937 gen(2);
  const auto& vocab = model.vocabulary.tokens();
  for (int i = 0; i < 200; ++i) {
    std::string text;
    for (int k = 0; k < 8; ++k) text += vocab[gen() % vocab.size()] + " ";
    const auto c = model.predict_text(text);
    EXPECT_LT(index_of(c), kNumCategories);
    const auto votes = model.votes(model.vocabulary.vectorize_text(text));
    std::size_t total = 0;
    for (auto v : votes) total += v;
    EXPECT_EQ(total, 11u);
  }
  EXPECT_NO_THROW(model.predict_text(""));
}

TEST(Forest, RejectsBadInput) {
  const std::vector<FeatureVector> x = {dense({1.0})};
  const std::vector<EarsCategory> y = {ED, OP};
  EXPECT_THROW(train_forest(x, y, 1, HyperParams{}, 0), std::invalid_argument);
  EXPECT_THROW(train_forest({}, {}, 1, HyperParams{}, 0), std::invalid_argument);
  EXPECT_THROW(train_text_classifier({}, HyperParams{}, 0), std::invalid_argument);
}

TEST(Persistence, SaveLoadPredictsIdentically) {
  HyperParams p;
  p.n_estimators = 20;
  p.max_depth.reset();
  p.max_features = MaxFeatures::fixed(4);
  const auto model = train_text_classifier(synthetic(), p, 11, 2);
  const auto path = std::filesystem::temp_directory_path() / "page_forest_model.json";
  save_model(model, path);
  const auto back = load_model(path);
  EXPECT_EQ(back.params, model.params);
  EXPECT_EQ(back.vocabulary, model.vocabulary);
  EXPECT_EQ(back.trees, model.trees);
  for (const auto& r : generate_synthetic_corpus(10, 5)) {
    EXPECT_EQ(back.predict_text(r.natural), model.predict_text(r.natural));
  }
  EXPECT_EQ(model_to_json(back).dump(), model_to_json(model).dump());
}

TEST(Persistence, RejectsDamagedFiles) {
  HyperParams p;
  p.n_estimators = 2;
  auto j = model_to_json(train_text_classifier(synthetic(), p, 1, 1));
  auto wrong_schema = j;
  wrong_schema["schema"] = "other/1";
  EXPECT_THROW(model_from_json(wrong_schema), ModelError);
  auto dangling = j;
  dangling["trees"][0][0]["left"] = 100000;
  EXPECT_THROW(model_from_json(dangling), ModelError);
  auto short_forest = j;
  short_forest["trees"].erase(0);
  EXPECT_THROW(model_from_json(short_forest), ModelError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), ModelError);

  const auto path = std::filesystem::temp_directory_path() / "page_forest_garbage.json";
  std::ofstream(path) << "{not json";
  EXPECT_THROW(load_model(path), ModelError);
}

TEST(Persistence, ParamsRoundTrip) {
  for (auto p : default_grid()) {
    EXPECT_EQ(params_from_json(params_to_json(p)), p);
  }
  HyperParams q;
  q.max_features = MaxFeatures::fixed(3);
  q.bootstrap = false;
  EXPECT_EQ(params_from_json(params_to_json(q)), q);
}

TEST(Report, PerfectPredictions) {
  const std::vector<EarsCategory> y = {ED, OP, SD, UB, UW, ED};
  const auto r = classification_report(y, y);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    EXPECT_DOUBLE_EQ(r.per_class[c].precision, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[c].recall, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[c].f1, 1.0);
  }
  EXPECT_DOUBLE_EQ(r.macro.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.weighted.precision, 1.0);
  const auto m = confusion_matrix(y, y);
  for (std::size_t t = 0; t < kNumCategories; ++t) {
    for (std::size_t p = 0; p < kNumCategories; ++p) EXPECT_EQ(m.counts[t][p], t == p ? r.per_class[t].support : 0u);
  }
}

TEST(Report, SingleMistake) {
  const std::vector<EarsCategory> t = {ED}, p = {OP};
  const auto m = confusion_matrix(t, p);
  EXPECT_EQ(m.counts[0][1], 1u);
  EXPECT_EQ(m.trace(), 0u);
  EXPECT_EQ(m.total(), 1u);
  const auto r = classification_report(t, p);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
  EXPECT_TRUE(r.present[0]);
  EXPECT_TRUE(r.present[1]);
  EXPECT_FALSE(r.present[2]);
  EXPECT_DOUBLE_EQ(r.macro.f1, 0.0);
}

TEST(Report, FortyTwoOfFiftyOne) {
  std::vector<EarsCategory> t, p;
  for (int i = 0; i < 51; ++i) {
    t.push_back(category_at(i % 5));
    p.push_back(i < 42 ? t.back() : category_at((i + 1) % 5));
  }
  EXPECT_NEAR(accuracy(t, p), 0.8235, 1e-4);
  EXPECT_NEAR(classification_report(t, p).accuracy, 42.0 / 51.0, 1e-15);
}

TEST(Report, AveragesOfRoundedRows) {
  // rows as printed in the published test report
  const std::vector<ClassMetrics> rows = {{0.83, 0.83, 0.83, 12},
                                          {0.88, 0.88, 0.88, 8},
                                          {1.00, 0.80, 0.89, 10},
                                          {0.69, 0.92, 0.79, 12},
                                          {0.86, 0.67, 0.75, 9}};
  const auto [macro, weighted] = average_rows(rows);
  EXPECT_NEAR(macro.precision, 0.852, 1e-12);
  EXPECT_NEAR(macro.recall, 0.82, 1e-12);
  EXPECT_NEAR(weighted.precision, 43.02 / 51.0, 1e-12);
  EXPECT_EQ(weighted.support, 51u);
}

TEST(Report, PropertiesOnRandomLabels) {
  std::mt19937 gen(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + gen() % 60;
    std::vector<EarsCategory> t, p;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(category_at(gen() % 5));
      p.push_back(gen() % 3 ? t.back() : category_at(gen() % 5));
    }
    const auto r = classification_report(t, p);
    EXPECT_NEAR(r.weighted.recall, r.accuracy, 1e-12);
    EXPECT_DOUBLE_EQ(r.accuracy, accuracy(t, p));
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      const auto& m = r.per_class[c];
      for (double v : {m.precision, m.recall, m.f1}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      EXPECT_EQ(m.f1 == 0.0, m.precision * m.recall == 0.0);
    }
    EXPECT_EQ(confusion_matrix(t, p).total(), n);
  }
}

TEST(Report, FormattingShowsAllRows) {
  const std::vector<EarsCategory> t = {ED, OP, SD, UB, UW}, p = {ED, OP, SD, UB, UB};
  const auto text = format_report(classification_report(t, p));
  for (auto needle : {"precision", "Event-driven", "Unwanted behavior", "accuracy", "macro avg", "weighted avg"}) {
    EXPECT_NE(text.find(needle), std::string::npos) << needle;
  }
  const auto j = to_json(classification_report(t, p));
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.8);
  EXPECT_EQ(to_json(confusion_matrix(t, p))["counts"][4][3], 1);
  EXPECT_NE(format_confusion(confusion_matrix(t, p)).find("UNW"), std::string::npos);
}

TEST(GridSearch, SingletonGrid) {
  HyperParams p;
  p.n_estimators = 15;
  const auto result = grid_search(synthetic(), {p}, 5, 1, 2);
  EXPECT_EQ(result.best_index, 0u);
  EXPECT_EQ(result.best, p);
  ASSERT_EQ(result.mean_accuracy.size(), 1u);
  EXPECT_GT(result.mean_accuracy[0], 0.9);
}

TEST(GridSearch, PicksTheBetterConfigAndIsDeterministic) {
  HyperParams stump;
  stump.n_estimators = 5;
  stump.max_depth = 1;
  HyperParams deep;
  deep.n_estimators = 25;
  deep.max_depth.reset();
  deep.min_samples_split = 2;
  const auto a = grid_search(synthetic(), {stump, deep}, 5, 3, 1);
  EXPECT_EQ(a.best_index, 1u);
  EXPECT_LT(a.mean_accuracy[0], a.mean_accuracy[1]);
  const auto b = grid_search(synthetic(), {stump, deep}, 5, 3, 3);
  EXPECT_EQ(a.mean_accuracy, b.mean_accuracy);
  EXPECT_THROW(grid_search(synthetic(), {}, 5, 3), std::invalid_argument);
}
