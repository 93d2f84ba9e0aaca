#include "page/auxiliary.hpp"
#include "page/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace page;

namespace {

std::size_t count_of(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto at = haystack.find(needle); at != std::string::npos; at = haystack.find(needle, at + 1)) ++n;
  return n;
}

std::size_t lines_starting_with(const std::string& text, const std::string& prefix) {
  std::size_t n = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    if (text.compare(start, prefix.size(), prefix) == 0) ++n;
    start = end + 1;
  }
  return n;
}

std::shared_ptr<const RandomForestModel> synthetic_model() {
  static const auto model =
      std::make_shared<const RandomForestModel>(train_text_classifier(generate_synthetic_corpus(50, 42), HyperParams{}, 42, 2));
  return model;
}

RequirementRecord record(EarsCategory c, std::string natural) {
  RequirementRecord r;
  r.natural = std::move(natural);
  r.label = c;
  r.gold_ears = "gold";
  return r;
}

}  // namespace

TEST(FormatExamples, MatchesTheBankLayout) {
  const auto bank = ExampleBank::standard();
  const auto& pairs = bank.lookup(EarsCategory::Ubiquitous);
  const auto text = format_examples(std::span(pairs).first(1));
  EXPECT_EQ(text,
            "requirement: \"The system shall log all transactions.\"\n"
            "ears: \"The system shall always log all transactions.\"");
  EXPECT_EQ(format_examples({}), "");
}

TEST(FormatExamples, PairsSeparatedByBlankLine) {
  const std::vector<ExamplePair> pairs = {{"a", "b"}, {"c", "d"}};
  EXPECT_EQ(format_examples(pairs), "requirement: \"a\"\nears: \"b\"\n\nrequirement: \"c\"\nears: \"d\"");
}

TEST(ExampleBank, StandardContentIsVerbatim) {
  const auto bank = ExampleBank::standard();
  EXPECT_EQ(bank.lookup(EarsCategory::Ubiquitous)[1].ears,
            "The system shall always keep the session active during user activity.");
  EXPECT_EQ(bank.lookup(EarsCategory::StateDriven)[0].ears,
            "While maintenance mode is active, the system shall block new logins.");
  EXPECT_EQ(bank.lookup(EarsCategory::UnwantedBehavior)[1].requirement,
            "The application shall stop the upload if the file exceeds the maximum size.");
  EXPECT_EQ(bank.lookup(EarsCategory::Optional)[1].ears,
            "Where the user has selected the option, the application shall provide dark mode.");
  EXPECT_EQ(bank.lookup(EarsCategory::EventDriven)[0].requirement,
            "The system shall notify the admin when the server restarts.");
  std::set<std::string> all;
  for (auto c : kAllCategories) {
    for (const auto& p : bank.lookup(c)) {
      EXPECT_TRUE(all.insert(p.requirement).second);
      EXPECT_FALSE(p.ears.empty());
    }
  }
  EXPECT_EQ(all.size(), 10u);
}

TEST(ExampleBank, JsonRoundTripAndFile) {
  const auto bank = ExampleBank::standard();
  const auto j = bank.to_json();
  EXPECT_EQ(j["schema"], kBankSchema);
  const auto back = ExampleBank::from_json(j);
  for (auto c : kAllCategories) EXPECT_EQ(back.lookup(c), bank.lookup(c));

  const auto shipped = ExampleBank::load(std::filesystem::path(PAGE_SOURCE_DIR) / "data" / "bank.json");
  for (auto c : kAllCategories) EXPECT_EQ(shipped.lookup(c), bank.lookup(c));
}

TEST(ExampleBank, RejectsIncompleteFiles) {
  auto j = ExampleBank::standard().to_json();
  auto missing = j;
  missing["examples"].erase("Optional");
  EXPECT_ANY_THROW(ExampleBank::from_json(missing));
  auto three = j;
  three["examples"]["Optional"].push_back({{"requirement", "x"}, {"ears", "y"}});
  EXPECT_ANY_THROW(ExampleBank::from_json(three));
  auto empty_text = j;
  empty_text["examples"]["Optional"][0]["ears"] = "";
  EXPECT_ANY_THROW(ExampleBank::from_json(empty_text));
  auto unknown = j;
  unknown["examples"]["Complex"] = j["examples"]["Optional"];
  EXPECT_ANY_THROW(ExampleBank::from_json(unknown));
  auto schema = j;
  schema["schema"] = "page-bank/0";
  EXPECT_ANY_THROW(ExampleBank::from_json(schema));
  EXPECT_ANY_THROW(ExampleBank::load("/nonexistent/bank.json"));
}

TEST(ExampleBank, CustomDomainBank) {
  auto j = ExampleBank::standard().to_json();
  j["examples"]["Event-driven"][0] = {{"requirement", "The pump shall stop when the tank is full."},
                                      {"ears", "When the tank is full, the pump shall stop."}};
  const auto path = std::filesystem::temp_directory_path() / "page_custom_bank.json";
  std::ofstream(path) << j.dump(2);
  const auto bank = ExampleBank::load(path);
  EXPECT_EQ(bank.lookup(EarsCategory::EventDriven)[0].ears, "When the tank is full, the pump shall stop.");
}

TEST(InferOracle, StateDrivenExamples) {
  const auto bank = ExampleBank::standard();
  const auto c = infer_oracle(bank, record(EarsCategory::StateDriven, "anything"));
  EXPECT_EQ(c.kind, kExamplesKind);
  EXPECT_NE(c.payload.find("While maintenance mode is active, the system shall block new logins."), std::string::npos);
  EXPECT_NE(c.payload.find("While the device has no internet connection"), std::string::npos);
  EXPECT_EQ(infer_oracle(bank, record(EarsCategory::StateDriven, "other text")), c);
}

TEST(InferClassifier, UnwantedBehaviorInput) {
  const auto bank = ExampleBank::standard();
  const auto c = infer_classifier(*synthetic_model(), bank, "The system shall display a warning if unauthorized access is detected.");
  EXPECT_EQ(c, examples_for(bank, EarsCategory::UnwantedBehavior));
  EXPECT_NE(c.payload.find("If the file exceeds the maximum size"), std::string::npos);
}

TEST(InferClassifier, EventDrivenCue) {
  const auto bank = ExampleBank::standard();
  const auto c = infer_classifier(*synthetic_model(), bank, "When a purchase is completed, the application shall send a receipt.");
  EXPECT_EQ(c, examples_for(bank, EarsCategory::EventDriven));
}

TEST(InferClassifier, PayloadIsOneOfFive) {
  const auto bank = ExampleBank::standard();
  std::set<std::string> possible;
  for (auto c : kAllCategories) possible.insert(examples_for(bank, c).payload);
  ASSERT_EQ(possible.size(), 5u);
  for (const std::string text : {"anything at all", "", "while if when where", "The robot shall move.", "ÅÖ 123"}) {
    const auto c = infer_classifier(*synthetic_model(), bank, text);
    EXPECT_TRUE(possible.count(c.payload)) << text;
    EXPECT_EQ(lines_starting_with(c.payload, "requirement: "), 2u);
    EXPECT_EQ(lines_starting_with(c.payload, "ears: "), 2u);
    EXPECT_EQ(count_of(c.payload, "\n"), 4u);
  }
}

TEST(InferNull, NeverContributes) {
  EXPECT_FALSE(infer_null("anything").has_value());
  EXPECT_FALSE(NullAuxiliary().infer(record(EarsCategory::Optional, "x")).has_value());
}

TEST(AuxiliaryModules, AreInterchangeable) {
  const auto bank = ExampleBank::standard();
  const ClassifierAuxiliary classifier(synthetic_model(), bank);
  const OracleAuxiliary oracle_aux(bank);
  const NullAuxiliary none;
  const std::vector<const AuxiliaryModule*> modules = {&classifier, &oracle_aux, &none};
  const auto rec = record(EarsCategory::Optional, "The system shall enable voice control where the device supports it.");
  std::vector<std::optional<ContextContribution>> outputs;
  for (const auto* m : modules) outputs.push_back(m->infer(rec));
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_FALSE(outputs[2].has_value());
  EXPECT_EQ(classifier.classify(rec.natural), EarsCategory::Optional);
  EXPECT_EQ(classifier.name(), "classifier");
  EXPECT_THROW(ClassifierAuxiliary(nullptr, bank), std::invalid_argument);
}
