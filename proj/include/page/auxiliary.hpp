#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "page/dataset.hpp"
#include "page/ears.hpp"
#include "page/forest.hpp"

namespace page {

inline constexpr const char* kBankSchema = "page-bank/1";
inline constexpr const char* kExamplesKind = "ears-examples";

/// Structured text produced by an auxiliary module, ready for the composer.
struct ContextContribution {
  std::string kind;
  std::string payload;

  friend bool operator==(const ContextContribution&, const ContextContribution&) = default;
};

struct ExamplePair {
  std::string requirement;
  std::string ears;

  friend bool operator==(const ExamplePair&, const ExamplePair&) = default;
};

/// `requirement: "<req>"` / `ears: "<ears>"` per pair, pairs separated by a
/// blank line, no trailing newline.
inline std::string format_examples(std::span<const ExamplePair> pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += "\n\n";
    out += "requirement: \"" + pairs[i].requirement + "\"\n";
    out += "ears: \"" + pairs[i].ears + "\"";
  }
  return out;
}

/// Two example rewrites per EARS category.
class ExampleBank {
 public:
  using Pairs = std::array<ExamplePair, 2>;

  explicit ExampleBank(std::array<Pairs, kNumCategories> entries) : entries_(std::move(entries)) {
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      for (const auto& p : entries_[c]) {
        if (p.requirement.empty() || p.ears.empty()) {
          throw std::invalid_argument("example bank: empty example for " + std::string(to_string(category_at(c))));
        }
      }
    }
  }

  /// The shipped bank.
  static ExampleBank standard() {
    std::array<Pairs, kNumCategories> e;
    e[index_of(EarsCategory::Ubiquitous)] = {{
        {"The system shall log all transactions.", "The system shall always log all transactions."},
        {"The application shall keep the session active during user activity.",
         "The system shall always keep the session active during user activity."},
    }};
    e[index_of(EarsCategory::EventDriven)] = {{
        {"The system shall notify the admin when the server restarts.",
         "When the server restarts, the system shall notify the admin."},
        {"The application shall send a receipt when a purchase is completed.",
         "When a purchase is completed, the application shall send a receipt."},
    }};
    e[index_of(EarsCategory::StateDriven)] = {{
        {"The system shall block new logins while maintenance mode is active.",
         "While maintenance mode is active, the system shall block new logins."},
        {"The application shall allow offline access while the device has no internet connection.",
         "While the device has no internet connection, the application shall allow offline access."},
    }};
    e[index_of(EarsCategory::UnwantedBehavior)] = {{
        {"The system shall display a warning if unauthorized access is detected.",
         "If unauthorized access is detected, the system shall display a warning."},
        {"The application shall stop the upload if the file exceeds the maximum size.",
         "If the file exceeds the maximum size, the application shall stop the upload."},
    }};
    e[index_of(EarsCategory::Optional)] = {{
        {"The system shall enable voice control where the device supports it.",
         "Where the device supports it, the system shall enable voice control."},
        {"The application shall provide dark mode where the user has selected the option.",
         "Where the user has selected the option, the application shall provide dark mode."},
    }};
    return ExampleBank(std::move(e));
  }

  const Pairs& lookup(EarsCategory c) const noexcept { return entries_[index_of(c)]; }

  nlohmann::json to_json() const {
    nlohmann::json examples = nlohmann::json::object();
    for (auto c : kAllCategories) {
      auto& list = examples[std::string(to_string(c))] = nlohmann::json::array();
      for (const auto& p : lookup(c)) list.push_back({{"requirement", p.requirement}, {"ears", p.ears}});
    }
    return {{"schema", kBankSchema}, {"examples", examples}};
  }

  static ExampleBank from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != kBankSchema) throw std::runtime_error(std::string("example bank is not ") + kBankSchema);
    std::array<Pairs, kNumCategories> e;
    std::array<bool, kNumCategories> seen{};
    for (const auto& [name, list] : j.at("examples").items()) {
      const EarsCategory c = parse_category(name);
      if (seen[index_of(c)]) throw std::runtime_error("example bank lists " + name + " twice");
      if (!list.is_array() || list.size() != 2) {
        throw std::runtime_error("example bank: " + name + " must have exactly two examples");
      }
      for (std::size_t i = 0; i < 2; ++i) {
        e[index_of(c)][i] = {list[i].at("requirement").get<std::string>(), list[i].at("ears").get<std::string>()};
      }
      seen[index_of(c)] = true;
    }
    for (auto c : kAllCategories) {
      if (!seen[index_of(c)]) throw std::runtime_error("example bank is missing " + std::string(to_string(c)));
    }
    return ExampleBank(std::move(e));
  }

  static ExampleBank load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open example bank '" + path.string() + "'");
    return from_json(nlohmann::json::parse(in));
  }

 private:
  std::array<Pairs, kNumCategories> entries_;
};

inline ContextContribution examples_for(const ExampleBank& bank, EarsCategory category) {
  const auto& pairs = bank.lookup(category);
  return {kExamplesKind, format_examples(pairs)};
}

inline ContextContribution infer_classifier(const RandomForestModel& model, const ExampleBank& bank,
                                            std::string_view natural_text) {
  return examples_for(bank, model.predict_text(natural_text));
}

inline ContextContribution infer_oracle(const ExampleBank& bank, const RequirementRecord& record) {
  return examples_for(bank, record.label);
}

inline std::optional<ContextContribution> infer_null(std::string_view) { return std::nullopt; }

/// A lightweight module that inspects a requirement and may contribute
/// context to the prompt.
class AuxiliaryModule {
 public:
  virtual ~AuxiliaryModule() = default;
  virtual std::string_view name() const = 0;
  virtual std::optional<ContextContribution> infer(const RequirementRecord& record) const = 0;
};

class ClassifierAuxiliary final : public AuxiliaryModule {
 public:
  ClassifierAuxiliary(std::shared_ptr<const RandomForestModel> model, ExampleBank bank)
      : model_(std::move(model)), bank_(std::move(bank)) {
    if (!model_) throw std::invalid_argument("classifier auxiliary needs a model");
  }
  std::string_view name() const override { return "classifier"; }
  std::optional<ContextContribution> infer(const RequirementRecord& record) const override {
    return infer_classifier(*model_, bank_, record.natural);
  }
  EarsCategory classify(std::string_view text) const { return model_->predict_text(text); }

 private:
  std::shared_ptr<const RandomForestModel> model_;
  ExampleBank bank_;
};

class OracleAuxiliary final : public AuxiliaryModule {
 public:
  explicit OracleAuxiliary(ExampleBank bank) : bank_(std::move(bank)) {}
  std::string_view name() const override { return "oracle"; }
  std::optional<ContextContribution> infer(const RequirementRecord& record) const override {
    return infer_oracle(bank_, record);
  }

 private:
  ExampleBank bank_;
};

class NullAuxiliary final : public AuxiliaryModule {
 public:
  std::string_view name() const override { return "null"; }
  std::optional<ContextContribution> infer(const RequirementRecord& record) const override {
    return infer_null(record.natural);
  }
};

}  // namespace page
