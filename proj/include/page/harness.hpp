#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "page/auxiliary.hpp"
#include "page/composer.hpp"
#include "page/dataset.hpp"
#include "page/forest.hpp"
#include "page/generator.hpp"
#include "page/parallel.hpp"
#include "page/rng.hpp"
#include "page/rouge.hpp"

namespace page {

inline constexpr const char* kRunSchema = "page-run/1";

enum class ExperimentKind { ZeroShot, DatasetSamples, Page };

inline constexpr std::array<ExperimentKind, 3> kAllExperiments = {ExperimentKind::ZeroShot,
                                                                  ExperimentKind::DatasetSamples, ExperimentKind::Page};

/// Short name used on the command line and in run.json.
constexpr std::string_view kind_id(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::ZeroShot: return "zero";
    case ExperimentKind::DatasetSamples: return "oracle";
    case ExperimentKind::Page: return "page";
  }
  return "?";
}

constexpr std::string_view kind_label(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::ZeroShot: return "Zero-Shot";
    case ExperimentKind::DatasetSamples: return "Dataset-samples";
    case ExperimentKind::Page: return "PAGE";
  }
  return "?";
}

inline ExperimentKind parse_kind(std::string_view s) {
  for (auto k : kAllExperiments) {
    if (s == kind_id(k)) return k;
  }
  if (s == "zero-shot" || s == "zeroshot") return ExperimentKind::ZeroShot;
  if (s == "dataset" || s == "dataset-samples") return ExperimentKind::DatasetSamples;
  throw std::invalid_argument("unknown experiment kind '" + std::string(s) + "' (expected zero, oracle or page)");
}

struct ExperimentTemplates {
  PromptTemplate few_shot = default_template();
  PromptTemplate zero_shot = zero_shot_template();
};

struct ExperimentRow {
  std::size_t record_id = 0;
  EarsCategory gold_label = EarsCategory::Ubiquitous;
  std::optional<EarsCategory> examples_category;  // whose examples went into the prompt
  std::string prompt;
  std::string raw;
  std::string generation;  // cleaned
  int attempts = 0;
  std::optional<RougeReport> scores;
  std::optional<std::string> error;

  bool failed() const noexcept { return error.has_value(); }
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string model;
  std::string template_id;
};

struct ExperimentRun {
  ExperimentKind kind = ExperimentKind::ZeroShot;
  RunConfig config;
  std::vector<ExperimentRow> rows;
  std::optional<CorpusRougeReport> corpus;  // absent when every row failed
  std::size_t failed = 0;
};

/// One rewrite through the pipeline: auxiliaries, composer, generator.
inline GenerationResult rewrite(const std::vector<const AuxiliaryModule*>& auxiliaries, const PromptTemplate& tmpl,
                                const TextGenerator& generator, const RequirementRecord& record) {
  std::vector<ContextContribution> contributions;
  for (const auto* aux : auxiliaries) {
    if (auto c = aux->infer(record)) contributions.push_back(std::move(*c));
  }
  return generator.generate(compose(tmpl, contributions, record.natural, record.id).text);
}

/// Runs one experiment arm over `records`: pick the auxiliary for `kind`,
/// compose, generate (up to generator.max_in_flight() at once), clean and
/// score against the gold rewrite. Generation failures are kept as failed
/// rows and left out of the corpus averages.
inline ExperimentRun run_experiment(ExperimentKind kind, const std::vector<RequirementRecord>& records,
                                    std::shared_ptr<const RandomForestModel> classifier, const ExampleBank& bank,
                                    const ExperimentTemplates& templates, const TextGenerator& generator,
                                    std::uint64_t seed) {
  std::unique_ptr<AuxiliaryModule> aux;
  switch (kind) {
    case ExperimentKind::ZeroShot: aux = std::make_unique<NullAuxiliary>(); break;
    case ExperimentKind::DatasetSamples: aux = std::make_unique<OracleAuxiliary>(bank); break;
    case ExperimentKind::Page:
      if (!classifier) throw std::invalid_argument("the PAGE experiment needs a trained classifier");
      aux = std::make_unique<ClassifierAuxiliary>(classifier, bank);
      break;
  }
  const PromptTemplate& tmpl = kind == ExperimentKind::ZeroShot ? templates.zero_shot : templates.few_shot;

  ExperimentRun run;
  run.kind = kind;
  run.config = {seed, generator.describe(), tmpl.id()};
  run.rows.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto& row = run.rows[i];
    row.record_id = rec.id;
    row.gold_label = rec.label;
    if (kind == ExperimentKind::DatasetSamples) row.examples_category = rec.label;
    if (kind == ExperimentKind::Page) row.examples_category = classifier->predict_text(rec.natural);
    std::vector<ContextContribution> contributions;
    if (auto c = aux->infer(rec)) contributions.push_back(std::move(*c));
    row.prompt = compose(tmpl, contributions, rec.natural, rec.id).text;
  }

  parallel_for(records.size(), generator.max_in_flight(), [&](std::size_t i) {
    auto& row = run.rows[i];
    try {
      GenerationResult g = generator.generate(row.prompt);
      row.raw = std::move(g.raw);
      row.generation = std::move(g.cleaned);
      row.attempts = g.attempts;
      row.scores = score_pair(row.generation, records[i].gold_ears);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  std::sort(run.rows.begin(), run.rows.end(),
            [](const ExperimentRow& a, const ExperimentRow& b) { return a.record_id < b.record_id; });
  std::vector<RougeReport> scored;
  for (const auto& row : run.rows) {
    if (row.failed()) ++run.failed;
    else scored.push_back(*row.scores);
  }
  if (!scored.empty()) run.corpus = corpus_average(scored);
  return run;
}

// ---------------------------------------------------------------------------
// Improvement over the baseline

using RecallTriple = std::array<double, 3>;  // ROUGE-1, ROUGE-2, ROUGE-L

inline constexpr std::array<std::string_view, 3> kRougeNames = {"ROUGE1", "ROUGE2", "ROUGEL"};

struct ImprovementColumn {
  std::string label;
  std::array<std::optional<double>, 3> pct;  // nullopt when the baseline recall is zero
};

struct ImprovementTable {
  std::string baseline_label;
  std::vector<ImprovementColumn> columns;
};

inline RecallTriple recalls_of(const CorpusRougeReport& r) {
  return {r.mean.rouge1.recall, r.mean.rouge2.recall, r.mean.rougeL.recall};
}

/// pct = (recall / baseline recall - 1) * 100, per metric.
inline ImprovementTable improvement_from_recalls(std::string baseline_label, const RecallTriple& baseline,
                                                 const std::vector<std::pair<std::string, RecallTriple>>& others) {
  ImprovementTable table;
  table.baseline_label = std::move(baseline_label);
  for (const auto& [label, recalls] : others) {
    ImprovementColumn col;
    col.label = label;
    for (std::size_t m = 0; m < 3; ++m) {
      if (baseline[m] > 0.0) col.pct[m] = (recalls[m] == baseline[m]) ? 0.0 : (recalls[m] / baseline[m] - 1.0) * 100.0;
    }
    table.columns.push_back(std::move(col));
  }
  return table;
}

inline ImprovementTable improvement_table(const ExperimentRun& baseline, const std::vector<const ExperimentRun*>& others) {
  if (!baseline.corpus) throw std::invalid_argument("baseline run has no scored rows");
  std::vector<std::pair<std::string, RecallTriple>> cols;
  for (const auto* run : others) {
    RecallTriple r{0.0, 0.0, 0.0};
    if (run->corpus) r = recalls_of(*run->corpus);
    cols.emplace_back(std::string(kind_label(run->kind)), r);
  }
  return improvement_from_recalls(std::string(kind_label(baseline.kind)), recalls_of(*baseline.corpus), cols);
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const ExperimentRow& row) {
  nlohmann::json j = {{"record_id", row.record_id},
                      {"gold_label", std::string(to_string(row.gold_label))},
                      {"examples_category", row.examples_category ? nlohmann::json(std::string(to_string(*row.examples_category)))
                                                                  : nlohmann::json(nullptr)},
                      {"prompt", row.prompt},
                      {"raw", row.raw},
                      {"generation", row.generation},
                      {"attempts", row.attempts},
                      {"rouge", row.scores ? to_json(*row.scores) : nlohmann::json(nullptr)},
                      {"error", row.error ? nlohmann::json(*row.error) : nlohmann::json(nullptr)}};
  return j;
}

inline nlohmann::json to_json(const ExperimentRun& run) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : run.rows) rows.push_back(to_json(row));
  return {{"kind", std::string(kind_id(run.kind))},
          {"label", std::string(kind_label(run.kind))},
          {"config", {{"seed", run.config.seed}, {"model", run.config.model}, {"template_id", run.config.template_id}}},
          {"evaluated", run.rows.size() - run.failed},
          {"failed", run.failed},
          {"corpus", run.corpus ? to_json(run.corpus->mean) : nlohmann::json(nullptr)},
          {"rows", rows}};
}

inline nlohmann::json to_json(const ImprovementTable& t) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : t.columns) {
    nlohmann::json pct = nlohmann::json::object();
    for (std::size_t m = 0; m < 3; ++m) pct[std::string(kRougeNames[m])] = c.pct[m] ? nlohmann::json(*c.pct[m]) : nlohmann::json(nullptr);
    cols.push_back({{"label", c.label}, {"recall_improvement_pct", pct}});
  }
  return {{"baseline", t.baseline_label}, {"columns", cols}};
}

inline std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

/// Markdown: per-run precision/recall/F1 for each metric, then the recall
/// improvement over the baseline when one is given.
inline std::string format_tables(const std::vector<ExperimentRun>& runs, const std::optional<ImprovementTable>& improvement) {
  std::ostringstream md;
  md << "## ROUGE results\n\n";
  md << "| Experiment | Metric | Precision | Recall | F1-Score |\n";
  md << "|---|---|---|---|---|\n";
  for (const auto& run : runs) {
    if (!run.corpus) {
      md << "| " << kind_label(run.kind) << " | - | n/a | n/a | n/a |\n";
      continue;
    }
    const auto& m = run.corpus->mean;
    const std::array<const RougeScore*, 3> scores = {&m.rouge1, &m.rouge2, &m.rougeL};
    for (std::size_t i = 0; i < 3; ++i) {
      md << "| " << kind_label(run.kind) << " | " << kRougeNames[i] << " | " << fixed(scores[i]->precision, 3) << " | "
         << fixed(scores[i]->recall, 3) << " | " << fixed(scores[i]->f1, 3) << " |\n";
    }
  }
  md << "\n| Experiment | Evaluated | Failed |\n|---|---|---|\n";
  for (const auto& run : runs) {
    md << "| " << kind_label(run.kind) << " | " << run.rows.size() - run.failed << " | " << run.failed << " |\n";
  }
  if (improvement && !improvement->columns.empty()) {
    md << "\n## Recall improvement over " << improvement->baseline_label << "\n\n| Metric |";
    for (const auto& c : improvement->columns) md << " " << c.label << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < improvement->columns.size(); ++i) md << "---|";
    md << "\n";
    for (std::size_t m = 0; m < 3; ++m) {
      md << "| " << kRougeNames[m] << " |";
      for (const auto& c : improvement->columns) md << " " << (c.pct[m] ? fixed(*c.pct[m], 2) + "%" : "n/a") << " |";
      md << "\n";
    }
  }
  return md.str();
}

/// Writes run.json and tables.md into `out_dir` (created if needed).
inline void emit_report(const std::vector<ExperimentRun>& runs, const std::optional<ImprovementTable>& improvement,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json doc = {{"schema", kRunSchema}, {"runs", nlohmann::json::array()}};
  for (const auto& run : runs) doc["runs"].push_back(to_json(run));
  doc["improvement"] = improvement ? to_json(*improvement) : nlohmann::json(nullptr);
  {
    std::ofstream out(out_dir / "run.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (out_dir / "run.json").string());
    out << doc.dump(2) << "\n";
  }
  std::ofstream md(out_dir / "tables.md", std::ios::binary);
  if (!md) throw std::runtime_error("cannot write " + (out_dir / "tables.md").string());
  md << format_tables(runs, improvement);
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace detail {

struct SyntheticVocab {
  std::vector<std::string> subjects = {
      "system", "application", "controller", "server", "portal", "gateway", "scheduler", "dashboard",
      "billing module", "mobile app", "sensor hub", "web client"};
  std::vector<std::string> actions = {
      "record the event in the audit log", "send a confirmation email to the user", "lock the user account",
      "display the current status", "encrypt stored customer data", "refresh the inventory list",
      "notify the operator", "save the current draft", "generate a summary report", "disable the payment button",
      "retry the failed request", "show a progress indicator", "archive old messages", "update the delivery estimate",
      "validate the submitted form", "sync the local cache", "play an audible alert", "export the results to a file",
      "restrict access to the settings page", "close all open connections"};
  std::vector<std::string> events = {
      "the user submits the form", "a new order is received", "the session expires",
      "the operator presses the stop button", "a sensor reading arrives", "the nightly backup completes",
      "the user logs out", "a payment is confirmed", "the file upload finishes", "the door is opened",
      "a new version is published", "the timer reaches zero"};
  std::vector<std::string> states = {
      "the vehicle is moving", "maintenance mode is enabled", "the battery level is low", "the user is logged in",
      "a download is in progress", "the network is unavailable", "the alarm is armed", "the account is suspended",
      "the printer is busy", "the screen is locked", "the pump is running", "the store is closed"};
  std::vector<std::string> faults = {
      "the password is entered incorrectly three times", "the database connection fails",
      "the input file is corrupted", "the payment is declined", "the temperature exceeds the safe limit",
      "the disk is full", "an invalid token is presented", "the remote service does not respond",
      "the checksum does not match", "the memory usage exceeds the threshold", "a duplicate record is detected",
      "the signal is lost"};
  std::vector<std::string> features = {
      "the device has a camera", "the user has enabled notifications", "a printer is connected",
      "the premium plan is active", "the hardware supports encryption", "a second display is available",
      "the vehicle has a navigation unit", "the customer has opted in to marketing", "a fingerprint reader is installed",
      "the site has multiple warehouses", "the tenant has single sign-on configured", "the browser supports offline storage"};
  std::vector<std::string> modals = {"shall", "must", "should", "will"};
};

inline const std::string& pick(const std::vector<std::string>& items, Rng& rng) {
  return items[static_cast<std::size_t>(uniform_below(rng, items.size()))];
}

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

inline RequirementRecord synthesize(EarsCategory category, const SyntheticVocab& v, Rng& rng) {
  const std::string subject = pick(v.subjects, rng);
  const std::string action = pick(v.actions, rng);
  const std::string modal = pick(v.modals, rng);
  const bool leading = uniform_below(rng, 4) == 0;  // condition-first phrasing
  RequirementRecord r;
  r.label = category;
  auto conditional = [&](std::string_view cue, const std::string& condition) {
    const std::string cue_s(cue);
    r.natural = leading ? capitalize(cue_s) + " " + condition + ", the " + subject + " " + modal + " " + action + "."
                        : "The " + subject + " " + modal + " " + action + " " + cue_s + " " + condition + ".";
    r.gold_ears = capitalize(cue_s) + " " + condition + ", the " + subject + " shall " + action + ".";
  };
  switch (category) {
    case EarsCategory::Ubiquitous:
      r.natural = "The " + subject + " " + modal + " " + action + ".";
      r.gold_ears = "The " + subject + " shall always " + action + ".";
      break;
    case EarsCategory::EventDriven: conditional("when", pick(v.events, rng)); break;
    case EarsCategory::StateDriven: conditional("while", pick(v.states, rng)); break;
    case EarsCategory::UnwantedBehavior: conditional("if", pick(v.faults, rng)); break;
    case EarsCategory::Optional: conditional("where", pick(v.features, rng)); break;
  }
  return r;
}

}  // namespace detail

/// Template-built requirements with EARS cue structures and their gold
/// rewrites, `n_per_class` of each category, shuffled, ids 0..n-1.
inline std::vector<RequirementRecord> generate_synthetic_corpus(std::size_t n_per_class, std::uint64_t seed) {
  const detail::SyntheticVocab vocab;
  std::vector<RequirementRecord> records;
  records.reserve(n_per_class * kNumCategories);
  for (auto c : kAllCategories) {
    Rng rng = derive_rng(seed, 500 + index_of(c));
    for (std::size_t i = 0; i < n_per_class; ++i) records.push_back(detail::synthesize(c, vocab, rng));
  }
  Rng order = derive_rng(seed, 999);
  shuffle_in_place(std::span(records), order);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].id = i;
  return records;
}

}  // namespace page
