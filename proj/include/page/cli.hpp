#pragma once

// Subcommand implementations behind the `page` executable. They take a fully
// resolved CliConfig and write to the given streams, so tests can drive them
// without spawning a process.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
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
#include "page/harness.hpp"
#include "page/rouge.hpp"

namespace page::cli {

inline constexpr const char* kEnvEndpoint = "PAGE_ENDPOINT";
inline constexpr const char* kEnvModel = "PAGE_MODEL";
inline constexpr const char* kEnvConfig = "PAGE_CONFIG";

struct CliConfig {
  std::filesystem::path dataset;
  std::size_t synthetic_per_class = 0;  // >0: use the synthetic corpus instead of a file
  std::uint64_t seed = 42;
  double test_fraction = 0.2;
  std::size_t folds = 5;
  std::string grid = "default";  // default | quick
  std::size_t threads = default_threads();
  std::filesystem::path out_dir = "out";
  std::filesystem::path model_file;  // classifier JSON; defaults to <out>/model.json
  std::filesystem::path template_file;
  std::filesystem::path zero_shot_template_file;
  std::filesystem::path bank_file;
  bool strict_template = false;
  std::string generator = "http";  // http | mock-gold | mock-fixed
  std::string fixed_text = "The system shall respond.";
  GeneratorConfig generation;
  std::vector<ExperimentKind> kinds = {kAllExperiments.begin(), kAllExperiments.end()};
  bool test_only = false;
  bool json = false;

  std::filesystem::path resolved_model_file() const { return model_file.empty() ? out_dir / "model.json" : model_file; }
};

/// Flag values as parsed; unset optionals leave the lower layers alone.
struct CliFlags {
  std::optional<std::string> config_file;
  std::optional<std::string> dataset;
  std::optional<std::size_t> synthetic_per_class;
  std::optional<std::uint64_t> seed;
  std::optional<double> test_fraction;
  std::optional<std::size_t> folds;
  std::optional<std::string> grid;
  std::optional<std::size_t> threads;
  std::optional<std::string> out_dir;
  std::optional<std::string> model_file;
  std::optional<std::string> template_file;
  std::optional<std::string> zero_shot_template_file;
  std::optional<std::string> bank_file;
  std::optional<bool> strict_template;
  std::optional<std::string> generator;
  std::optional<std::string> fixed_text;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<double> temperature;
  std::optional<double> timeout;
  std::optional<int> retries;
  std::optional<int> backoff_ms;
  std::optional<std::size_t> concurrency;
  std::optional<std::string> kinds;
  std::optional<bool> test_only;
  std::optional<bool> json;
};

inline std::vector<ExperimentKind> parse_kinds(std::string_view list) {
  std::vector<ExperimentKind> kinds;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const auto item = detail::trim(list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) {
      const auto k = parse_kind(item);
      if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (kinds.empty()) throw std::invalid_argument("no experiment kinds given");
  return kinds;
}

/// Config file: one flat JSON object whose keys mirror the long flag names
/// with underscores (dataset, seed, endpoint, model, ...).
inline void apply_file(CliConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "dataset") c.dataset = value.get<std::string>();
    else if (key == "synthetic") c.synthetic_per_class = value.get<std::size_t>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "test_fraction") c.test_fraction = value.get<double>();
    else if (key == "folds") c.folds = value.get<std::size_t>();
    else if (key == "grid") c.grid = value.get<std::string>();
    else if (key == "threads") c.threads = value.get<std::size_t>();
    else if (key == "out") c.out_dir = value.get<std::string>();
    else if (key == "model_file") c.model_file = value.get<std::string>();
    else if (key == "template") c.template_file = value.get<std::string>();
    else if (key == "zero_shot_template") c.zero_shot_template_file = value.get<std::string>();
    else if (key == "bank") c.bank_file = value.get<std::string>();
    else if (key == "strict_template") c.strict_template = value.get<bool>();
    else if (key == "generator") c.generator = value.get<std::string>();
    else if (key == "fixed_text") c.fixed_text = value.get<std::string>();
    else if (key == "endpoint") c.generation.endpoint = value.get<std::string>();
    else if (key == "model") c.generation.model = value.get<std::string>();
    else if (key == "temperature") c.generation.temperature = value.get<double>();
    else if (key == "timeout") c.generation.timeout_seconds = value.get<double>();
    else if (key == "retries") c.generation.max_retries = value.get<int>();
    else if (key == "backoff_ms") c.generation.backoff_ms = value.get<int>();
    else if (key == "concurrency") c.generation.concurrency = value.get<std::size_t>();
    else if (key == "kinds") c.kinds = parse_kinds(value.get<std::string>());
    else if (key == "test_only") c.test_only = value.get<bool>();
    else if (key == "json") c.json = value.get<bool>();
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  if (const char* v = std::getenv(name); v && *v) return std::string(v);
  return std::nullopt;
}

/// defaults < config file < environment < flags.
inline CliConfig resolve_config(const CliFlags& flags, const EnvLookup& env = process_env) {
  CliConfig c;
  std::optional<std::string> config_path = flags.config_file;
  if (!config_path) config_path = env(kEnvConfig);
  if (config_path) {
    std::ifstream in(*config_path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config file '" + *config_path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config file '" + *config_path + "' is not valid JSON: " + e.what());
    }
    apply_file(c, j);
  }
  if (auto v = env(kEnvEndpoint)) c.generation.endpoint = *v;
  if (auto v = env(kEnvModel)) c.generation.model = *v;

  if (flags.dataset) c.dataset = *flags.dataset;
  if (flags.synthetic_per_class) c.synthetic_per_class = *flags.synthetic_per_class;
  if (flags.seed) c.seed = *flags.seed;
  if (flags.test_fraction) c.test_fraction = *flags.test_fraction;
  if (flags.folds) c.folds = *flags.folds;
  if (flags.grid) c.grid = *flags.grid;
  if (flags.threads) c.threads = *flags.threads;
  if (flags.out_dir) c.out_dir = *flags.out_dir;
  if (flags.model_file) c.model_file = *flags.model_file;
  if (flags.template_file) c.template_file = *flags.template_file;
  if (flags.zero_shot_template_file) c.zero_shot_template_file = *flags.zero_shot_template_file;
  if (flags.bank_file) c.bank_file = *flags.bank_file;
  if (flags.strict_template) c.strict_template = *flags.strict_template;
  if (flags.generator) c.generator = *flags.generator;
  if (flags.fixed_text) c.fixed_text = *flags.fixed_text;
  if (flags.endpoint) c.generation.endpoint = *flags.endpoint;
  if (flags.model) c.generation.model = *flags.model;
  if (flags.temperature) c.generation.temperature = *flags.temperature;
  if (flags.timeout) c.generation.timeout_seconds = *flags.timeout;
  if (flags.retries) c.generation.max_retries = *flags.retries;
  if (flags.backoff_ms) c.generation.backoff_ms = *flags.backoff_ms;
  if (flags.concurrency) c.generation.concurrency = *flags.concurrency;
  if (flags.kinds) c.kinds = parse_kinds(*flags.kinds);
  if (flags.test_only) c.test_only = *flags.test_only;
  if (flags.json) c.json = *flags.json;

  c.generation.validate();
  if (c.threads == 0) c.threads = 1;
  if (c.grid != "default" && c.grid != "quick") throw std::invalid_argument("grid must be 'default' or 'quick'");
  if (c.generator != "http" && c.generator != "mock-gold" && c.generator != "mock-fixed") {
    throw std::invalid_argument("generator must be http, mock-gold or mock-fixed");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Shared steps

inline std::vector<RequirementRecord> load_records(const CliConfig& c) {
  if (c.synthetic_per_class > 0) return generate_synthetic_corpus(c.synthetic_per_class, c.seed);
  if (c.dataset.empty()) throw std::invalid_argument("no dataset given (use --dataset or --synthetic)");
  return load_dataset(c.dataset);
}

inline std::vector<HyperParams> grid_for(const CliConfig& c) {
  if (c.grid == "quick") return {HyperParams{}};
  return default_grid();
}

inline ExampleBank bank_for(const CliConfig& c) {
  return c.bank_file.empty() ? ExampleBank::standard() : ExampleBank::load(c.bank_file);
}

inline ExperimentTemplates templates_for(const CliConfig& c) {
  ExperimentTemplates t{default_template(c.strict_template), zero_shot_template(c.strict_template)};
  if (!c.template_file.empty()) t.few_shot = PromptTemplate::load(c.template_file);
  if (!c.zero_shot_template_file.empty()) t.zero_shot = PromptTemplate::load(c.zero_shot_template_file);
  return t;
}

inline std::unique_ptr<TextGenerator> generator_for(const CliConfig& c, const std::vector<RequirementRecord>& records) {
  if (c.generator == "mock-fixed") return mock_fixed_generator(c.fixed_text);
  if (c.generator == "mock-gold") {
    std::map<std::string, std::string> gold;
    for (const auto& r : records) gold.emplace(r.natural, r.gold_ears);
    return mock_gold_generator(std::move(gold));
  }
  return std::make_unique<HttpGenerator>(c.generation);
}

struct TrainingOutcome {
  DatasetSplit split;
  GridSearchResult search;
  std::vector<HyperParams> grid;
  RandomForestModel model;
};

/// Split, grid search with k-fold CV on the training part, final fit.
inline TrainingOutcome train_classifier(const CliConfig& c, const std::vector<RequirementRecord>& records) {
  TrainingOutcome t;
  t.split = stratified_split(records, c.test_fraction, c.seed);
  const auto train = select(records, t.split.train_ids);
  t.grid = grid_for(c);
  t.search = grid_search(train, t.grid, c.folds, c.seed, c.threads);
  t.model = train_text_classifier(train, t.search.best, c.seed, c.threads);
  return t;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_train(const CliConfig& c, std::ostream& out) {
  const auto records = load_records(c);
  const auto t = train_classifier(c, records);
  std::filesystem::create_directories(c.out_dir);
  const auto model_path = c.resolved_model_file();
  if (model_path.has_parent_path()) std::filesystem::create_directories(model_path.parent_path());
  save_model(t.model, model_path);

  nlohmann::json summary;
  summary["records"] = records.size();
  summary["train_size"] = t.split.train_ids.size();
  summary["test_size"] = t.split.test_ids.size();
  summary["seed"] = c.seed;
  summary["folds"] = c.folds;
  summary["best_params"] = params_to_json(t.search.best);
  summary["best_cv_accuracy"] = t.search.mean_accuracy[t.search.best_index];
  nlohmann::json grid = nlohmann::json::array();
  for (std::size_t g = 0; g < t.grid.size(); ++g) {
    grid.push_back({{"params", params_to_json(t.grid[g])}, {"mean_cv_accuracy", t.search.mean_accuracy[g]}});
  }
  summary["grid"] = grid;
  summary["model_file"] = model_path.string();

  std::string report_text;
  if (!t.split.test_ids.empty()) {
    const auto test = select(records, t.split.test_ids);
    std::vector<EarsCategory> truth, predicted;
    for (const auto& r : test) {
      truth.push_back(r.label);
      predicted.push_back(t.model.predict_text(r.natural));
    }
    const auto report = classification_report(truth, predicted);
    const auto matrix = confusion_matrix(truth, predicted);
    summary["test_report"] = to_json(report);
    summary["confusion_matrix"] = to_json(matrix);
    report_text = format_report(report) + "\nconfusion matrix (rows: true, columns: predicted)\n" + format_confusion(matrix);
  }
  {
    std::ofstream js(c.out_dir / "report.json", std::ios::binary);
    js << summary.dump(2) << "\n";
    std::ofstream txt(c.out_dir / "report.txt", std::ios::binary);
    txt << report_text;
  }

  if (c.json) {
    out << summary.dump(2) << "\n";
  } else {
    out << "records: " << records.size() << " (train " << t.split.train_ids.size() << ", test "
        << t.split.test_ids.size() << ")\n";
    out << "best config: " << t.search.best.describe() << " (mean " << c.folds
        << "-fold CV accuracy " << fixed(t.search.mean_accuracy[t.search.best_index], 4) << ")\n";
    out << "model written to " << model_path.string() << "\n";
    if (!report_text.empty()) out << "\n" << report_text;
  }
  return 0;
}

inline int cmd_classify(const CliConfig& c, const std::string& text, std::ostream& out) {
  const auto model = load_model(c.resolved_model_file());
  const auto features = model.vocabulary.vectorize_text(text);
  const auto category = model.predict(features);
  if (c.json) {
    nlohmann::json votes = nlohmann::json::object();
    const auto tally = model.votes(features);
    for (auto cat : kAllCategories) votes[std::string(to_string(cat))] = tally[index_of(cat)];
    out << nlohmann::json{{"label", std::string(to_string(category))}, {"votes", votes}}.dump() << "\n";
  } else {
    out << to_string(category) << "\n";
  }
  return 0;
}

/// mode: zero (no examples), oracle (examples for `label`), page (examples
/// for the classifier's prediction).
inline ComposedPrompt compose_for_mode(const CliConfig& c, const std::string& text, ExperimentKind mode,
                                       std::optional<EarsCategory> label) {
  const auto templates = templates_for(c);
  const auto bank = bank_for(c);
  switch (mode) {
    case ExperimentKind::ZeroShot: return compose(templates.zero_shot, {}, text);
    case ExperimentKind::DatasetSamples:
      if (!label) throw std::invalid_argument("oracle mode needs --label");
      return compose(templates.few_shot, {examples_for(bank, *label)}, text);
    case ExperimentKind::Page: {
      const auto model = load_model(c.resolved_model_file());
      return compose(templates.few_shot, {infer_classifier(model, bank, text)}, text);
    }
  }
  throw std::logic_error("unhandled mode");
}

inline int cmd_compose(const CliConfig& c, const std::string& text, ExperimentKind mode,
                       std::optional<EarsCategory> label, std::ostream& out) {
  const auto prompt = compose_for_mode(c, text, mode, label);
  if (c.json) {
    out << nlohmann::json{{"template_id", prompt.template_id}, {"contributions", prompt.contribution_kinds},
                          {"prompt", prompt.text}}
               .dump()
        << "\n";
  } else {
    out << prompt.text << "\n";
  }
  return 0;
}

inline int cmd_rewrite(const CliConfig& c, const std::string& text, ExperimentKind mode,
                       std::optional<EarsCategory> label, std::ostream& out) {
  const auto prompt = compose_for_mode(c, text, mode, label);
  std::vector<RequirementRecord> known;
  if (c.generator == "mock-gold") known = load_records(c);
  const auto generator = generator_for(c, known);
  const auto result = generator->generate(prompt.text);
  if (c.json) {
    out << nlohmann::json{{"prompt", prompt.text}, {"raw", result.raw}, {"rewrite", result.cleaned},
                          {"attempts", result.attempts}}
               .dump()
        << "\n";
  } else {
    out << result.cleaned << "\n";
  }
  return 0;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline int cmd_rouge(const CliConfig& c, const std::filesystem::path& candidates, const std::filesystem::path& references,
                     std::ostream& out) {
  const auto cand = read_lines(candidates);
  const auto ref = read_lines(references);
  if (cand.size() != ref.size()) {
    throw std::invalid_argument("candidate and reference files differ in line count (" + std::to_string(cand.size()) +
                                " vs " + std::to_string(ref.size()) + ")");
  }
  if (cand.empty()) throw std::invalid_argument("no lines to score");
  std::vector<RougeReport> reports;
  for (std::size_t i = 0; i < cand.size(); ++i) reports.push_back(score_pair(cand[i], ref[i]));
  const auto corpus = corpus_average(reports);
  if (c.json) {
    auto j = to_json(corpus.mean);
    j["count"] = corpus.count;
    out << j.dump(2) << "\n";
  } else {
    out << "| Metric | Precision | Recall | F1-Score |\n|---|---|---|---|\n";
    const std::array<const RougeScore*, 3> s = {&corpus.mean.rouge1, &corpus.mean.rouge2, &corpus.mean.rougeL};
    for (std::size_t i = 0; i < 3; ++i) {
      out << "| " << kRougeNames[i] << " | " << fixed(s[i]->precision, 3) << " | " << fixed(s[i]->recall, 3) << " | "
          << fixed(s[i]->f1, 3) << " |\n";
    }
  }
  return 0;
}

struct ExperimentOutcome {
  std::vector<ExperimentRun> runs;
  std::optional<ImprovementTable> improvement;
  std::size_t evaluated_records = 0;
};

inline ExperimentOutcome run_experiments(const CliConfig& c) {
  const auto records = load_records(c);
  const auto split = stratified_split(records, c.test_fraction, c.seed);
  const auto evaluated = c.test_only ? select(records, split.test_ids) : records;

  std::shared_ptr<const RandomForestModel> classifier;
  if (std::find(c.kinds.begin(), c.kinds.end(), ExperimentKind::Page) != c.kinds.end()) {
    if (!c.model_file.empty()) {
      classifier = std::make_shared<RandomForestModel>(load_model(c.model_file));
    } else {
      classifier = std::make_shared<RandomForestModel>(train_classifier(c, records).model);
    }
  }
  const auto bank = bank_for(c);
  const auto templates = templates_for(c);
  const auto generator = generator_for(c, records);

  ExperimentOutcome outcome;
  outcome.evaluated_records = evaluated.size();
  for (auto kind : c.kinds) {
    outcome.runs.push_back(run_experiment(kind, evaluated, classifier, bank, templates, *generator, c.seed));
  }
  const ExperimentRun* baseline = nullptr;
  std::vector<const ExperimentRun*> others;
  for (const auto& run : outcome.runs) {
    if (run.kind == ExperimentKind::ZeroShot) baseline = &run;
    else others.push_back(&run);
  }
  if (baseline && baseline->corpus && !others.empty()) outcome.improvement = improvement_table(*baseline, others);
  return outcome;
}

inline int cmd_experiment(const CliConfig& c, std::ostream& out, std::ostream& err) {
  if (c.generator == "http") HttpGenerator(c.generation).check_reachable();
  const auto outcome = run_experiments(c);
  emit_report(outcome.runs, outcome.improvement, c.out_dir);
  out << format_tables(outcome.runs, outcome.improvement);
  out << "\nwrote " << (c.out_dir / "run.json").string() << " and " << (c.out_dir / "tables.md").string() << "\n";

  int status = 0;
  for (const auto& run : outcome.runs) {
    if (run.failed > 0) {
      err << kind_label(run.kind) << ": " << run.failed << " of " << run.rows.size() << " generations failed\n";
    }
    if (!run.rows.empty() && run.failed == run.rows.size()) {
      err << "error: every generation failed for " << kind_label(run.kind) << "; first error: " << *run.rows.front().error
          << "\n";
      status = 1;
    }
  }
  return status;
}

}  // namespace page::cli
