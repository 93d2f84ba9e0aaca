// page: command-line driver for classifier training, prompt composition,
// generation, ROUGE scoring and the three-arm experiment.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "page/cli.hpp"

namespace {

void add_common(CLI::App& app, page::cli::CliFlags& f) {
  app.add_option("--config", f.config_file, "JSON config file (env PAGE_CONFIG)");
  app.add_option("--dataset", f.dataset, "CSV with columns natural,label,ears");
  app.add_option("--synthetic", f.synthetic_per_class, "use N synthetic records per class instead of --dataset");
  app.add_option("--seed", f.seed, "random seed (default 42)");
  app.add_option("--test-fraction", f.test_fraction, "held-out fraction (default 0.2)");
  app.add_option("--folds", f.folds, "cross-validation folds (default 5)");
  app.add_option("--grid", f.grid, "hyper-parameter grid: default or quick");
  app.add_option("--threads", f.threads, "training threads");
  app.add_option("--out", f.out_dir, "output directory (default out)");
  app.add_option("--model-file", f.model_file, "classifier model JSON (default <out>/model.json)");
  app.add_option("--template", f.template_file, "few-shot prompt template file");
  app.add_option("--zero-shot-template", f.zero_shot_template_file, "zero-shot prompt template file");
  app.add_option("--bank", f.bank_file, "example bank JSON");
  app.add_flag("--strict-template{true}", f.strict_template, "keep 'extra text.Requirement:' on one line");
  app.add_option("--generator", f.generator, "http, mock-gold or mock-fixed");
  app.add_option("--fixed-text", f.fixed_text, "reply used by --generator mock-fixed");
  app.add_option("--endpoint", f.endpoint, "generation server base URL (env PAGE_ENDPOINT)");
  app.add_option("--model", f.model, "generation model name (env PAGE_MODEL)");
  app.add_option("--temperature", f.temperature, "sampling temperature (default 0)");
  app.add_option("--timeout", f.timeout, "request timeout in seconds");
  app.add_option("--retries", f.retries, "retries after a failed request");
  app.add_option("--backoff-ms", f.backoff_ms, "base retry backoff in milliseconds");
  app.add_option("--concurrency", f.concurrency, "requests in flight");
  app.add_flag("--json{true}", f.json, "machine-readable output");
}

std::optional<page::EarsCategory> parse_label(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return page::parse_category(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt augmentation pipeline for EARS requirement rewriting"};
  app.require_subcommand(1);
  page::cli::CliFlags flags;
  add_common(app, flags);
  app.fallthrough();

  auto* train = app.add_subcommand("train", "grid-search, cross-validate and train the EARS classifier");

  std::string text;
  auto* classify = app.add_subcommand("classify", "print the EARS category of a requirement");
  classify->add_option("text", text, "requirement text")->required();

  std::string mode = "page";
  std::string label;
  auto* compose = app.add_subcommand("compose", "print the prompt for a requirement");
  compose->add_option("text", text, "requirement text")->required();
  compose->add_option("--mode", mode, "zero, oracle or page")->capture_default_str();
  compose->add_option("--label", label, "EARS category for --mode oracle");

  auto* rewrite = app.add_subcommand("rewrite", "rewrite a requirement through the full pipeline");
  rewrite->add_option("text", text, "requirement text")->required();
  rewrite->add_option("--mode", mode, "zero, oracle or page")->capture_default_str();
  rewrite->add_option("--label", label, "EARS category for --mode oracle");

  std::string candidates, references;
  auto* rouge = app.add_subcommand("rouge", "score aligned candidate/reference files, one record per line");
  rouge->add_option("candidates", candidates, "generated texts")->required()->check(CLI::ExistingFile);
  rouge->add_option("references", references, "reference texts")->required()->check(CLI::ExistingFile);

  auto* experiment = app.add_subcommand("experiment", "run the zero-shot / dataset-samples / PAGE comparison");
  experiment->add_option("--kinds", flags.kinds, "comma list of zero, oracle, page (default all)");
  experiment->add_flag("--test-only{true}", flags.test_only, "evaluate only the held-out split");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = page::cli::resolve_config(flags);
    if (train->parsed()) return page::cli::cmd_train(config, std::cout);
    if (classify->parsed()) return page::cli::cmd_classify(config, text, std::cout);
    if (compose->parsed()) {
      return page::cli::cmd_compose(config, text, page::parse_kind(mode), parse_label(label), std::cout);
    }
    if (rewrite->parsed()) {
      return page::cli::cmd_rewrite(config, text, page::parse_kind(mode), parse_label(label), std::cout);
    }
    if (rouge->parsed()) return page::cli::cmd_rouge(config, candidates, references, std::cout);
    if (experiment->parsed()) return page::cli::cmd_experiment(config, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
