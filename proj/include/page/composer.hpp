#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "page/auxiliary.hpp"

namespace page {

inline constexpr std::string_view kExamplesSlot = "{examples_text}";
inline constexpr std::string_view kNaturalSlot = "{natural}";

struct TemplateError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::string normalize_newlines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

/// Prompt body with exactly one {examples_text} and one {natural} slot.
class PromptTemplate {
 public:
  PromptTemplate(std::string id, std::string_view body) : id_(std::move(id)), body_(normalize_newlines(body)) {
    examples_at_ = locate(kExamplesSlot);
    natural_at_ = locate(kNaturalSlot);
  }

  static PromptTemplate load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return PromptTemplate(path.stem().string(), buffer.str());
  }

  const std::string& id() const noexcept { return id_; }
  const std::string& body() const noexcept { return body_; }

  /// Fills both slots in one pass over the template.
  std::string render(std::string_view examples_text, std::string_view natural) const {
    struct Slot {
      std::size_t at;
      std::size_t len;
      std::string_view value;
    };
    Slot first{examples_at_, kExamplesSlot.size(), examples_text};
    Slot second{natural_at_, kNaturalSlot.size(), natural};
    if (second.at < first.at) std::swap(first, second);
    std::string out;
    out.reserve(body_.size() + examples_text.size() + natural.size());
    out.append(body_, 0, first.at);
    out.append(first.value);
    out.append(body_, first.at + first.len, second.at - first.at - first.len);
    out.append(second.value);
    out.append(body_, second.at + second.len);
    return out;
  }

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;

 private:
  std::size_t locate(std::string_view slot) const {
    const auto first = body_.find(slot);
    if (first == std::string::npos) throw TemplateError("template '" + id_ + "' has no " + std::string(slot) + " slot");
    if (body_.find(slot, first + 1) != std::string::npos) {
      throw TemplateError("template '" + id_ + "' has more than one " + std::string(slot) + " slot");
    }
    return first;
  }

  std::string id_;
  std::string body_;
  std::size_t examples_at_ = 0;
  std::size_t natural_at_ = 0;
};

namespace detail {

inline constexpr std::string_view kTemplateHead =
    "You are an assistant that rewrites requirements using the EARS syntax.\n"
    "Rewrite the following requirement using the EARS syntax.\n";
inline constexpr std::string_view kRespondOnly =
    "Respond ONLY with the rewritten requirement. Do not add explanations, comments, or any extra text.";
inline constexpr std::string_view kTemplateTail =
    "Requirement:\n"
    "{natural}\n"
    "\n"
    "EARS Requirement:";

}  // namespace detail

/// The few-shot EARS template. `strict` keeps "extra text.Requirement:" on
/// one line exactly as originally typeset; the default breaks the line there.
inline PromptTemplate default_template(bool strict = false) {
  std::string body(detail::kTemplateHead);
  body += "Use the examples below as a guide.\n";
  body += "{examples_text}\n";
  body += "-----\n";
  body += detail::kRespondOnly;
  if (!strict) body += "\n";
  body += detail::kTemplateTail;
  return PromptTemplate(strict ? "ears-few-shot-strict" : "ears-few-shot", body);
}

/// default_template without the guide line, examples and separator. The
/// examples slot stays, inline and always empty, so the slot invariant holds.
inline PromptTemplate zero_shot_template(bool strict = false) {
  std::string body(detail::kTemplateHead);
  body += "{examples_text}";
  body += detail::kRespondOnly;
  if (!strict) body += "\n";
  body += detail::kTemplateTail;
  return PromptTemplate(strict ? "ears-zero-shot-strict" : "ears-zero-shot", body);
}

struct ComposedPrompt {
  std::string text;
  std::string template_id;
  std::vector<std::string> contribution_kinds;
  std::optional<std::size_t> record_id;
};

/// Substitutes the contributions' payloads (joined by blank lines, in the
/// given order) and the requirement into the template.
inline ComposedPrompt compose(const PromptTemplate& tmpl, const std::vector<ContextContribution>& contributions,
                              std::string_view natural_text, std::optional<std::size_t> record_id = std::nullopt) {
  if (natural_text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw std::invalid_argument("compose: empty requirement text");
  }
  auto has_slot = [](std::string_view s) {
    return s.find(kExamplesSlot) != std::string_view::npos || s.find(kNaturalSlot) != std::string_view::npos;
  };
  if (has_slot(natural_text)) throw std::invalid_argument("compose: requirement text contains a template slot marker");

  ComposedPrompt prompt;
  prompt.template_id = tmpl.id();
  prompt.record_id = record_id;
  std::string examples;
  for (std::size_t i = 0; i < contributions.size(); ++i) {
    if (has_slot(contributions[i].payload)) {
      throw std::invalid_argument("compose: contribution '" + contributions[i].kind + "' contains a slot marker");
    }
    if (i) examples += "\n\n";
    examples += normalize_newlines(contributions[i].payload);
    prompt.contribution_kinds.push_back(contributions[i].kind);
  }
  prompt.text = tmpl.render(examples, normalize_newlines(natural_text));
  return prompt;
}

}  // namespace page
