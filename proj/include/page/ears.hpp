#pragma once

#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace page {

/// The five EARS requirement classes. Enumerator order is the canonical
/// order used for every tie-break in the library.
enum class EarsCategory : std::size_t {
  EventDriven = 0,
  Optional = 1,
  StateDriven = 2,
  Ubiquitous = 3,
  UnwantedBehavior = 4,
};

inline constexpr std::size_t kNumCategories = 5;

inline constexpr std::array<EarsCategory, kNumCategories> kAllCategories = {
    EarsCategory::EventDriven, EarsCategory::Optional, EarsCategory::StateDriven,
    EarsCategory::Ubiquitous, EarsCategory::UnwantedBehavior};

constexpr std::size_t index_of(EarsCategory c) noexcept { return static_cast<std::size_t>(c); }

inline EarsCategory category_at(std::size_t index) {
  if (index >= kNumCategories) throw std::out_of_range("EARS category index out of range");
  return kAllCategories[index];
}

/// Display name, e.g. "Event-driven", "Unwanted behavior".
constexpr std::string_view to_string(EarsCategory c) noexcept {
  switch (c) {
    case EarsCategory::EventDriven: return "Event-driven";
    case EarsCategory::Optional: return "Optional";
    case EarsCategory::StateDriven: return "State-driven";
    case EarsCategory::Ubiquitous: return "Ubiquitous";
    case EarsCategory::UnwantedBehavior: return "Unwanted behavior";
  }
  return "?";
}

namespace detail {

// trim, lowercase, drop whitespace and hyphens
inline std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char ch : raw) {
    if (std::isspace(ch) || ch == '-') continue;
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

}  // namespace detail

/// Case-, space- and hyphen-insensitive parse. Returns nullopt for anything
/// that is not one of the five labels.
inline std::optional<EarsCategory> try_parse_category(std::string_view raw) {
  const std::string key = detail::normalize_label(raw);
  if (key.empty()) return std::nullopt;
  for (EarsCategory c : kAllCategories) {
    if (detail::normalize_label(to_string(c)) == key) return c;
  }
  return std::nullopt;
}

inline EarsCategory parse_category(std::string_view raw) {
  if (auto c = try_parse_category(raw)) return *c;
  throw std::invalid_argument("unknown EARS category '" + std::string(raw) + "'");
}

}  // namespace page
