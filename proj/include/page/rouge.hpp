#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "page/textfeat.hpp"

namespace page {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const RougeScore&, const RougeScore&) = default;
};

struct RougeReport {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;

  friend bool operator==(const RougeReport&, const RougeReport&) = default;
};

struct CorpusRougeReport {
  RougeReport mean;
  std::size_t count = 0;
};

/// F1 from matches and the two sequence sizes; zero denominators give zero.
inline RougeScore make_score(std::size_t matches, std::size_t candidate_total, std::size_t reference_total) {
  RougeScore s;
  if (candidate_total) s.precision = static_cast<double>(matches) / static_cast<double>(candidate_total);
  if (reference_total) s.recall = static_cast<double>(matches) / static_cast<double>(reference_total);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

namespace detail {

inline std::map<std::vector<std::string_view>, std::size_t> ngram_counts(std::span<const std::string> tokens,
                                                                        std::size_t n) {
  std::map<std::vector<std::string_view>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::vector<std::string_view> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[std::move(gram)];
  }
  return counts;
}

}  // namespace detail

/// ROUGE-N with clipped counts: each n-gram matches at most
/// min(candidate count, reference count) times.
inline RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be at least 1");
  const auto cand = detail::ngram_counts(candidate, n);
  const auto ref = detail::ngram_counts(reference, n);
  std::size_t matches = 0;
  for (const auto& [gram, count] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) matches += std::min(count, it->second);
  }
  const std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  return make_score(matches, cand_total, ref_total);
}

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L: LCS length over reference length (recall) and candidate length
/// (precision), balanced F1.
inline RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return make_score(lcs_length(candidate, reference), candidate.size(), reference.size());
}

inline RougeReport score_tokens(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return {rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference)};
}

inline RougeReport score_pair(std::string_view candidate_text, std::string_view reference_text) {
  const auto cand = tokenize(candidate_text);
  const auto ref = tokenize(reference_text);
  return score_tokens(cand, ref);
}

/// Arithmetic mean of each of the nine cells. Values are summed in sorted
/// order so the result does not depend on the order of `reports`.
inline CorpusRougeReport corpus_average(std::span<const RougeReport> reports) {
  if (reports.empty()) throw std::invalid_argument("corpus_average: no reports");
  auto mean_of = [&](auto&& field) {
    std::vector<double> values;
    values.reserve(reports.size());
    for (const auto& r : reports) values.push_back(field(r));
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
  };
  auto mean_score = [&](auto&& metric) {
    return RougeScore{mean_of([&](const RougeReport& r) { return metric(r).precision; }),
                      mean_of([&](const RougeReport& r) { return metric(r).recall; }),
                      mean_of([&](const RougeReport& r) { return metric(r).f1; })};
  };
  CorpusRougeReport out;
  out.count = reports.size();
  out.mean.rouge1 = mean_score([](const RougeReport& r) -> const RougeScore& { return r.rouge1; });
  out.mean.rouge2 = mean_score([](const RougeReport& r) -> const RougeScore& { return r.rouge2; });
  out.mean.rougeL = mean_score([](const RougeReport& r) -> const RougeScore& { return r.rougeL; });
  return out;
}

inline nlohmann::json to_json(const RougeScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

inline nlohmann::json to_json(const RougeReport& r) {
  return {{"rouge1", to_json(r.rouge1)}, {"rouge2", to_json(r.rouge2)}, {"rougeL", to_json(r.rougeL)}};
}

}  // namespace page
