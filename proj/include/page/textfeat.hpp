#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace page {

namespace detail {

// Decodes one UTF-8 sequence starting at text[pos]. Invalid bytes decode to
// U+FFFD and consume a single byte.
inline char32_t decode_utf8(std::string_view text, std::size_t& pos) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  std::size_t len = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++pos;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + len > text.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char cont = byte(pos + i);
    if ((cont & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  pos += len;
  return cp;
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Letters and digits. Outside ASCII, a code point counts as a word
// character unless it falls in a punctuation, symbol, space, mark or
// private-use block. Locale independent on purpose.
inline bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  }
  if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2B9 && cp <= 0x36F) return false;  // modifier symbols, combining marks
  if (cp == 0x37E || cp == 0x387 || cp == 0x384 || cp == 0x385) return false;
  if (cp >= 0x482 && cp <= 0x489) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols, arrows, math
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xD800 && cp <= 0xF8FF) return false;  // surrogates, private use
  if (cp >= 0xFE00 && cp <= 0xFE6F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0xFF3B && cp <= 0xFF40) return false;
  if (cp >= 0xFF5B && cp <= 0xFF65) return false;
  if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji and pictographs
  if (cp >= 0xE0000) return false;
  return true;
}

// Simple case folding for Latin, Greek and Cyrillic.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0xC0) return cp;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x137) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp >= 0x139 && cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x14A && cp <= 0x177) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  return cp;
}

}  // namespace detail

/// Lowercased maximal runs of letters or digits, in order, duplicates kept.
/// This is the one tokenizer used for both features and ROUGE.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = detail::decode_utf8(text, pos);
    if (detail::is_word_char(cp)) {
      detail::encode_utf8(detail::to_lower(cp), current);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

using TokenList = std::vector<std::string>;

/// Sparse TF-IDF vector. Indices strictly increasing; L2 norm 1 unless empty.
struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  bool empty() const noexcept { return entries.empty(); }
  double norm() const {
    double sum = 0.0;
    for (const auto& [index, weight] : entries) sum += weight * weight;
    return std::sqrt(sum);
  }
  /// Weight at `index`, zero when absent.
  double at(std::uint32_t index) const {
    std::size_t lo = 0, hi = entries.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (entries[mid].first < index) lo = mid + 1;
      else hi = mid;
    }
    return (lo < entries.size() && entries[lo].first == index) ? entries[lo].second : 0.0;
  }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Token -> dense feature index, plus document frequencies from the fitting
/// corpus. Indices follow lexicographic token order.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary fit(const std::vector<TokenList>& documents) {
    if (documents.empty()) throw std::invalid_argument("cannot fit a vocabulary on an empty corpus");
    std::map<std::string, std::size_t, std::less<>> df;
    for (const auto& doc : documents) {
      std::map<std::string_view, bool> seen;
      for (const auto& token : doc) {
        if (seen.emplace(token, true).second) ++df[token];
      }
    }
    Vocabulary vocab;
    vocab.n_documents_ = documents.size();
    for (auto& [token, count] : df) {
      vocab.index_.emplace(token, static_cast<std::uint32_t>(vocab.tokens_.size()));
      vocab.tokens_.push_back(token);
      vocab.df_.push_back(count);
    }
    vocab.compute_idf();
    return vocab;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t n_documents() const noexcept { return n_documents_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::optional<std::uint32_t> index_of(std::string_view token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t df(std::uint32_t index) const { return df_.at(index); }
  double idf(std::uint32_t index) const { return idf_.at(index); }

  /// tf * idf with raw counts, then L2 normalised. Unknown tokens are ignored.
  FeatureVector vectorize(const TokenList& tokens) const {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& token : tokens) {
      if (auto idx = index_of(token)) ++counts[*idx];
    }
    FeatureVector v;
    v.entries.reserve(counts.size());
    for (const auto& [idx, tf] : counts) v.entries.emplace_back(idx, static_cast<double>(tf) * idf_[idx]);
    const double n = v.norm();
    if (n > 0.0) {
      for (auto& entry : v.entries) entry.second /= n;
    }
    return v;
  }

  FeatureVector vectorize_text(std::string_view text) const { return vectorize(tokenize(text)); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"n_documents", n_documents_}, {"tokens", tokens_}, {"df", df_}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary vocab;
    vocab.n_documents_ = j.at("n_documents").get<std::size_t>();
    vocab.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    vocab.df_ = j.at("df").get<std::vector<std::size_t>>();
    if (vocab.tokens_.size() != vocab.df_.size()) throw std::runtime_error("vocabulary: tokens and df differ in length");
    for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
      if (vocab.df_[i] == 0) throw std::runtime_error("vocabulary: zero document frequency for '" + vocab.tokens_[i] + "'");
      if (!vocab.index_.emplace(vocab.tokens_[i], static_cast<std::uint32_t>(i)).second) {
        throw std::runtime_error("vocabulary: duplicate token '" + vocab.tokens_[i] + "'");
      }
    }
    vocab.compute_idf();
    return vocab;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.n_documents_ == b.n_documents_ && a.tokens_ == b.tokens_ && a.df_ == b.df_;
  }

 private:
  // smoothed: ln((1 + N) / (1 + df)) + 1
  void compute_idf() {
    idf_.resize(df_.size());
    const double n = static_cast<double>(n_documents_);
    for (std::size_t i = 0; i < df_.size(); ++i) {
      idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df_[i]))) + 1.0;
    }
  }

  std::size_t n_documents_ = 0;
  std::vector<std::string> tokens_;
  std::vector<std::size_t> df_;
  std::vector<double> idf_;
  std::map<std::string, std::uint32_t, std::less<>> index_;
};

inline Vocabulary fit_vocabulary(const std::vector<TokenList>& train_docs) { return Vocabulary::fit(train_docs); }

inline FeatureVector vectorize(const Vocabulary& vocab, const TokenList& tokens) { return vocab.vectorize(tokens); }

}  // namespace page
