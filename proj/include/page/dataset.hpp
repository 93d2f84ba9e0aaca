#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "page/csv.hpp"
#include "page/ears.hpp"
#include "page/rng.hpp"

namespace page {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RequirementRecord {
  std::size_t id = 0;
  std::string natural;
  EarsCategory label = EarsCategory::Ubiquitous;
  std::string gold_ears;

  friend bool operator==(const RequirementRecord&, const RequirementRecord&) = default;
};

struct CsvColumns {
  std::string natural = "natural";
  std::string label = "label";
  std::string ears = "ears";
};

/// Sorted id lists; disjoint, union is every record id.
struct DatasetSplit {
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
};

struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;  // each sorted

  std::size_t k() const noexcept { return folds.size(); }
  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

namespace detail {

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace detail

inline std::vector<RequirementRecord> parse_dataset(std::string_view text, const CsvColumns& columns = {}) {
  std::vector<csv::Row> rows;
  try {
    rows = csv::parse(text);
  } catch (const csv::ParseError& e) {
    throw DatasetError(e.what());
  }
  if (rows.empty()) throw DatasetError("dataset has no header row");

  const auto& header = rows.front().fields;
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DatasetError("dataset header is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t natural_col = column(columns.natural);
  const std::size_t label_col = column(columns.label);
  const std::size_t ears_col = column(columns.ears);

  std::vector<RequirementRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "row " + std::to_string(r) + " (line " + std::to_string(row.line) + ")";
    if (row.fields.size() != header.size()) {
      throw DatasetError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                         std::to_string(row.fields.size()));
    }
    RequirementRecord rec;
    rec.id = records.size();
    rec.natural = row.fields[natural_col];
    rec.gold_ears = row.fields[ears_col];
    if (detail::is_blank(rec.natural)) throw DatasetError(where + ": empty '" + columns.natural + "' field");
    if (detail::is_blank(rec.gold_ears)) throw DatasetError(where + ": empty '" + columns.ears + "' field");
    auto label = try_parse_category(row.fields[label_col]);
    if (!label) throw DatasetError(where + ": unknown label '" + row.fields[label_col] + "'");
    rec.label = *label;
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<RequirementRecord> load_dataset(const std::filesystem::path& path, const CsvColumns& columns = {}) {
  if (!std::filesystem::exists(path)) throw DatasetError("dataset file '" + path.string() + "' does not exist");
  return parse_dataset(detail::read_file(path), columns);
}

inline std::string format_dataset(const std::vector<RequirementRecord>& records, const CsvColumns& columns = {}) {
  std::string out = csv::format_row({columns.natural, columns.label, columns.ears});
  for (const auto& r : records) out += csv::format_row({r.natural, std::string(to_string(r.label)), r.gold_ears});
  return out;
}

inline void save_dataset(const std::vector<RequirementRecord>& records, const std::filesystem::path& path,
                         const CsvColumns& columns = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write '" + path.string() + "'");
  out << format_dataset(records, columns);
}

/// Per-class test quotas: floor of class_count * fraction, then the slots
/// left to reach round(n * fraction) go to the largest fractional remainders
/// (ties by canonical class order).
inline std::array<std::size_t, kNumCategories> stratified_quotas(const std::array<std::size_t, kNumCategories>& counts,
                                                                 double test_fraction) {
  const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  std::array<std::size_t, kNumCategories> quota{};
  std::array<double, kNumCategories> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    const double exact = static_cast<double>(counts[c]) * test_fraction;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    assigned += quota[c];
  }
  std::array<std::size_t, kNumCategories> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t c : order) {
    if (assigned >= total) break;
    if (counts[c] == 0 || quota[c] >= counts[c]) continue;
    ++quota[c];
    ++assigned;
  }
  return quota;
}

inline DatasetSplit stratified_split(const std::vector<RequirementRecord>& records, double test_fraction,
                                     std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in [0, 1)");
  }
  if (records.empty()) throw DatasetError("cannot split an empty dataset");

  std::array<std::vector<std::size_t>, kNumCategories> by_class;
  for (const auto& r : records) by_class[index_of(r.label)].push_back(r.id);
  std::array<std::size_t, kNumCategories> counts{};
  for (std::size_t c = 0; c < kNumCategories; ++c) counts[c] = by_class[c].size();
  const auto quota = stratified_quotas(counts, test_fraction);

  DatasetSplit split;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    auto ids = by_class[c];
    std::sort(ids.begin(), ids.end());
    Rng rng = derive_rng(seed, c);
    shuffle_in_place(std::span(ids), rng);
    split.test_ids.insert(split.test_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    split.train_ids.insert(split.train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(quota[c]), ids.end());
  }
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

/// Stratified k-fold plan over `ids` (with parallel `labels`). Each class is
/// shuffled and dealt round-robin; the dealing position carries over between
/// classes so fold sizes stay within one of each other.
inline FoldPlan make_folds(std::span<const std::size_t> ids, std::span<const EarsCategory> labels, std::size_t k,
                           std::uint64_t seed) {
  if (ids.size() != labels.size()) throw std::invalid_argument("make_folds: ids and labels differ in length");
  if (k < 2) throw std::invalid_argument("make_folds: k must be at least 2");

  std::array<std::vector<std::size_t>, kNumCategories> by_class;
  for (std::size_t i = 0; i < ids.size(); ++i) by_class[index_of(labels[i])].push_back(ids[i]);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (!by_class[c].empty() && by_class[c].size() < k) {
      throw DatasetError("cannot build " + std::to_string(k) + " folds: class " + std::string(to_string(category_at(c))) +
                         " has only " + std::to_string(by_class[c].size()) + " records");
    }
  }
  if (ids.size() < k) throw DatasetError("cannot build " + std::to_string(k) + " folds from " + std::to_string(ids.size()) + " records");

  FoldPlan plan;
  plan.folds.resize(k);
  std::size_t next = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    auto& members = by_class[c];
    std::sort(members.begin(), members.end());
    Rng rng = derive_rng(seed, 1000 + c);
    shuffle_in_place(std::span(members), rng);
    for (std::size_t id : members) {
      plan.folds[next].push_back(id);
      next = (next + 1) % k;
    }
  }
  for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
  return plan;
}

/// Records with the given ids, in id order of `ids`.
inline std::vector<RequirementRecord> select(const std::vector<RequirementRecord>& records,
                                             std::span<const std::size_t> ids) {
  std::map<std::size_t, const RequirementRecord*> index;
  for (const auto& r : records) index.emplace(r.id, &r);
  std::vector<RequirementRecord> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DatasetError("no record with id " + std::to_string(id));
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace page
