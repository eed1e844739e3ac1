/*
 * Copyright 2026 The monoelastic Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MONOELASTIC_PAIRS_HPP_
#define MONOELASTIC_PAIRS_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "monoelastic/csv.hpp"
#include "monoelastic/errors.hpp"
#include "monoelastic/hash.hpp"
#include "monoelastic/random.hpp"
#include "monoelastic/transactions.hpp"

namespace monoelastic {

inline constexpr int kMinMonthGap = 1;
inline constexpr int kMaxMonthGap = 12;

// One lead/lag cross-join row.
struct PairExample {
  std::string item_id;
  YearMonth lag_month;
  YearMonth lead_month;
  int month_gap = 0;
  MonthSignals lag;
  MonthSignals lead;
  ItemAttributes attributes;
  double price_change_pct = 0.0;
  std::optional<double> target;  // lead units_sold; absent for inference rows

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

inline double price_change_pct(double lag_price, double lead_price) {
  if (!(lag_price > 0.0)) {
    throw DomainError("price_change_pct: lag price must be positive, got " +
                      csv::format_double(lag_price));
  }
  return (lead_price - lag_price) / lag_price;
}

inline bool is_valid_pair(const TransactionMonth& lag, const TransactionMonth& lead) {
  const int gap = month_gap(lag.year_month, lead.year_month);
  return gap >= kMinMonthGap && gap <= kMaxMonthGap && lag.signals.inventory > 0.0 &&
         lead.signals.inventory > 0.0 && lag.signals.price > 0.0 &&
         lead.signals.price > 0.0;
}

inline PairExample make_pair(const TransactionMonth& lag, const TransactionMonth& lead) {
  PairExample p;
  p.item_id = lag.item_id;
  p.lag_month = lag.year_month;
  p.lead_month = lead.year_month;
  p.month_gap = month_gap(lag.year_month, lead.year_month);
  p.lag = lag.signals;
  p.lead = lead.signals;
  p.attributes = lag.attributes;
  p.price_change_pct = price_change_pct(lag.signals.price, lead.signals.price);
  p.target = lead.signals.units_sold;
  return p;
}

namespace detail {

inline std::map<std::string, std::vector<const TransactionMonth*>> group_by_item(
    const std::vector<TransactionMonth>& records) {
  std::map<std::string, std::vector<const TransactionMonth*>> by_item;
  for (const auto& r : records) by_item[r.item_id].push_back(&r);
  for (auto& [id, rows] : by_item) {
    std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
      return a->year_month < b->year_month;
    });
  }
  return by_item;
}

}  // namespace detail

// Every ordered (lag, lead) month pair per item with a 1..12 month gap and
// positive inventory (and price) in both months, ordered by
// (item_id, lag_month, lead_month).
inline std::vector<PairExample> build_pairs(const std::vector<TransactionMonth>& records) {
  std::vector<PairExample> pairs;
  for (const auto& [id, rows] : detail::group_by_item(records)) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        if (month_gap(rows[i]->year_month, rows[j]->year_month) > kMaxMonthGap) break;
        if (is_valid_pair(*rows[i], *rows[j])) pairs.push_back(make_pair(*rows[i], *rows[j]));
      }
    }
  }
  return pairs;
}

struct SplitPolicy {
  int out_of_time_months = 3;
  double train_fraction = 0.8;
  bool by_item = false;  // assign whole items to train or validation
};

struct SplitManifest {
  std::uint64_t seed = 0;
  YearMonth first_month;
  YearMonth last_month;
  YearMonth boundary_month;  // first out-of-time lead month
  SplitPolicy policy;
};

struct DatasetSplit {
  std::vector<PairExample> train;
  std::vector<PairExample> validation;
  std::vector<PairExample> out_of_time;
  std::vector<std::string> event_vocabulary;
  std::string schema_hash;
  SplitManifest manifest;
};

inline std::vector<std::string> event_vocabulary(const std::vector<PairExample>& pairs) {
  std::set<std::string> names;
  for (const auto& p : pairs) {
    names.insert(p.lag.event_flags.begin(), p.lag.event_flags.end());
    names.insert(p.lead.event_flags.begin(), p.lead.event_flags.end());
  }
  return {names.begin(), names.end()};
}

inline std::vector<std::string> event_vocabulary(const std::vector<TransactionMonth>& records) {
  std::set<std::string> names;
  for (const auto& r : records) {
    names.insert(r.signals.event_flags.begin(), r.signals.event_flags.end());
  }
  return {names.begin(), names.end()};
}

inline const std::vector<std::string>& pair_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"split", "item_id", "lag_month", "lead_month", "month_gap"};
    for (const char* side : {"lag", "lead"}) {
      for (const char* f : {"price", "units_sold", "inventory", "oos_days", "rating_count",
                            "days_launched", "competitor_price", "substitute_available",
                            "event_flags"}) {
        c.push_back(std::string(side) + "_" + f);
      }
    }
    for (const char* f : {"brand", "size", "category", "subcategory", "price_change_pct",
                          "target"}) {
      c.emplace_back(f);
    }
    return c;
  }();
  return cols;
}

// Fingerprint of the pair-dataset layout: column list plus event vocabulary.
inline std::string dataset_schema_hash(const std::vector<std::string>& events) {
  std::string canon = "monoelastic-pairs-v1|" + csv::join(pair_columns(), ',') + "|" +
                      csv::join(events, ',');
  return hex64(fnv1a64(canon));
}

// Out-of-time set = pairs whose lead month lies in the final
// `out_of_time_months` months of the span; the rest is shuffled with `seed`
// and cut train/validation. Each split keeps the canonical pair order.
inline DatasetSplit split(const std::vector<PairExample>& pairs, const SplitPolicy& policy,
                          std::uint64_t seed) {
  if (policy.out_of_time_months < 1) throw ConfigError("out_of_time_months must be >= 1");
  if (!(policy.train_fraction > 0.0 && policy.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0, 1)");
  }
  if (pairs.empty()) throw ConfigError("cannot split an empty pair set");
  YearMonth first = pairs.front().lag_month;
  YearMonth last = pairs.front().lead_month;
  for (const auto& p : pairs) {
    first = std::min(first, p.lag_month);
    last = std::max(last, p.lead_month);
  }
  const int span = last.index() - first.index() + 1;
  if (span < policy.out_of_time_months + 1) {
    throw ConfigError("data spans " + std::to_string(span) + " months; need at least " +
                      std::to_string(policy.out_of_time_months + 1));
  }

  DatasetSplit out;
  out.manifest = SplitManifest{seed, first, last,
                               last.plus_months(1 - policy.out_of_time_months), policy};
  out.event_vocabulary = event_vocabulary(pairs);
  out.schema_hash = dataset_schema_hash(out.event_vocabulary);

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].lead_month >= out.manifest.boundary_month) {
      out.out_of_time.push_back(pairs[i]);
    } else {
      rest.push_back(i);
    }
  }

  Rng rng(seed);
  std::vector<bool> in_train(pairs.size(), false);
  if (policy.by_item) {
    std::vector<std::string> items;
    for (std::size_t i : rest) items.push_back(pairs[i].item_id);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    rng.shuffle(std::span<std::string>(items));
    const auto n_train = static_cast<std::size_t>(
        std::llround(policy.train_fraction * static_cast<double>(items.size())));
    std::set<std::string> train_items(items.begin(),
                                      items.begin() + static_cast<std::ptrdiff_t>(n_train));
    for (std::size_t i : rest) in_train[i] = train_items.count(pairs[i].item_id) > 0;
  } else {
    rng.shuffle(std::span<std::size_t>(rest));
    const auto n_train = static_cast<std::size_t>(
        std::llround(policy.train_fraction * static_cast<double>(rest.size())));
    for (std::size_t k = 0; k < n_train; ++k) in_train[rest[k]] = true;
  }
  std::sort(rest.begin(), rest.end());
  for (std::size_t i : rest) {
    (in_train[i] ? out.train : out.validation).push_back(pairs[i]);
  }
  return out;
}

struct SkippedItem {
  std::string item_id;
  std::string reason;
};

struct InferenceSet {
  YearMonth as_of;
  std::vector<PairExample> rows;
  std::vector<SkippedItem> skipped;
};

// How each lead-side signal of an inference row is filled, since the lead
// month is unobserved.
inline std::map<std::string, std::string> carry_forward_policy() {
  return {
      {"lead_price", "initialized to lag price (price_change_pct = 0) pending override"},
      {"lead_units_sold", "unknown; target absent"},
      {"lead_inventory", "carried forward from lag month"},
      {"lead_oos_days", "carried forward from lag month"},
      {"lead_rating_count", "carried forward from lag month"},
      {"lead_days_launched", "lag value plus 30 days"},
      {"lead_competitor_price", "carried forward from lag month"},
      {"lead_substitute_available", "carried forward from lag month"},
      {"lead_event_flags",
       "taken from the item's record 12 months before the lead month; lag month flags if absent"},
  };
}

// One row per item whose as-of month record has positive inventory and
// price; the lead month is as_of + 1.
inline InferenceSet build_inference_set(const std::vector<TransactionMonth>& records,
                                        YearMonth as_of) {
  InferenceSet set;
  set.as_of = as_of;
  const YearMonth lead_month = as_of.plus_months(1);
  for (const auto& [id, rows] : detail::group_by_item(records)) {
    const TransactionMonth* lag = nullptr;
    const TransactionMonth* year_ago = nullptr;
    for (const auto* r : rows) {
      if (r->year_month == as_of) lag = r;
      if (r->year_month == lead_month.plus_months(-12)) year_ago = r;
    }
    if (lag == nullptr) {
      set.skipped.push_back({id, "no record in as-of month " + as_of.str()});
      continue;
    }
    if (!(lag->signals.inventory > 0.0)) {
      set.skipped.push_back({id, "zero inventory in as-of month " + as_of.str()});
      continue;
    }
    if (!(lag->signals.price > 0.0)) {
      set.skipped.push_back({id, "non-positive price in as-of month " + as_of.str()});
      continue;
    }
    PairExample p;
    p.item_id = id;
    p.lag_month = as_of;
    p.lead_month = lead_month;
    p.month_gap = 1;
    p.lag = lag->signals;
    p.lead = lag->signals;
    p.lead.units_sold = 0.0;
    p.lead.days_launched = lag->signals.days_launched + 30.0;
    if (year_ago != nullptr) p.lead.event_flags = year_ago->signals.event_flags;
    p.attributes = lag->attributes;
    p.price_change_pct = 0.0;
    set.rows.push_back(std::move(p));
  }
  return set;
}

inline YearMonth latest_month(const std::vector<TransactionMonth>& records) {
  if (records.empty()) throw ConfigError("no records");
  YearMonth m = records.front().year_month;
  for (const auto& r : records) m = std::max(m, r.year_month);
  return m;
}

// ---------------------------------------------------------------------------
// Pair dataset serialization: pairs.csv + manifest.json in one directory.

namespace detail {

inline void write_signals(std::ostream& out, const MonthSignals& s) {
  out << ',' << csv::format_double(s.price) << ',' << csv::format_double(s.units_sold) << ','
      << csv::format_double(s.inventory) << ',' << csv::format_double(s.oos_days) << ','
      << csv::format_double(s.rating_count) << ',' << csv::format_double(s.days_launched)
      << ',' << (s.competitor_price ? csv::format_double(*s.competitor_price) : "") << ','
      << (s.substitute_available ? "1" : "0") << ','
      << csv::escape(csv::join(s.event_flags, ';'));
}

inline void write_pair(std::ostream& out, const std::string& split_name, const PairExample& p) {
  out << split_name << ',' << csv::escape(p.item_id) << ',' << p.lag_month.str() << ','
      << p.lead_month.str() << ',' << p.month_gap;
  write_signals(out, p.lag);
  write_signals(out, p.lead);
  out << ',' << csv::escape(p.attributes.brand) << ',' << csv::escape(p.attributes.size)
      << ',' << csv::escape(p.attributes.category) << ','
      << csv::escape(p.attributes.subcategory) << ','
      << csv::format_double(p.price_change_pct) << ','
      << (p.target ? csv::format_double(*p.target) : "") << '\n';
}

inline double parse_field(const std::string& s, const std::string& where) {
  auto v = csv::parse_double(s);
  if (!v) throw ParseError(where + "not a number: '" + s + "'");
  return *v;
}

inline MonthSignals read_signals(const std::vector<std::string>& f, std::size_t at,
                                 const std::string& where) {
  MonthSignals s;
  s.price = parse_field(f[at], where);
  s.units_sold = parse_field(f[at + 1], where);
  s.inventory = parse_field(f[at + 2], where);
  s.oos_days = parse_field(f[at + 3], where);
  s.rating_count = parse_field(f[at + 4], where);
  s.days_launched = parse_field(f[at + 5], where);
  if (!f[at + 6].empty()) s.competitor_price = parse_field(f[at + 6], where);
  s.substitute_available = f[at + 7] == "1";
  s.event_flags = csv::split(f[at + 8], ';');
  return s;
}

}  // namespace detail

inline void write_pairs_csv(std::ostream& out, const DatasetSplit& ds) {
  out << csv::join(pair_columns(), ',') << '\n';
  for (const auto& p : ds.train) detail::write_pair(out, "train", p);
  for (const auto& p : ds.validation) detail::write_pair(out, "validation", p);
  for (const auto& p : ds.out_of_time) detail::write_pair(out, "out_of_time", p);
}

inline nlohmann::ordered_json manifest_json(const DatasetSplit& ds) {
  nlohmann::ordered_json j;
  j["format"] = "monoelastic-pairs-v1";
  j["schema_hash"] = ds.schema_hash;
  j["seed"] = ds.manifest.seed;
  j["first_month"] = ds.manifest.first_month.yyyymm();
  j["last_month"] = ds.manifest.last_month.yyyymm();
  j["boundary_month"] = ds.manifest.boundary_month.yyyymm();
  j["split_policy"] = {{"out_of_time_months", ds.manifest.policy.out_of_time_months},
                       {"train_fraction", ds.manifest.policy.train_fraction},
                       {"by_item", ds.manifest.policy.by_item}};
  j["row_counts"] = {{"train", ds.train.size()},
                     {"validation", ds.validation.size()},
                     {"out_of_time", ds.out_of_time.size()}};
  j["feature_list"] = pair_columns();
  j["event_vocabulary"] = ds.event_vocabulary;
  j["carry_forward_policy"] = carry_forward_policy();
  return j;
}

inline void write_dataset(const std::filesystem::path& dir, const DatasetSplit& ds) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "pairs.csv", std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / "pairs.csv").string());
    write_pairs_csv(out, ds);
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  out << manifest_json(ds).dump(2) << '\n';
}

inline DatasetSplit read_dataset(const std::filesystem::path& dir) {
  DatasetSplit ds;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw LoadError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(mf);
    ds.schema_hash = j.at("schema_hash").get<std::string>();
    ds.event_vocabulary = j.at("event_vocabulary").get<std::vector<std::string>>();
    ds.manifest.seed = j.at("seed").get<std::uint64_t>();
    ds.manifest.first_month = YearMonth::from_yyyymm(j.at("first_month").get<long>());
    ds.manifest.last_month = YearMonth::from_yyyymm(j.at("last_month").get<long>());
    ds.manifest.boundary_month = YearMonth::from_yyyymm(j.at("boundary_month").get<long>());
    const auto& sp = j.at("split_policy");
    ds.manifest.policy.out_of_time_months = sp.at("out_of_time_months").get<int>();
    ds.manifest.policy.train_fraction = sp.at("train_fraction").get<double>();
    ds.manifest.policy.by_item = sp.at("by_item").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("invalid dataset manifest: ") + e.what());
  }

  std::ifstream in(dir / "pairs.csv");
  if (!in) throw LoadError("cannot open " + (dir / "pairs.csv").string());
  std::string line;
  if (!csv::read_line(in, line) || csv::split_record(line) != pair_columns()) {
    throw ParseError("pairs.csv: unexpected header");
  }
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "pairs.csv line " + std::to_string(line_no) + ": ";
    const auto f = csv::split_record(line);
    if (f.size() != pair_columns().size()) throw ParseError(where + "wrong field count");
    PairExample p;
    p.item_id = f[1];
    p.lag_month = YearMonth::parse(f[2]);
    p.lead_month = YearMonth::parse(f[3]);
    p.month_gap = static_cast<int>(detail::parse_field(f[4], where));
    p.lag = detail::read_signals(f, 5, where);
    p.lead = detail::read_signals(f, 14, where);
    p.attributes = ItemAttributes{f[23], f[24], f[25], f[26]};
    p.price_change_pct = detail::parse_field(f[27], where);
    if (!f[28].empty()) p.target = detail::parse_field(f[28], where);
    if (f[0] == "train") {
      ds.train.push_back(std::move(p));
    } else if (f[0] == "validation") {
      ds.validation.push_back(std::move(p));
    } else if (f[0] == "out_of_time") {
      ds.out_of_time.push_back(std::move(p));
    } else {
      throw ParseError(where + "unknown split '" + f[0] + "'");
    }
  }
  if (dataset_schema_hash(ds.event_vocabulary) != ds.schema_hash) {
    throw LoadError("dataset manifest schema hash does not match its event vocabulary");
  }
  return ds;
}

}  // namespace monoelastic

#endif  // MONOELASTIC_PAIRS_HPP_
