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

#ifndef MONOELASTIC_TRANSACTIONS_HPP_
#define MONOELASTIC_TRANSACTIONS_HPP_

#include <algorithm>
#include <cmath>
#include <compare>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "monoelastic/csv.hpp"
#include "monoelastic/errors.hpp"

namespace monoelastic {

// Calendar month stored as YYYYMM.
class YearMonth {
 public:
  constexpr YearMonth() = default;
  constexpr YearMonth(int year, int month) : year_(year), month_(month) {}

  static YearMonth from_yyyymm(long v) {
    YearMonth ym(static_cast<int>(v / 100), static_cast<int>(v % 100));
    ym.validate();
    return ym;
  }
  static YearMonth from_index(int index) {
    return YearMonth(index / 12, index % 12 + 1);
  }
  // Accepts "YYYYMM" or "YYYY-MM".
  static YearMonth parse(std::string_view s) {
    std::string digits;
    if (s.size() == 7 && s[4] == '-') {
      digits = std::string(s.substr(0, 4)) + std::string(s.substr(5, 2));
    } else {
      digits = std::string(s);
    }
    auto v = csv::parse_int(digits);
    if (!v || digits.size() != 6) {
      throw ParseError("invalid year_month '" + std::string(s) + "'");
    }
    return from_yyyymm(static_cast<long>(*v));
  }

  constexpr int year() const { return year_; }
  constexpr int month() const { return month_; }
  constexpr int yyyymm() const { return year_ * 100 + month_; }
  // Months since year 0; differences are whole-month gaps.
  constexpr int index() const { return year_ * 12 + (month_ - 1); }
  YearMonth plus_months(int n) const { return from_index(index() + n); }
  std::string str() const { return std::to_string(yyyymm()); }

  friend constexpr auto operator<=>(const YearMonth& a, const YearMonth& b) {
    return a.index() <=> b.index();
  }
  friend constexpr bool operator==(const YearMonth& a, const YearMonth& b) {
    return a.index() == b.index();
  }

 private:
  void validate() const {
    if (month_ < 1 || month_ > 12 || year_ < 1) {
      throw ParseError("invalid calendar month " + std::to_string(yyyymm()));
    }
  }
  int year_ = 1970;
  int month_ = 1;
};

inline int month_gap(YearMonth lag, YearMonth lead) { return lead.index() - lag.index(); }

// Observed signals for one item in one month.
struct MonthSignals {
  double price = 0.0;
  double units_sold = 0.0;
  double inventory = 0.0;
  double oos_days = 0.0;
  double rating_count = 0.0;
  double days_launched = 0.0;
  std::optional<double> competitor_price;
  bool substitute_available = false;
  std::vector<std::string> event_flags;  // sorted, unique

  friend bool operator==(const MonthSignals&, const MonthSignals&) = default;
};

struct ItemAttributes {
  std::string brand;
  std::string size;
  std::string category;
  std::string subcategory;

  friend bool operator==(const ItemAttributes&, const ItemAttributes&) = default;
};

// One item's aggregated record for one calendar month.
struct TransactionMonth {
  std::string item_id;
  YearMonth year_month;
  MonthSignals signals;
  ItemAttributes attributes;

  friend bool operator==(const TransactionMonth&, const TransactionMonth&) = default;
};

inline const std::vector<std::string>& transaction_columns() {
  static const std::vector<std::string> cols = {
      "item_id",       "year_month",    "price",
      "units_sold",    "inventory",     "oos_days",
      "rating_count",  "days_launched", "competitor_price",
      "substitute_available", "event_flags", "brand",
      "size",          "category",      "subcategory"};
  return cols;
}

namespace detail {

inline std::vector<std::string> normalize_events(std::vector<std::string> events) {
  events.erase(std::remove(events.begin(), events.end(), std::string()), events.end());
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  return events;
}

}  // namespace detail

// Parses and validates a transactions CSV stream. Errors carry the 1-based
// line number.
inline std::vector<TransactionMonth> ingest(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) return {};
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = csv::split_record(line);
  if (header != transaction_columns()) {
    throw ParseError("line 1: header does not match the transactions schema (expected " +
                     csv::join(transaction_columns(), ',') + ")");
  }

  std::vector<TransactionMonth> records;
  std::set<std::pair<std::string, int>> seen;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    std::vector<std::string> f;
    try {
      f = csv::split_record(line);
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
    if (f.size() != transaction_columns().size()) {
      throw ParseError(where + "expected " + std::to_string(transaction_columns().size()) +
                       " fields, got " + std::to_string(f.size()));
    }
    auto number = [&](std::size_t col) {
      auto v = csv::parse_double(f[col]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(where + "column '" + transaction_columns()[col] +
                         "' is not a number: '" + f[col] + "'");
      }
      return *v;
    };
    auto non_negative = [&](std::size_t col) {
      const double v = number(col);
      if (v < 0.0) {
        throw ParseError(where + "column '" + transaction_columns()[col] +
                         "' must be non-negative, got " + f[col]);
      }
      return v;
    };

    TransactionMonth r;
    r.item_id = f[0];
    if (r.item_id.empty()) throw ParseError(where + "empty item_id");
    try {
      r.year_month = YearMonth::parse(f[1]);
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
    MonthSignals& s = r.signals;
    s.price = non_negative(2);
    s.units_sold = non_negative(3);
    s.inventory = non_negative(4);
    s.oos_days = non_negative(5);
    if (s.oos_days > 31.0) throw ParseError(where + "oos_days must be in [0, 31]");
    s.rating_count = non_negative(6);
    s.days_launched = number(7);
    if (!f[8].empty()) {
      const double cp = number(8);
      if (cp <= 0.0) throw ParseError(where + "competitor_price must be positive when present");
      s.competitor_price = cp;
    }
    const std::string& sub = f[9];
    if (sub == "1" || sub == "true") {
      s.substitute_available = true;
    } else if (sub == "0" || sub == "false" || sub.empty()) {
      s.substitute_available = false;
    } else {
      throw ParseError(where + "substitute_available must be 0/1/true/false, got '" + sub + "'");
    }
    s.event_flags = detail::normalize_events(csv::split(f[10], ';'));
    r.attributes = ItemAttributes{f[11], f[12], f[13], f[14]};
    if (s.units_sold > 0.0 && s.price <= 0.0) {
      throw ParseError(where + "price must be positive when units_sold > 0");
    }
    if (!seen.emplace(r.item_id, r.year_month.index()).second) {
      throw IntegrityError(where + "duplicate record for (" + r.item_id + ", " +
                           r.year_month.str() + ")");
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<TransactionMonth> ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open transactions file '" + path + "'");
  return ingest(in);
}

inline void write_transactions(std::ostream& out,
                               const std::vector<TransactionMonth>& records) {
  out << csv::join(transaction_columns(), ',') << '\n';
  for (const auto& r : records) {
    const MonthSignals& s = r.signals;
    out << csv::escape(r.item_id) << ',' << r.year_month.str() << ','
        << csv::format_double(s.price) << ',' << csv::format_double(s.units_sold) << ','
        << csv::format_double(s.inventory) << ',' << csv::format_double(s.oos_days) << ','
        << csv::format_double(s.rating_count) << ','
        << csv::format_double(s.days_launched) << ','
        << (s.competitor_price ? csv::format_double(*s.competitor_price) : "") << ','
        << (s.substitute_available ? "1" : "0") << ','
        << csv::escape(csv::join(s.event_flags, ';')) << ','
        << csv::escape(r.attributes.brand) << ',' << csv::escape(r.attributes.size) << ','
        << csv::escape(r.attributes.category) << ','
        << csv::escape(r.attributes.subcategory) << '\n';
  }
}

}  // namespace monoelastic

#endif  // MONOELASTIC_TRANSACTIONS_HPP_
