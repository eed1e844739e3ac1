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

#ifndef MONOELASTIC_SYNTHETIC_HPP_
#define MONOELASTIC_SYNTHETIC_HPP_

#include <algorithm>
#include <array>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "monoelastic/csv.hpp"
#include "monoelastic/errors.hpp"
#include "monoelastic/random.hpp"
#include "monoelastic/transactions.hpp"

namespace monoelastic {

// Arc elasticity of a constant-elasticity law D = A p^eps for a finite price
// change; independent of A.
inline double true_arc_elasticity(double epsilon, double p, double dp) {
  if (!(p > 0.0) || dp == 0.0 || !(p + dp > 0.0)) {
    throw DomainError("true_arc_elasticity requires p > 0, dp != 0 and p + dp > 0");
  }
  const double base = std::pow(p, epsilon);
  return (std::pow(p + dp, epsilon) - base) / base * (p / dp);
}

// Two-segment power law, continuous at the kink:
//   D(p) = A p^eps_low                         for p <= kink
//   D(p) = A kink^(eps_low - eps_high) p^eps_high  for p > kink
// A constant-elasticity law has eps_high == eps_low.
struct DemandLaw {
  double scale = 1.0;
  double epsilon_low = -1.0;
  double epsilon_high = -1.0;
  double kink_price = 1.0;

  static DemandLaw constant(double scale, double epsilon) {
    return DemandLaw{scale, epsilon, epsilon, 1.0};
  }
  bool is_constant() const { return epsilon_low == epsilon_high; }

  double mean_units(double p) const {
    if (is_constant() || p <= kink_price) return scale * std::pow(p, epsilon_low);
    return scale * std::pow(kink_price, epsilon_low - epsilon_high) *
           std::pow(p, epsilon_high);
  }

  double arc_elasticity(double p, double dp) const {
    if (is_constant()) return true_arc_elasticity(epsilon_low, p, dp);
    if (!(p > 0.0) || dp == 0.0 || !(p + dp > 0.0)) {
      throw DomainError("arc elasticity requires p > 0, dp != 0 and p + dp > 0");
    }
    const double base = mean_units(p);
    return (mean_units(p + dp) - base) / base * (p / dp);
  }
};

struct SyntheticItem {
  std::string item_id;
  DemandLaw law;
  double base_price = 10.0;
  double price_volatility = 0.1;
  // Explicit monthly prices; when empty a mean-reverting log random walk
  // around base_price is drawn.
  std::vector<double> price_path;
  ItemAttributes attributes;
};

struct SyntheticWorld {
  std::size_t items = 200;
  int months = 27;
  YearMonth start{2022, 1};
  double epsilon_min = -3.0;
  double epsilon_max = -0.5;
  double noise_sigma = 0.1;
  double base_price_min = 2.0;
  double base_price_max = 50.0;
  double base_units_min = 100.0;
  double base_units_max = 400.0;
  double price_volatility = 0.15;
  double price_reversion = 0.6;
  bool seasonal = true;
  bool kinked = false;
  double stockout_rate = 0.0;
  std::vector<std::pair<std::string, YearMonth>> stockouts;
  std::uint64_t seed = 7;
  // When non-empty these replace the random item draws.
  std::vector<SyntheticItem> explicit_items;

  void validate() const {
    if (months < 1) throw ConfigError("synthetic world needs at least one month");
    if (explicit_items.empty() && items == 0) throw ConfigError("synthetic world needs items");
    if (!(epsilon_max < 0.0) || epsilon_min > epsilon_max) {
      throw ConfigError("elasticity range must satisfy eps_min <= eps_max < 0");
    }
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
    if (!(base_price_min > 0.0) || base_price_min > base_price_max) {
      throw ConfigError("base price range must be positive and ordered");
    }
    if (!(base_units_min > 0.0) || base_units_min > base_units_max) {
      throw ConfigError("base units range must be positive and ordered");
    }
    if (price_volatility < 0.0) throw ConfigError("price volatility must be non-negative");
    if (stockout_rate < 0.0 || stockout_rate >= 1.0) {
      throw ConfigError("stockout rate must be in [0, 1)");
    }
    for (const auto& it : explicit_items) {
      if (!(it.law.epsilon_low < 0.0) || !(it.law.epsilon_high < 0.0)) {
        throw ConfigError("item '" + it.item_id + "' elasticity must be negative");
      }
      if (!(it.law.scale > 0.0)) throw ConfigError("item '" + it.item_id + "' needs A > 0");
      for (double p : it.price_path) {
        if (!(p > 0.0)) throw ConfigError("item '" + it.item_id + "' has non-positive price");
      }
    }
  }

  // Demand multiplier per calendar month (index 0 = January).
  std::array<double, 12> season() const {
    std::array<double, 12> s{};
    for (int m = 0; m < 12; ++m) {
      s[m] = seasonal ? 1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * m / 12.0) : 1.0;
    }
    if (seasonal) {
      s[7] *= 1.10;   // back to school
      s[10] *= 1.15;  // holiday
      s[11] *= 1.30;
    }
    return s;
  }

  static std::vector<std::string> events_for(int calendar_month) {
    if (calendar_month == 8) return {"back_to_school"};
    if (calendar_month == 11 || calendar_month == 12) return {"holiday"};
    return {};
  }
};

struct TruthRow {
  std::string item_id;
  DemandLaw law;
};

struct SyntheticData {
  std::vector<TransactionMonth> records;
  std::vector<TruthRow> truth;
};

// Units are rounded half-to-even.
inline double round_units(double v) {
  const int old = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(v);
  std::fesetround(old);
  return r;
}

inline std::vector<SyntheticItem> draw_items(const SyntheticWorld& w, Rng& rng) {
  static const char* kBrands[] = {"acme", "bolt", "crest", "dune", "echo"};
  static const char* kSizes[] = {"S", "M", "L"};
  static const char* kCategories[] = {"grocery", "household", "personal_care", "electronics"};
  std::vector<SyntheticItem> items;
  const int width = static_cast<int>(std::to_string(w.items).size());
  for (std::size_t i = 0; i < w.items; ++i) {
    SyntheticItem it;
    std::string num = std::to_string(i);
    it.item_id = "item_" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    it.base_price = std::exp(rng.uniform(std::log(w.base_price_min), std::log(w.base_price_max)));
    const double eps_low = rng.uniform(w.epsilon_min, w.epsilon_max);
    const double eps_high = w.kinked ? rng.uniform(w.epsilon_min, w.epsilon_max) : eps_low;
    const double base_units = rng.uniform(w.base_units_min, w.base_units_max);
    // Calibrated so demand at the base price equals base_units.
    it.law = DemandLaw{base_units / std::pow(it.base_price, eps_low), eps_low, eps_high,
                       it.base_price};
    it.price_volatility = w.price_volatility;
    const char* category = kCategories[rng.uniform_index(4)];
    it.attributes = ItemAttributes{kBrands[rng.uniform_index(5)], kSizes[rng.uniform_index(3)],
                                   category,
                                   std::string(category) + "_" +
                                       std::to_string(1 + rng.uniform_index(2))};
    items.push_back(std::move(it));
  }
  return items;
}

// Monthly records drawn from D = law(p) * season(m) * exp(eta),
// eta ~ N(0, sigma^2), plus a truth table of per-item laws. Records are
// ordered by (item_id, month).
inline SyntheticData generate(const SyntheticWorld& world) {
  world.validate();
  Rng rng(world.seed);
  std::vector<SyntheticItem> items =
      world.explicit_items.empty() ? draw_items(world, rng) : world.explicit_items;
  const auto season = world.season();
  std::set<std::pair<std::string, int>> stockouts;
  for (const auto& [id, m] : world.stockouts) stockouts.emplace(id, m.index());

  SyntheticData out;
  for (const auto& it : items) {
    out.truth.push_back({it.item_id, it.law});
    double log_dev = rng.normal() * it.price_volatility;
    const double launch = rng.uniform(30.0, 1000.0);
    double rating = std::floor(rng.uniform(0.0, 500.0));
    const double comp_base = it.base_price * std::exp(rng.normal() * 0.1);
    for (int t = 0; t < world.months; ++t) {
      const YearMonth ym = world.start.plus_months(t);
      double price;
      if (!it.price_path.empty()) {
        price = it.price_path[static_cast<std::size_t>(t) % it.price_path.size()];
      } else {
        if (t > 0) log_dev = world.price_reversion * log_dev + rng.normal() * it.price_volatility;
        price = std::max(0.01, std::round(it.base_price * std::exp(log_dev) * 100.0) / 100.0);
      }
      const double eta = world.noise_sigma > 0.0 ? rng.normal() * world.noise_sigma : 0.0;
      const double mean = it.law.mean_units(price) * season[static_cast<std::size_t>(ym.month() - 1)];
      double units = round_units(mean * std::exp(eta));

      TransactionMonth r;
      r.item_id = it.item_id;
      r.year_month = ym;
      r.attributes = it.attributes;
      MonthSignals& s = r.signals;
      s.price = price;
      s.oos_days = rng.bernoulli(0.1) ? static_cast<double>(1 + rng.uniform_index(3)) : 0.0;
      s.rating_count = rating;
      s.days_launched = std::floor(launch) + 30.0 * t;
      if (!rng.bernoulli(0.1)) {
        s.competitor_price =
            std::max(0.01, std::round(comp_base * std::exp(rng.normal() * 0.05) * 100.0) / 100.0);
      }
      s.substitute_available = rng.bernoulli(0.5);
      if (world.seasonal) s.event_flags = SyntheticWorld::events_for(ym.month());
      const bool stockout = stockouts.count({it.item_id, ym.index()}) > 0 ||
                            (world.stockout_rate > 0.0 && rng.bernoulli(world.stockout_rate));
      if (stockout) {
        units = 0.0;
        s.inventory = 0.0;
        s.oos_days = 30.0;
      } else {
        s.inventory = std::max(2.0 * units, 10.0);
      }
      s.units_sold = units;
      rating += std::floor(units * 0.05);
      out.records.push_back(std::move(r));
    }
  }
  std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.item_id, a.year_month) < std::tie(b.item_id, b.year_month);
  });
  std::sort(out.truth.begin(), out.truth.end(),
            [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
  return out;
}

// item_id,epsilon for constant laws; kinked laws add epsilon_high,kink_price.
inline void write_truth(std::ostream& out, const std::vector<TruthRow>& truth) {
  const bool kinked = std::any_of(truth.begin(), truth.end(),
                                  [](const TruthRow& t) { return !t.law.is_constant(); });
  out << "item_id,epsilon" << (kinked ? ",epsilon_high,kink_price" : "") << '\n';
  for (const auto& t : truth) {
    out << csv::escape(t.item_id) << ',' << csv::format_double(t.law.epsilon_low);
    if (kinked) {
      out << ',' << csv::format_double(t.law.epsilon_high) << ','
          << csv::format_double(t.law.kink_price);
    }
    out << '\n';
  }
}

inline std::vector<TruthRow> read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open truth table '" + path + "'");
  std::string line;
  if (!csv::read_line(in, line)) return {};
  const auto header = csv::split_record(line);
  const bool kinked = header.size() == 4;
  if (!(header == std::vector<std::string>{"item_id", "epsilon"}) &&
      !(header == std::vector<std::string>{"item_id", "epsilon", "epsilon_high", "kink_price"})) {
    throw ParseError("truth table header must be item_id,epsilon[,epsilon_high,kink_price]");
  }
  std::vector<TruthRow> rows;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_record(line);
    auto num = [&](std::size_t i) {
      auto v = i < f.size() ? csv::parse_double(f[i]) : std::nullopt;
      if (!v) throw ParseError("truth line " + std::to_string(line_no) + ": bad number");
      return *v;
    };
    if (f.size() != header.size()) {
      throw ParseError("truth line " + std::to_string(line_no) + ": wrong field count");
    }
    TruthRow r{f[0], DemandLaw::constant(1.0, num(1))};
    if (kinked) {
      r.law.epsilon_high = num(2);
      r.law.kink_price = num(3);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace monoelastic

#endif  // MONOELASTIC_SYNTHETIC_HPP_
