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

#ifndef MONOELASTIC_FEATURES_HPP_
#define MONOELASTIC_FEATURES_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "monoelastic/errors.hpp"
#include "monoelastic/pairs.hpp"

namespace monoelastic {

inline constexpr const char* kLeadPrice = "lead_price";
inline constexpr const char* kPriceChangePct = "price_change_pct";
inline constexpr const char* kLagEventPrefix = "lag_event:";
inline constexpr const char* kLeadEventPrefix = "lead_event:";

struct CategoricalFeature {
  std::string name;
  // Observed levels; level i maps to table row i + 1, row 0 is the reserved
  // unknown level.
  std::vector<std::string> levels;
  std::size_t embedding_dim = 0;

  std::size_t cardinality() const { return levels.size() + 1; }
  std::size_t index_of(const std::string& level) const {
    auto it = std::lower_bound(levels.begin(), levels.end(), level);
    if (it == levels.end() || *it != level) return 0;
    return static_cast<std::size_t>(it - levels.begin()) + 1;
  }
};

struct MonotoneFeature {
  std::string name;
  int direction = -1;
};

// Input layout of the demand network: categoricals go through embeddings,
// continuous features through per-feature encoders, monotone features enter
// at the sign-constrained injection layer.
struct FeatureSchema {
  std::vector<CategoricalFeature> categorical;
  std::vector<std::string> continuous;
  std::vector<MonotoneFeature> monotone;

  void validate() const {
    std::set<std::string> names;
    auto add = [&](const std::string& n) {
      if (n.empty()) throw ConfigError("empty feature name");
      if (!names.insert(n).second) throw ConfigError("duplicate feature name '" + n + "'");
    };
    for (const auto& c : categorical) {
      add(c.name);
      if (!std::is_sorted(c.levels.begin(), c.levels.end()) ||
          std::adjacent_find(c.levels.begin(), c.levels.end()) != c.levels.end()) {
        throw ConfigError("levels of '" + c.name + "' must be sorted and unique");
      }
    }
    for (const auto& c : continuous) add(c);
    for (const auto& m : monotone) {
      add(m.name);
      if (m.direction != -1 && m.direction != 1) {
        throw ConfigError("monotone feature '" + m.name + "' needs direction -1 or +1");
      }
    }
    auto has_decreasing = [&](const char* n) {
      return std::any_of(monotone.begin(), monotone.end(), [&](const MonotoneFeature& m) {
        return m.name == n && m.direction == -1;
      });
    };
    if (!has_decreasing(kLeadPrice)) {
      throw ConfigError("monotone group must contain lead_price with direction -1");
    }
    if (!has_decreasing(kPriceChangePct)) {
      throw ConfigError("monotone group must contain price_change_pct with direction -1");
    }
    if (monotone.size() != 2) {
      throw ConfigError("monotone group must be exactly {lead_price, price_change_pct}");
    }
    for (const auto& c : categorical) categorical_value(c.name, nullptr);
    for (const auto& c : continuous) continuous_value(c, nullptr);
  }

  // Extractors; a null example only checks that the name is known.
  static std::string categorical_value(const std::string& name, const PairExample* p) {
    static const std::set<std::string> known = {"item_id", "brand", "size", "category",
                                                "subcategory", "lead_month_of_year",
                                                "lag_month_of_year"};
    if (!known.count(name)) throw ConfigError("unknown categorical feature '" + name + "'");
    if (p == nullptr) return {};
    if (name == "item_id") return p->item_id;
    if (name == "brand") return p->attributes.brand;
    if (name == "size") return p->attributes.size;
    if (name == "category") return p->attributes.category;
    if (name == "subcategory") return p->attributes.subcategory;
    if (name == "lead_month_of_year") return std::to_string(p->lead_month.month());
    return std::to_string(p->lag_month.month());
  }

  static double continuous_value(const std::string& name, const PairExample* p) {
    auto has_event = [](const MonthSignals& s, const std::string& e) {
      return std::binary_search(s.event_flags.begin(), s.event_flags.end(), e) ? 1.0 : 0.0;
    };
    if (name.rfind(kLagEventPrefix, 0) == 0) {
      return p ? has_event(p->lag, name.substr(std::string(kLagEventPrefix).size())) : 0.0;
    }
    if (name.rfind(kLeadEventPrefix, 0) == 0) {
      return p ? has_event(p->lead, name.substr(std::string(kLeadEventPrefix).size())) : 0.0;
    }
    static const std::set<std::string> known = {
        "month_gap",          "lag_price_log",         "lag_units_log",
        "lag_inventory_log",  "lag_oos_days",          "lag_rating_count_log",
        "lag_days_launched",  "lag_competitor_price",  "lag_competitor_present",
        "lag_substitute",     "lead_competitor_price", "lead_competitor_present",
        "lead_substitute"};
    if (!known.count(name)) throw ConfigError("unknown continuous feature '" + name + "'");
    if (p == nullptr) return 0.0;
    if (name == "month_gap") return p->month_gap;
    if (name == "lag_price_log") return std::log(p->lag.price);
    if (name == "lag_units_log") return std::log1p(p->lag.units_sold);
    if (name == "lag_inventory_log") return std::log1p(p->lag.inventory);
    if (name == "lag_oos_days") return p->lag.oos_days;
    if (name == "lag_rating_count_log") return std::log1p(p->lag.rating_count);
    if (name == "lag_days_launched") return p->lag.days_launched;
    if (name == "lag_competitor_price") return p->lag.competitor_price.value_or(0.0);
    if (name == "lag_competitor_present") return p->lag.competitor_price ? 1.0 : 0.0;
    if (name == "lag_substitute") return p->lag.substitute_available ? 1.0 : 0.0;
    if (name == "lead_competitor_price") return p->lead.competitor_price.value_or(0.0);
    if (name == "lead_competitor_present") return p->lead.competitor_price ? 1.0 : 0.0;
    return p->lead.substitute_available ? 1.0 : 0.0;
  }

  // Monotone inputs given the effective lead price; price_change_pct is
  // always recomputed from it.
  static double monotone_value(const std::string& name, const PairExample& p,
                               double lead_price) {
    if (name == kLeadPrice) return lead_price;
    if (name == kPriceChangePct) return price_change_pct(p.lag.price, lead_price);
    throw ConfigError("unknown monotone feature '" + name + "'");
  }
};

inline std::size_t default_embedding_dim(std::size_t cardinality) {
  const auto d = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cardinality))));
  return std::min<std::size_t>(32, std::max<std::size_t>(1, d));
}

// Default feature set. Lead-month inventory, OOS days and units are left out
// of the inputs: they are outcomes of the lead month (and unobserved at
// inference time).
inline FeatureSchema default_feature_schema(const std::vector<PairExample>& train,
                                            const std::vector<std::string>& events,
                                            const std::map<std::string, std::size_t>&
                                                embedding_dim_overrides = {}) {
  FeatureSchema s;
  for (const char* name : {"item_id", "brand", "size", "category", "subcategory",
                           "lead_month_of_year", "lag_month_of_year"}) {
    std::set<std::string> levels;
    for (const auto& p : train) levels.insert(FeatureSchema::categorical_value(name, &p));
    CategoricalFeature c{name, {levels.begin(), levels.end()}, 0};
    auto it = embedding_dim_overrides.find(name);
    c.embedding_dim =
        it != embedding_dim_overrides.end() ? it->second : default_embedding_dim(c.cardinality());
    s.categorical.push_back(std::move(c));
  }
  s.continuous = {"month_gap",          "lag_price_log",         "lag_units_log",
                  "lag_inventory_log",  "lag_oos_days",          "lag_rating_count_log",
                  "lag_days_launched",  "lag_competitor_price",  "lag_competitor_present",
                  "lag_substitute",     "lead_competitor_price", "lead_competitor_present",
                  "lead_substitute"};
  for (const auto& e : events) {
    s.continuous.push_back(kLagEventPrefix + e);
    s.continuous.push_back(kLeadEventPrefix + e);
  }
  s.monotone = {{kLeadPrice, -1}, {kPriceChangePct, -1}};
  s.validate();
  return s;
}

}  // namespace monoelastic

#endif  // MONOELASTIC_FEATURES_HPP_
