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

#ifndef MONOELASTIC_ELASTICITY_HPP_
#define MONOELASTIC_ELASTICITY_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "monoelastic/csv.hpp"
#include "monoelastic/errors.hpp"
#include "monoelastic/model.hpp"
#include "monoelastic/pairs.hpp"

namespace monoelastic {

inline constexpr double kDemandFloor = 1e-6;
inline constexpr double kDefaultPriceChangeFraction = -0.05;

class DegenerateDemandError : public DomainError {
 public:
  using DomainError::DomainError;
};

// (y(p + dp) - y(p)) / y(p) * p / dp
inline double arc_elasticity(double y_base, double y_pert, double p, double dp,
                             double demand_floor = kDemandFloor) {
  if (!(p > 0.0)) throw DomainError("arc elasticity: price must be positive");
  if (dp == 0.0) throw DomainError("arc elasticity: price change must be non-zero");
  if (!(y_base > demand_floor)) {
    throw DegenerateDemandError("baseline demand " + csv::format_double(y_base) +
                                " is at or below the floor " + csv::format_double(demand_floor));
  }
  return (y_pert - y_base) / y_base * (p / dp);
}

struct ElasticityQuery {
  std::string item_id;
  double price = 0.0;
  double price_change = 0.0;
};

inline ElasticityQuery default_query(const PairExample& row,
                                     double fraction = kDefaultPriceChangeFraction) {
  return ElasticityQuery{row.item_id, row.lead.price, fraction * row.lead.price};
}

struct ElasticityEntry {
  std::string item_id;
  double price = 0.0;
  double price_change = 0.0;
  std::optional<double> y_base;
  std::optional<double> y_pert;
  std::optional<double> elasticity;
  std::string status = "ok";  // ok | skipped | degenerate_demand | invalid_query
  std::string reason;

  bool valid() const { return status == "ok"; }
  friend bool operator==(const ElasticityEntry&, const ElasticityEntry&) = default;
};

struct ElasticityReport {
  std::vector<ElasticityEntry> entries;

  std::size_t count(const std::string& status) const {
    return static_cast<std::size_t>(std::count_if(
        entries.begin(), entries.end(), [&](const auto& e) { return e.status == status; }));
  }

  std::map<std::string, double> valid_elasticities() const {
    std::map<std::string, double> out;
    for (const auto& e : entries) {
      if (e.valid()) out[e.item_id] = *e.elasticity;
    }
    return out;
  }

  void write_csv(std::ostream& out) const {
    out << "item_id,p,dp,y_base,y_pert,elasticity,status\n";
    auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; };
    for (const auto& e : entries) {
      out << csv::escape(e.item_id) << ',' << csv::format_double(e.price) << ','
          << csv::format_double(e.price_change) << ',' << opt(e.y_base) << ','
          << opt(e.y_pert) << ',' << opt(e.elasticity) << ',' << e.status << '\n';
    }
  }

  friend bool operator==(const ElasticityReport&, const ElasticityReport&) = default;
};

// Two counterfactual predictions per query (lead price p and p + dp, with
// price_change_pct recomputed) combined by arc_elasticity. Failures are
// recorded per item; the report is ordered by item_id.
inline ElasticityReport evaluate_elasticities(const DemandModel& model,
                                              std::span<const PairExample> inference_rows,
                                              std::span<const ElasticityQuery> queries,
                                              double demand_floor = kDemandFloor) {
  std::map<std::string, const PairExample*> by_item;
  for (const auto& r : inference_rows) by_item.emplace(r.item_id, &r);

  ElasticityReport report;
  std::vector<PairExample> rows;
  std::vector<double> prices;
  std::vector<std::size_t> entry_of;
  for (const auto& q : queries) {
    ElasticityEntry e;
    e.item_id = q.item_id;
    e.price = q.price;
    e.price_change = q.price_change;
    auto it = by_item.find(q.item_id);
    if (it == by_item.end()) {
      e.status = "skipped";
      e.reason = "item not in inference set";
    } else if (!(q.price > 0.0) || q.price_change == 0.0 || !(q.price + q.price_change > 0.0)) {
      e.status = "invalid_query";
      e.reason = "need p > 0, dp != 0 and p + dp > 0";
    } else {
      rows.push_back(*it->second);
      rows.push_back(*it->second);
      prices.push_back(q.price);
      prices.push_back(q.price + q.price_change);
      entry_of.push_back(report.entries.size());
    }
    report.entries.push_back(std::move(e));
  }

  std::vector<double> preds;
  try {
    preds = model.predict_batch(rows, prices);
  } catch (const Error& err) {
    for (std::size_t k : entry_of) {
      report.entries[k].status = "invalid_query";
      report.entries[k].reason = err.what();
    }
    entry_of.clear();
  }
  for (std::size_t j = 0; j < entry_of.size(); ++j) {
    ElasticityEntry& e = report.entries[entry_of[j]];
    e.y_base = preds[2 * j];
    e.y_pert = preds[2 * j + 1];
    try {
      e.elasticity = arc_elasticity(*e.y_base, *e.y_pert, e.price, e.price_change, demand_floor);
    } catch (const DegenerateDemandError& err) {
      e.status = "degenerate_demand";
      e.reason = err.what();
    }
  }
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
  return report;
}

enum class WmapeForm {
  kStandard,  // sum |y - yhat| / sum y * 100
  kPrinted,   // sum y |y - yhat| / sum y * 100 (demand-weighted absolute error)
};

inline double wmape(std::span<const double> actuals, std::span<const double> predictions,
                    WmapeForm form = WmapeForm::kStandard) {
  if (actuals.size() != predictions.size()) {
    throw DimensionError("wmape: " + std::to_string(actuals.size()) + " actuals vs " +
                         std::to_string(predictions.size()) + " predictions");
  }
  if (actuals.empty()) throw DomainError("wmape of an empty set is undefined");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double err = std::abs(actuals[i] - predictions[i]);
    num += form == WmapeForm::kStandard ? err : actuals[i] * err;
    den += actuals[i];
  }
  if (!(den > 0.0)) throw DomainError("wmape is undefined when total actual demand is 0");
  return num / den * 100.0;
}

struct MaeResult {
  double mae = 0.0;
  std::size_t coverage = 0;
};

inline MaeResult mae_elasticity(const std::map<std::string, double>& truth,
                                const std::map<std::string, double>& predicted) {
  MaeResult r;
  double sum = 0.0;
  for (const auto& [id, e] : truth) {
    auto it = predicted.find(id);
    if (it == predicted.end()) continue;
    sum += std::abs(e - it->second);
    ++r.coverage;
  }
  if (r.coverage == 0) throw DomainError("mae: truth and predictions share no items");
  r.mae = sum / static_cast<double>(r.coverage);
  return r;
}

struct BaselineResult {
  std::map<std::string, double> elasticity;
  std::vector<SkippedItem> skipped;
};

// Per-item OLS slope of log(units + 1) on log(price) over the distinct
// monthly observations contained in the pairs (both lag and lead sides).
inline BaselineResult loglog_baseline(std::span<const PairExample> pairs,
                                      std::size_t min_observations = 3) {
  std::map<std::string, std::map<int, std::pair<double, double>>> obs;
  for (const auto& p : pairs) {
    obs[p.item_id][p.lag_month.index()] = {p.lag.price, p.lag.units_sold};
    obs[p.item_id][p.lead_month.index()] = {p.lead.price, p.lead.units_sold};
  }
  BaselineResult out;
  for (const auto& [id, months] : obs) {
    if (months.size() < min_observations) {
      out.skipped.push_back({id, "fewer than " + std::to_string(min_observations) +
                                     " observations"});
      continue;
    }
    double mx = 0.0, my = 0.0;
    for (const auto& [m, pu] : months) {
      mx += std::log(pu.first);
      my += std::log(pu.second + 1.0);
    }
    const double n = static_cast<double>(months.size());
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [m, pu] : months) {
      const double dx = std::log(pu.first) - mx;
      sxx += dx * dx;
      sxy += dx * (std::log(pu.second + 1.0) - my);
    }
    if (!(sxx > 1e-12)) {
      out.skipped.push_back({id, "no price variation"});
      continue;
    }
    out.elasticity[id] = sxy / sxx;
  }
  return out;
}

}  // namespace monoelastic

#endif  // MONOELASTIC_ELASTICITY_HPP_
