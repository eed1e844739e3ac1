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

#ifndef MONOELASTIC_TRAINER_HPP_
#define MONOELASTIC_TRAINER_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <tuple>
#include <utility>
#include <string>
#include <vector>

#include "monoelastic/csv.hpp"
#include "monoelastic/errors.hpp"
#include "monoelastic/gradcheck.hpp"
#include "monoelastic/model.hpp"
#include "monoelastic/pairs.hpp"
#include "monoelastic/random.hpp"
#include "monoelastic/tape.hpp"

namespace monoelastic {

struct TrainConfig {
  int epochs = 25;
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  double l2_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
    if (l2_decay < 0.0) throw ConfigError("l2 decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  }
};

struct AdamState {
  Tensor2 m;
  Tensor2 v;
  long step = 0;
};

// Bias-corrected Adam update of `param` from its current gradient.
inline void adam_step(Parameter& param, AdamState& state, const TrainConfig& cfg) {
  if (!param.gradient.same_shape(param.value)) {
    throw DimensionError("adam: gradient shape " + param.gradient.shape() +
                         " does not match parameter " + param.value.shape());
  }
  if (state.step == 0) {
    state.m = Tensor2(param.value.rows(), param.value.cols());
    state.v = Tensor2(param.value.rows(), param.value.cols());
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double g = param.gradient[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param.value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
  }
}

// Optimizer state keyed by parameter name.
class Adam {
 public:
  explicit Adam(TrainConfig cfg) : cfg_(std::move(cfg)) {}
  void step(Parameter& p) { adam_step(p, states_[p.name], cfg_); }
  const AdamState& state(const std::string& name) const { return states_.at(name); }

 private:
  TrainConfig cfg_;
  std::map<std::string, AdamState> states_;
};

// Population mean/std of continuous and monotone inputs and of the target
// over the given (training) rows. Std is floored at 1e-8.
inline StandardizationStats fit_stats(const DemandModel& model,
                                      std::span<const PairExample> train) {
  if (train.empty()) throw ConfigError("cannot fit standardization stats on an empty split");
  const auto& schema = model.schema();
  const std::size_t nc = schema.continuous.size();
  const std::size_t nm = schema.monotone.size();
  std::vector<std::vector<double>> cont(nc), mono(nm);
  std::vector<double> targets;
  for (const auto& p : train) {
    const RawFeatures raw = model.raw_features(p, std::nullopt);
    for (std::size_t i = 0; i < nc; ++i) cont[i].push_back(raw.continuous[i]);
    for (std::size_t i = 0; i < nm; ++i) mono[i].push_back(raw.monotone[i]);
    if (!p.target) throw ConfigError("training row without a target");
    targets.push_back(*p.target);
  }
  auto moments = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return std::pair{mean, std::max(std::sqrt(var), kStdFloor)};
  };
  StandardizationStats s;
  for (std::size_t i = 0; i < nc; ++i) {
    auto [m, sd] = moments(cont[i]);
    s.continuous_mean.push_back(m);
    s.continuous_std.push_back(sd);
  }
  for (std::size_t i = 0; i < nm; ++i) {
    auto [m, sd] = moments(mono[i]);
    s.monotone_mean.push_back(m);
    s.monotone_std.push_back(sd);
  }
  std::tie(s.target_mean, s.target_std) = moments(targets);
  return s;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean batch MSE on the scaled target
  std::optional<double> validation_loss;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::map<std::string, double> parameter_norms;
  std::string stats_fingerprint;
  double wall_seconds = 0.0;

  // Equality ignores wall time.
  bool same_result(const TrainReport& o) const {
    return epochs == o.epochs && parameter_norms == o.parameter_norms &&
           stats_fingerprint == o.stats_fingerprint;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
      nlohmann::ordered_json row;
      row["epoch"] = e.epoch;
      row["train_loss"] = e.train_loss;
      row["validation_loss"] = nullptr;
      if (e.validation_loss) row["validation_loss"] = *e.validation_loss;
      j["epochs"].push_back(row);
    }
    j["parameter_norms"] = parameter_norms;
    j["stats_fingerprint"] = stats_fingerprint;
    j["wall_seconds"] = wall_seconds;
    return j;
  }

  void write_loss_csv(std::ostream& out) const {
    out << "epoch,train_loss,validation_loss\n";
    for (const auto& e : epochs) {
      out << e.epoch << ',' << csv::format_double(e.train_loss) << ','
          << (e.validation_loss ? csv::format_double(*e.validation_loss) : "") << '\n';
    }
  }
};

using EpochCallback = std::function<void(int epoch, const DemandModel&)>;

namespace detail {

inline double l2_norm(const Tensor2& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

inline std::string norms_summary(const DemandModel& model) {
  std::ostringstream os;
  for (const Parameter* p : model.parameters()) os << ' ' << p->name << '=' << l2_norm(p->value);
  return os.str();
}

}  // namespace detail

// Scaled-target MSE of the model over `rows`, evaluated in batches.
inline double scaled_mse(const DemandModel& model, std::span<const PairExample> rows,
                         std::size_t batch_size = 1024) {
  double sum = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto chunk = rows.subspan(start, std::min(batch_size, rows.size() - start));
    const auto pred = model.predict_batch(chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double d = (pred[i] - *chunk[i].target) / model.stats().target_std;
      sum += d * d;
    }
  }
  return sum / static_cast<double>(rows.size());
}

// Minimizes MSE on the scaled target plus l2_decay * sum ||W||^2 over dense and
// monodense weight matrices with Adam. Standardization stats are fit on the
// training split before the first step.
inline TrainReport train(DemandModel& model, const DatasetSplit& data, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (!model.dataset_schema_hash().empty() && model.dataset_schema_hash() != data.schema_hash) {
    throw SchemaMismatchError("model was built for dataset schema " +
                              model.dataset_schema_hash() + ", dataset has " + data.schema_hash);
  }
  model.set_dataset_schema_hash(data.schema_hash);
  model.set_stats(fit_stats(model, data.train));

  const auto started = std::chrono::steady_clock::now();
  const std::size_t n = data.train.size();
  std::vector<RawFeatures> raw;
  raw.reserve(n);
  std::vector<double> scaled_target(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw.push_back(model.raw_features(data.train[i], std::nullopt));
    scaled_target[i] = (*data.train[i].target - model.stats().target_mean) /
                       model.stats().target_std;
  }

  Rng rng(cfg.seed);
  Adam adam(cfg);
  const double unknown_rate = model.architecture().unknown_level_rate;
  std::vector<Parameter*> params = model.parameters();
  std::vector<Parameter*> decayed = model.decayed_parameters();
  std::vector<std::size_t> order(n);
  TrainReport report;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (cfg.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<RawFeatures> batch_raw;
      batch_raw.reserve(end - start);
      Tensor2 target(end - start, 1);
      for (std::size_t k = start; k < end; ++k) {
        batch_raw.push_back(raw[order[k]]);
        if (unknown_rate > 0.0) {
          for (auto& idx : batch_raw.back().categorical) {
            if (rng.bernoulli(unknown_rate)) idx = 0;
          }
        }
        target[k - start] = scaled_target[order[k]];
      }
      const EncodedBatch batch = model.encode(batch_raw);

      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      Var data_loss = tape.mse(model.forward(tape, batch), tape.constant(std::move(target)));
      Var loss = data_loss;
      if (cfg.l2_decay > 0.0) {
        for (Parameter* p : decayed) {
          loss = tape.add(loss, tape.scale(tape.sum_squares(tape.parameter(*p)), cfg.l2_decay));
        }
      }
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + "; parameter norms:" +
                           detail::norms_summary(model));
      }
      tape.backward(loss);
      for (Parameter* p : params) adam.step(*p);
      loss_sum += tape.value(data_loss)[0] * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    if (!data.validation.empty()) rec.validation_loss = scaled_mse(model, data.validation);
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(epoch, model);
  }

  for (const Parameter* p : model.parameters()) {
    report.parameter_norms[p->name] = detail::l2_norm(p->value);
  }
  report.stats_fingerprint = model.stats().fingerprint();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// Gradient check of the full training objective (scaled MSE + L2) on `rows`.
// Entries of sign-constrained weights with |w| <= 1e-3 are not probed: the
// absolute value has a kink at 0.
inline GradcheckReport gradcheck_model(DemandModel& model, std::span<const PairExample> rows,
                                       double l2_decay, std::size_t probes,
                                       std::uint64_t seed = 0x5eed) {
  std::vector<RawFeatures> raw;
  Tensor2 target(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    raw.push_back(model.raw_features(rows[i], std::nullopt));
    target[i] = (rows[i].target.value_or(0.0) - model.stats().target_mean) /
                model.stats().target_std;
  }
  const EncodedBatch batch = model.encode(raw);
  const std::vector<Parameter*> decayed = model.decayed_parameters();
  auto loss = [&](Tape& tape) {
    Var l = tape.mse(model.forward(tape, batch), tape.constant(target));
    for (Parameter* p : decayed) {
      l = tape.add(l, tape.scale(tape.sum_squares(tape.parameter(*p)), l2_decay));
    }
    return l;
  };
  auto away_from_kink = [](const Parameter& p, std::size_t i) {
    const bool constrained = p.name == "head.w" || p.name == "injection.w" ||
                             (p.name.rfind("post.", 0) == 0 && p.name.back() == 'w');
    return !constrained || std::abs(p.value[i]) > 1e-3;
  };
  const std::vector<Parameter*> params = model.parameters();
  return gradcheck(loss, params, probes, seed, away_from_kink);
}

}  // namespace monoelastic

#endif  // MONOELASTIC_TRAINER_HPP_
