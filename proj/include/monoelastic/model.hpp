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

#ifndef MONOELASTIC_MODEL_HPP_
#define MONOELASTIC_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monoelastic/errors.hpp"
#include "monoelastic/features.hpp"
#include "monoelastic/hash.hpp"
#include "monoelastic/monodense.hpp"
#include "monoelastic/pairs.hpp"
#include "monoelastic/random.hpp"
#include "monoelastic/tape.hpp"
#include "monoelastic/tensor.hpp"

namespace monoelastic {

inline constexpr double kStdFloor = 1e-8;

// Per-feature standardization plus the affine target scaling. Always fit on
// the training split only.
struct StandardizationStats {
  std::vector<double> continuous_mean;
  std::vector<double> continuous_std;
  std::vector<double> monotone_mean;
  std::vector<double> monotone_std;
  double target_mean = 0.0;
  double target_std = 1.0;

  static StandardizationStats identity(std::size_t n_continuous, std::size_t n_monotone) {
    StandardizationStats s;
    s.continuous_mean.assign(n_continuous, 0.0);
    s.continuous_std.assign(n_continuous, 1.0);
    s.monotone_mean.assign(n_monotone, 0.0);
    s.monotone_std.assign(n_monotone, 1.0);
    return s;
  }

  // Bit-level fingerprint, used to assert stats are never refit.
  std::string fingerprint() const {
    std::string bytes;
    auto put = [&](double v) {
      bytes.append(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    for (const auto* vec : {&continuous_mean, &continuous_std, &monotone_mean, &monotone_std}) {
      for (double v : *vec) put(v);
      bytes.push_back('|');
    }
    put(target_mean);
    put(target_std);
    return hex64(fnv1a64(bytes));
  }

  friend bool operator==(const StandardizationStats&, const StandardizationStats&) = default;
};

struct ArchitectureConfig {
  std::size_t continuous_width = 8;
  std::vector<std::size_t> trunk_widths = {128, 64};
  std::size_t injection_width = 64;
  std::vector<std::size_t> post_widths = {32};
  ActivationSplit split;
  BaseActivation activation = BaseActivation::kElu;
  // Fraction of training rows whose categorical levels are replaced by the
  // reserved unknown level, so that row 0 of each table is trained.
  double unknown_level_rate = 0.01;

  void validate() const {
    if (continuous_width == 0) throw ConfigError("continuous encoder width must be positive");
    if (injection_width == 0) throw ConfigError("injection width must be positive");
    for (auto w : trunk_widths) {
      if (w == 0) throw ConfigError("trunk widths must be positive");
    }
    for (auto w : post_widths) {
      if (w == 0) throw ConfigError("post-injection widths must be positive");
    }
    if (unknown_level_rate < 0.0 || unknown_level_rate >= 1.0) {
      throw ConfigError("unknown_level_rate must be in [0, 1)");
    }
    split.validate();
  }
};

// Unstandardized network inputs for one row.
struct RawFeatures {
  std::vector<std::size_t> categorical;
  std::vector<double> continuous;
  std::vector<double> monotone;
};

// Standardized inputs for a batch.
struct EncodedBatch {
  std::vector<std::vector<std::size_t>> categorical;  // [feature][row]
  Tensor2 continuous;                                 // rows x n_continuous
  Tensor2 monotone;                                   // rows x n_monotone
  std::size_t rows = 0;
};

using FeatureObserver = std::function<void(const PairExample&, const RawFeatures&)>;

class DemandModel;
DemandModel build_model(const FeatureSchema& schema, const ArchitectureConfig& config,
                        std::uint64_t seed);

// Embeddings + per-feature encoders -> relu trunk -> monotone injection
// (decreasing in the price inputs) -> increasing monotone stack -> linear head
// with non-negative weights. Every layer after the injection is increasing,
// so demand is non-increasing in lead price by construction.
class DemandModel {
 public:
  DemandModel() = default;

  const FeatureSchema& schema() const { return schema_; }
  const ArchitectureConfig& architecture() const { return arch_; }
  const StandardizationStats& stats() const { return stats_; }
  void set_stats(StandardizationStats s) {
    if (s.continuous_mean.size() != schema_.continuous.size() ||
        s.continuous_std.size() != schema_.continuous.size() ||
        s.monotone_mean.size() != schema_.monotone.size() ||
        s.monotone_std.size() != schema_.monotone.size() || !(s.target_std > 0.0)) {
      throw ConfigError("standardization stats do not match the feature schema");
    }
    stats_ = std::move(s);
  }
  const std::string& dataset_schema_hash() const { return dataset_schema_hash_; }
  void set_dataset_schema_hash(std::string h) { dataset_schema_hash_ = std::move(h); }

  const std::vector<Parameter>& embeddings() const { return embeddings_; }
  const std::vector<DenseLayer>& trunk() const { return trunk_; }
  const MonoDenseLayer& injection() const { return injection_; }
  const std::vector<MonoDenseLayer>& post_layers() const { return post_; }
  const Parameter& head_weights() const { return head_w_; }

  Tensor2 head_effective_weights() const {
    Tensor2 w = head_w_.value;
    for (double& v : w.data()) v = effective_weight(v, +1);
    return w;
  }

  std::vector<Parameter*> parameters() { return collect<Parameter*>(*this); }
  std::vector<const Parameter*> parameters() const {
    return collect<const Parameter*>(*this);
  }

  // Weight matrices that receive L2 decay: dense, encoder, monodense and
  // head weights. Embeddings and biases are excluded.
  std::vector<Parameter*> decayed_parameters() {
    std::vector<Parameter*> out;
    if (has_encoder()) out.push_back(&encoder_w_);
    for (auto& l : trunk_) out.push_back(&l.weights());
    out.push_back(&injection_.raw_weights());
    for (auto& l : post_) out.push_back(&l.raw_weights());
    out.push_back(&head_w_);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.size();
    return n;
  }

  bool has_encoder() const { return !schema_.continuous.empty(); }

  RawFeatures raw_features(const PairExample& p, std::optional<double> lead_price) const {
    const double price = lead_price.value_or(p.lead.price);
    RawFeatures r;
    r.categorical.reserve(schema_.categorical.size());
    for (const auto& c : schema_.categorical) {
      r.categorical.push_back(c.index_of(FeatureSchema::categorical_value(c.name, &p)));
    }
    r.continuous.reserve(schema_.continuous.size());
    for (const auto& c : schema_.continuous) {
      r.continuous.push_back(FeatureSchema::continuous_value(c, &p));
    }
    for (const auto& m : schema_.monotone) {
      r.monotone.push_back(FeatureSchema::monotone_value(m.name, p, price));
    }
    return r;
  }

  EncodedBatch encode(std::span<const RawFeatures> rows) const {
    EncodedBatch b;
    b.rows = rows.size();
    b.categorical.assign(schema_.categorical.size(), std::vector<std::size_t>(rows.size()));
    b.continuous = Tensor2(rows.size(), schema_.continuous.size());
    b.monotone = Tensor2(rows.size(), schema_.monotone.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const RawFeatures& raw = rows[r];
      for (std::size_t i = 0; i < raw.categorical.size(); ++i) {
        b.categorical[i][r] = raw.categorical[i];
      }
      for (std::size_t i = 0; i < raw.continuous.size(); ++i) {
        b.continuous(r, i) = (raw.continuous[i] - stats_.continuous_mean[i]) /
                             stats_.continuous_std[i];
      }
      for (std::size_t i = 0; i < raw.monotone.size(); ++i) {
        b.monotone(r, i) = (raw.monotone[i] - stats_.monotone_mean[i]) / stats_.monotone_std[i];
      }
    }
    return b;
  }

  // Network output in scaled target space, shape rows x 1.
  Var forward(Tape& tape, const EncodedBatch& batch) { return forward_impl(*this, tape, batch); }
  Var forward(Tape& tape, const EncodedBatch& batch) const {
    return forward_impl(*this, tape, batch);
  }

  double unscale_target(double scaled) const {
    return scaled * stats_.target_std + stats_.target_mean;
  }

  // Counterfactual demand in units. An override replaces the lead price and
  // price_change_pct is recomputed from it.
  double predict_demand(const PairExample& p, std::optional<double> override_lead_price = {},
                        const FeatureObserver& observer = {}) const {
    const double price = override_lead_price.value_or(p.lead.price);
    if (override_lead_price && !(*override_lead_price > 0.0)) {
      throw DomainError("override lead price must be positive, got " +
                        csv::format_double(*override_lead_price));
    }
    RawFeatures raw = raw_features(p, price);
    if (observer) observer(p, raw);
    Tape tape;
    EncodedBatch b = encode(std::span<const RawFeatures>(&raw, 1));
    return unscale_target(tape.value(forward(tape, b))[0]);
  }

  // Batched variant; `lead_prices` is either empty (use each row's own lead
  // price) or one price per row.
  std::vector<double> predict_batch(std::span<const PairExample> rows,
                                    std::span<const double> lead_prices = {}) const {
    if (!lead_prices.empty() && lead_prices.size() != rows.size()) {
      throw DimensionError("predict_batch: " + std::to_string(lead_prices.size()) +
                           " prices for " + std::to_string(rows.size()) + " rows");
    }
    std::vector<RawFeatures> raw;
    raw.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::optional<double> price;
      if (!lead_prices.empty()) {
        if (!(lead_prices[i] > 0.0)) {
          throw DomainError("override lead price must be positive, got " +
                            csv::format_double(lead_prices[i]));
        }
        price = lead_prices[i];
      }
      raw.push_back(raw_features(rows[i], price));
    }
    std::vector<double> out(rows.size());
    if (rows.empty()) return out;
    Tape tape;
    const Tensor2& y = tape.value(forward(tape, encode(raw)));
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = unscale_target(y[i]);
    return out;
  }

 private:
  friend DemandModel build_model(const FeatureSchema&, const ArchitectureConfig&, std::uint64_t);

  template <typename P, typename Self>
  static std::vector<P> collect(Self& self) {
    std::vector<P> out;
    for (auto& e : self.embeddings_) out.push_back(&e);
    if (self.has_encoder()) {
      out.push_back(&self.encoder_w_);
      out.push_back(&self.encoder_b_);
    }
    for (auto& l : self.trunk_) {
      out.push_back(&l.weights());
      out.push_back(&l.bias());
    }
    out.push_back(&self.injection_.raw_weights());
    out.push_back(&self.injection_.bias());
    for (auto& l : self.post_) {
      out.push_back(&l.raw_weights());
      out.push_back(&l.bias());
    }
    out.push_back(&self.head_w_);
    out.push_back(&self.head_b_);
    return out;
  }

  template <typename Self>
  static Var forward_impl(Self& self, Tape& tape, const EncodedBatch& batch) {
    std::vector<Var> parts;
    for (std::size_t i = 0; i < self.embeddings_.size(); ++i) {
      Var table = tape.parameter(self.embeddings_[i]);
      parts.push_back(tape.embedding(table, batch.categorical.at(i), self.embeddings_[i].name));
    }
    if (self.has_encoder()) {
      Var x = tape.constant(batch.continuous);
      parts.push_back(tape.relu(tape.featurewise_dense(x, tape.parameter(self.encoder_w_),
                                                       tape.parameter(self.encoder_b_))));
    }
    Var h = tape.concat_cols(parts);
    for (auto& layer : self.trunk_) h = layer.forward(tape, h, true);
    const Var joined[] = {h, tape.constant(batch.monotone)};
    h = self.injection_.forward(tape, tape.concat_cols(joined));
    for (auto& layer : self.post_) h = layer.forward(tape, h);
    const std::vector<int> plus(self.head_w_.value.rows(), 1);
    Var w = tape.signed_abs(tape.parameter(self.head_w_), plus);
    return tape.add_bias(tape.matmul(h, w), tape.parameter(self.head_b_));
  }

  FeatureSchema schema_;
  ArchitectureConfig arch_;
  StandardizationStats stats_;
  std::string dataset_schema_hash_;

  std::vector<Parameter> embeddings_;
  Parameter encoder_w_;
  Parameter encoder_b_;
  std::vector<DenseLayer> trunk_;
  MonoDenseLayer injection_;
  std::vector<MonoDenseLayer> post_;
  Parameter head_w_;
  Parameter head_b_;
};

inline DemandModel build_model(const FeatureSchema& schema, const ArchitectureConfig& config,
                               std::uint64_t seed) {
  schema.validate();
  config.validate();
  if (schema.categorical.empty() && schema.continuous.empty()) {
    throw ConfigError("schema needs at least one categorical or continuous feature");
  }
  DemandModel m;
  m.schema_ = schema;
  m.arch_ = config;
  m.stats_ = StandardizationStats::identity(schema.continuous.size(), schema.monotone.size());
  Rng rng(seed);

  std::size_t width = 0;
  for (const auto& c : schema.categorical) {
    if (c.embedding_dim == 0) {
      throw ConfigError("embedding dimension of '" + c.name + "' must be positive");
    }
    Tensor2 table(c.cardinality(), c.embedding_dim);
    for (double& v : table.data()) v = rng.uniform(-0.05, 0.05);
    m.embeddings_.emplace_back("embedding." + c.name, std::move(table));
    width += c.embedding_dim;
  }
  if (!schema.continuous.empty()) {
    const std::size_t f = schema.continuous.size();
    const std::size_t k = config.continuous_width;
    m.encoder_w_ = Parameter("encoder.w", glorot_uniform(f, k, rng));
    m.encoder_b_ = Parameter("encoder.b", Tensor2(1, f * k));
    width += f * k;
  }
  for (std::size_t i = 0; i < config.trunk_widths.size(); ++i) {
    m.trunk_.emplace_back("trunk." + std::to_string(i), width, config.trunk_widths[i], rng);
    width = config.trunk_widths[i];
  }
  std::vector<int> t(width, 0);
  for (const auto& mono : schema.monotone) t.push_back(mono.direction);
  m.injection_ = MonoDenseLayer("injection", MonotonicityIndicator(std::move(t)),
                                config.injection_width, config.split, config.activation, rng);
  width = config.injection_width;
  for (std::size_t i = 0; i < config.post_widths.size(); ++i) {
    m.post_.emplace_back("post." + std::to_string(i), MonotonicityIndicator::filled(width, 1),
                         config.post_widths[i], config.split, config.activation, rng);
    width = config.post_widths[i];
  }
  m.head_w_ = Parameter("head.w", glorot_uniform(width, 1, rng));
  m.head_b_ = Parameter("head.b", Tensor2(1, 1));
  return m;
}

}  // namespace monoelastic

#endif  // MONOELASTIC_MODEL_HPP_
