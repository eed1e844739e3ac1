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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "monoelastic/synthetic.hpp"
#include "monoelastic/trainer.hpp"
#include "test_support.hpp"

namespace monoelastic {
namespace {

DatasetSplit small_dataset(double sigma = 0.1, std::size_t items = 12, bool seasonal = true) {
  SyntheticWorld w;
  w.items = items;
  w.months = 12;
  w.noise_sigma = sigma;
  w.seasonal = seasonal;
  return split(build_pairs(generate(w).records), SplitPolicy{}, 3);
}

DemandModel small_model(const DatasetSplit& ds, std::uint64_t seed = 2) {
  return build_model(default_feature_schema(ds.train, ds.event_vocabulary),
                     testing::small_architecture(), seed);
}

TrainConfig quick_config(int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  return c;
}

TEST(FitStats, PopulationMeanAndStd) {
  FeatureSchema s;
  s.continuous = {"month_gap"};
  s.monotone = {{kLeadPrice, -1}, {kPriceChangePct, -1}};
  const auto m = build_model(s, testing::small_architecture(), 1);
  std::vector<PairExample> rows = testing::random_pairs(3, 4);
  for (int i = 0; i < 3; ++i) {
    rows[i].month_gap = i + 1;
    rows[i].target = 10.0 * (i + 1);
  }
  const auto st = fit_stats(m, rows);
  EXPECT_DOUBLE_EQ(st.continuous_mean[0], 2.0);
  EXPECT_NEAR(st.continuous_std[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(st.continuous_std[0], 0.8165, 5e-5);
  EXPECT_DOUBLE_EQ(st.target_mean, 20.0);
}

TEST(FitStats, ConstantFeatureFlooredAndStandardizedToZero) {
  FeatureSchema s;
  s.continuous = {"month_gap"};
  s.monotone = {{kLeadPrice, -1}, {kPriceChangePct, -1}};
  auto m = build_model(s, testing::small_architecture(), 1);
  auto rows = testing::random_pairs(5, 4);
  for (auto& r : rows) r.month_gap = 4;
  const auto st = fit_stats(m, rows);
  EXPECT_EQ(st.continuous_std[0], kStdFloor);
  m.set_stats(st);
  const RawFeatures raw = m.raw_features(rows[0], std::nullopt);
  EXPECT_EQ(m.encode(std::span<const RawFeatures>(&raw, 1)).continuous(0, 0), 0.0);
}

TEST(FitStats, EmptySplitIsError) {
  const auto rows = testing::random_pairs(5, 4);
  const auto m = build_model(testing::small_schema(rows), testing::small_architecture(), 1);
  EXPECT_THROW(fit_stats(m, std::span<const PairExample>{}), ConfigError);
}

TEST(Train, StatsComeFromTrainingRowsOnly) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  const auto report = train(m, ds, quick_config(1));
  const auto expected = fit_stats(m, ds.train);
  EXPECT_EQ(report.stats_fingerprint, expected.fingerprint());
  EXPECT_EQ(m.stats(), expected);
  std::vector<PairExample> all = ds.train;
  all.insert(all.end(), ds.validation.begin(), ds.validation.end());
  EXPECT_NE(fit_stats(m, all).fingerprint(), report.stats_fingerprint);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  std::vector<Tensor2> before;
  for (const Parameter* p : m.parameters()) before.push_back(p->value);
  auto cfg = quick_config(2);
  cfg.learning_rate = 0.0;
  const auto report = train(m, ds, cfg);
  const auto after = m.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(after[i]->value, before[i]);
  EXPECT_EQ(report.epochs[0].validation_loss, report.epochs[1].validation_loss);
}

TEST(Train, NoiselessWorldLossDecreasesForFiveEpochs) {
  // Target linear in lead price (decreasing) and the substitute flag.
  auto rows = testing::random_pairs(2000, 31);
  for (auto& r : rows) r.target = 300.0 - 4.0 * r.lead.price + (r.lead.substitute_available ? 20 : 0);
  DatasetSplit ds;
  ds.train.assign(rows.begin(), rows.begin() + 1600);
  ds.validation.assign(rows.begin() + 1600, rows.end());
  ds.schema_hash = dataset_schema_hash({"holiday"});
  auto m = build_model(testing::small_schema(ds.train), testing::small_architecture(), 2);
  const auto report = train(m, ds, quick_config(5));
  ASSERT_EQ(report.epochs.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) {
    EXPECT_LT(report.epochs[e].train_loss, report.epochs[e - 1].train_loss) << "epoch " << e + 1;
  }
}

TEST(Train, SameSeedSameReport) {
  const auto ds = small_dataset();
  auto a = small_model(ds);
  auto b = small_model(ds);
  const auto ra = train(a, ds, quick_config(2));
  const auto rb = train(b, ds, quick_config(2));
  EXPECT_TRUE(ra.same_result(rb));
  auto c = small_model(ds);
  auto cfg = quick_config(2);
  cfg.seed = 99;
  EXPECT_FALSE(train(c, ds, cfg).same_result(ra));
}

TEST(Train, MonotoneAfterEveryEpoch) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  int probes = 0;
  train(m, ds, quick_config(3), [&](int, const DemandModel& model) {
    for (std::size_t r = 0; r < 10; ++r) {
      const auto& row = ds.validation[r * 7 % ds.validation.size()];
      double prev = INFINITY;
      for (int k = 0; k < 20; ++k) {
        const double y = model.predict_demand(row, row.lag.price * (0.5 + 0.05 * k));
        EXPECT_LE(y, prev);
        prev = y;
      }
    }
    ++probes;
  });
  EXPECT_EQ(probes, 3);
}

TEST(Train, WeightSignsHoldAfterTraining) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  train(m, ds, quick_config(2));
  const auto& inj = m.injection();
  const Tensor2 w = inj.effective_weights();
  const auto& t = inj.indicator().values();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      if (t[i] < 0) EXPECT_LE(w(i, j), 0.0);
    }
  }
  for (const auto& l : m.post_layers()) {
    const Tensor2 w_post = l.effective_weights();
    for (double v : w_post.data()) EXPECT_GE(v, 0.0);
  }
  const Tensor2 head = m.head_effective_weights();
  for (double v : head.data()) EXPECT_GE(v, 0.0);
}

TEST(Train, SchemaHashMismatchRejected) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  m.set_dataset_schema_hash("other");
  EXPECT_THROW(train(m, ds, quick_config(1)), SchemaMismatchError);
}

TEST(Train, NonFiniteLossReportsDiagnostics) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  auto cfg = quick_config(1);
  cfg.learning_rate = 1e200;
  try {
    train(m, ds, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos);
    EXPECT_NE(msg.find("head.w="), std::string::npos);
  }
}

TEST(Train, ReportSerializations) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  const auto r = train(m, ds, quick_config(2));
  std::ostringstream csv;
  r.write_loss_csv(csv);
  EXPECT_EQ(csv.str().rfind("epoch,train_loss,validation_loss\n1,", 0), 0u);
  const auto j = r.to_json();
  EXPECT_EQ(j["epochs"].size(), 2u);
  EXPECT_TRUE(j["parameter_norms"].contains("head.w"));
}

TEST(Adam, FirstStepMatchesHandCalculation) {
  Parameter p("w", Tensor2(1, 1, 0.5));
  p.gradient[0] = 1.0;
  AdamState st;
  TrainConfig cfg;
  adam_step(p, st, cfg);
  // m_hat = g, v_hat = g^2 -> delta = -lr * g / (|g| + eps)
  EXPECT_NEAR(p.value[0] - 0.5, -0.01, 1e-9);
  EXPECT_DOUBLE_EQ(p.value[0], 0.5 - 0.01 / (1.0 + 1e-8));
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Parameter p("w", Tensor2(2, 2, 0.25));
  AdamState st;
  for (int i = 0; i < 10; ++i) adam_step(p, st, TrainConfig{});
  for (double v : p.value.data()) EXPECT_EQ(v, 0.25);
}

TEST(Adam, EqualGradientsEvolveIdentically) {
  Adam adam{TrainConfig{}};
  Parameter a("a", Tensor2(1, 3, 1.0)), b("b", Tensor2(1, 3, 1.0));
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    for (std::size_t k = 0; k < 3; ++k) a.gradient[k] = b.gradient[k] = rng.normal();
    adam.step(a);
    adam.step(b);
  }
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(adam.state("a").step, 20);
}

TEST(Adam, ShapeMismatchIsDimensionError) {
  Parameter p("w", Tensor2(2, 2));
  p.gradient = Tensor2(1, 2);
  AdamState st;
  EXPECT_THROW(adam_step(p, st, TrainConfig{}), DimensionError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.l2_decay = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Decay, CoversWeightsButNotEmbeddingsOrBiases) {
  const auto ds = small_dataset();
  auto m = small_model(ds);
  for (const Parameter* p : m.decayed_parameters()) {
    EXPECT_EQ(p->name.rfind("embedding.", 0), std::string::npos);
    EXPECT_NE(p->name.back(), 'b') << p->name;
  }
  EXPECT_EQ(m.decayed_parameters().size(), 1u + 2u + 1u + 1u + 1u);
}

TEST(GradcheckModel, DefaultArchitectureWithDecay) {
  const auto ds = small_dataset();
  auto m = build_model(default_feature_schema(ds.train, ds.event_vocabulary),
                       ArchitectureConfig{}, 4);
  m.set_stats(fit_stats(m, ds.train));
  const std::span<const PairExample> rows(ds.train.data(), 16);
  const auto report = gradcheck_model(m, rows, 1e-2, 6);
  EXPECT_EQ(report.entries.size(), m.parameters().size());
  for (const auto& e : report.entries) {
    EXPECT_LT(e.max_relative_error, 1e-5)
        << e.parameter << " analytic " << e.worst_analytic << " numeric " << e.worst_numeric;
  }
}

}  // namespace
}  // namespace monoelastic
