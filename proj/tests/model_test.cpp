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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "monoelastic/model.hpp"
#include "monoelastic/model_io.hpp"
#include "test_support.hpp"

namespace monoelastic {
namespace {

using testing::random_pair;
using testing::random_pairs;

FeatureSchema two_categorical_schema() {
  FeatureSchema s;
  std::vector<std::string> nine, four;
  for (int i = 0; i < 9; ++i) nine.push_back("i" + std::to_string(i));
  for (int i = 0; i < 4; ++i) four.push_back("b" + std::to_string(i));
  s.categorical.push_back({"item_id", nine, default_embedding_dim(10)});
  s.categorical.push_back({"brand", four, default_embedding_dim(5)});
  s.continuous = {"month_gap", "lag_price_log", "lag_units_log"};
  s.monotone = {{kLeadPrice, -1}, {kPriceChangePct, -1}};
  return s;
}

TEST(Model, ParameterCountMatchesHandCount) {
  const auto s = two_categorical_schema();
  EXPECT_EQ(s.categorical[0].cardinality(), 10u);
  EXPECT_EQ(s.categorical[0].embedding_dim, 4u);
  EXPECT_EQ(s.categorical[1].embedding_dim, 3u);
  const auto m = build_model(s, ArchitectureConfig{}, 3);
  // emb 10*4 + 5*3; encoder 3*8 + 24; trunk 31*128+128, 128*64+64;
  // injection 66*64+64; post 64*32+32; head 32+1
  const std::size_t expected = 55 + 48 + 4096 + 8256 + 4288 + 2080 + 33;
  EXPECT_EQ(m.parameter_count(), expected);
  EXPECT_EQ(expected, 18856u);
}

TEST(Model, EmptyCategoricalSetBuilds) {
  auto s = two_categorical_schema();
  s.categorical.clear();
  const auto m = build_model(s, ArchitectureConfig{}, 3);
  EXPECT_TRUE(m.embeddings().empty());
  Rng rng(4);
  EXPECT_TRUE(std::isfinite(m.predict_demand(random_pair(rng))));
}

TEST(Model, MissingLeadPriceIsConfigError) {
  auto s = two_categorical_schema();
  s.monotone = {{kPriceChangePct, -1}};
  EXPECT_THROW(build_model(s, ArchitectureConfig{}, 3), ConfigError);
  s.monotone = {{kLeadPrice, +1}, {kPriceChangePct, -1}};
  EXPECT_THROW(build_model(s, ArchitectureConfig{}, 3), ConfigError);
}

TEST(Model, ZeroWidthIsConfigError) {
  auto a = ArchitectureConfig{};
  a.injection_width = 0;
  EXPECT_THROW(build_model(two_categorical_schema(), a, 3), ConfigError);
  a = ArchitectureConfig{};
  a.trunk_widths = {128, 0};
  EXPECT_THROW(build_model(two_categorical_schema(), a, 3), ConfigError);
}

TEST(Model, DuplicateFeatureNameRejected) {
  auto s = two_categorical_schema();
  s.continuous.push_back("month_gap");
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Model, OverrideEqualToLeadPriceIsIdentity) {
  const auto train = random_pairs(50, 11);
  const auto m = build_model(testing::small_schema(train), ArchitectureConfig{}, 5);
  for (const auto& p : train) {
    EXPECT_EQ(m.predict_demand(p, p.lead.price), m.predict_demand(p));
  }
}

TEST(Model, NonPositiveOverrideIsDomainError) {
  const auto train = random_pairs(5, 11);
  const auto m = build_model(testing::small_schema(train), ArchitectureConfig{}, 5);
  EXPECT_THROW(m.predict_demand(train[0], 0.0), DomainError);
  EXPECT_THROW(m.predict_demand(train[0], -2.0), DomainError);
}

TEST(Model, UnseenCategoricalLevelMapsToUnknown) {
  const auto train = random_pairs(20, 11, 3);
  const auto schema = testing::small_schema(train);
  EXPECT_EQ(schema.categorical[0].index_of("never_seen"), 0u);
  const auto m = build_model(schema, ArchitectureConfig{}, 5);
  auto p = train[0];
  p.item_id = "never_seen";
  EXPECT_TRUE(std::isfinite(m.predict_demand(p)));
}

TEST(Model, PredictionsNonIncreasingInPrice) {
  const auto train = random_pairs(200, 12);
  auto m = build_model(testing::small_schema(train), ArchitectureConfig{}, 6);
  Rng rng(99);
  int violations = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const auto p = random_pair(rng);
    double p1 = rng.uniform(0.5, 80.0), p2 = rng.uniform(0.5, 80.0);
    if (p1 > p2) std::swap(p1, p2);
    if (m.predict_demand(p, p1) < m.predict_demand(p, p2)) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Model, UntrainedOutputsFinite) {
  const auto rows = random_pairs(1000, 13);
  const auto m = build_model(testing::small_schema(rows), ArchitectureConfig{}, 7);
  for (double y : m.predict_batch(rows)) EXPECT_TRUE(std::isfinite(y));
}

TEST(Model, BatchMatchesSingleRow) {
  const auto rows = random_pairs(30, 14);
  const auto m = build_model(testing::small_schema(rows), ArchitectureConfig{}, 7);
  std::vector<double> prices;
  for (const auto& r : rows) prices.push_back(r.lead.price * 0.9);
  const auto batch = m.predict_batch(rows, prices);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(batch[i], m.predict_demand(rows[i], prices[i]), 1e-12);
  }
}

TEST(Model, CounterfactualPriceChangeIsRecomputed) {
  const auto rows = random_pairs(100, 15);
  const auto m = build_model(testing::small_schema(rows), ArchitectureConfig{}, 7);
  Rng rng(8);
  std::size_t checked = 0;
  for (const auto& r : rows) {
    const double override_price = rng.uniform(0.5, 80.0);
    m.predict_demand(r, override_price, [&](const PairExample& p, const RawFeatures& raw) {
      ASSERT_EQ(raw.monotone.size(), 2u);
      EXPECT_EQ(raw.monotone[0], override_price);
      EXPECT_EQ(raw.monotone[1], (override_price - p.lag.price) / p.lag.price);
      ++checked;
    });
  }
  EXPECT_EQ(checked, 100u);
}

TEST(Model, EmbeddingsAreFirstAndHeadIsLast) {
  const auto m = build_model(two_categorical_schema(), ArchitectureConfig{}, 3);
  const auto params = m.parameters();
  EXPECT_EQ(params.front()->name, "embedding.item_id");
  EXPECT_EQ(params.back()->name, "head.b");
  const Tensor2 head = m.head_effective_weights();
  for (double w : head.data()) EXPECT_GE(w, 0.0);
}

class ModelIo : public ::testing::Test {
 protected:
  void SetUp() override {
    rows_ = random_pairs(100, 21);
    model_ = build_model(testing::small_schema(rows_), ArchitectureConfig{}, 9);
    auto st = StandardizationStats::identity(model_.schema().continuous.size(), 2);
    st.continuous_mean[1] = 1.25;
    st.monotone_std[0] = 17.5;
    st.target_mean = 140.0;
    st.target_std = 60.0;
    model_.set_stats(st);
    model_.set_dataset_schema_hash("abc123");
    path_ = std::filesystem::temp_directory_path() /
            (std::string("monoelastic_") +
             ::testing::UnitTest::GetInstance()->current_test_info()->name() + ".mdnm");
  }
  void TearDown() override { std::filesystem::remove(path_); }

  std::vector<unsigned char> read_bytes() const {
    std::ifstream in(path_, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  void write_bytes(const std::vector<unsigned char>& b) const {
    std::ofstream out(path_, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }

  std::vector<PairExample> rows_;
  DemandModel model_;
  std::filesystem::path path_;
};

TEST_F(ModelIo, RoundTripIsExact) {
  save_model(model_, path_);
  const auto loaded = load_model(path_);
  EXPECT_EQ(loaded.stats(), model_.stats());
  EXPECT_EQ(loaded.dataset_schema_hash(), "abc123");
  EXPECT_EQ(loaded.schema().continuous, model_.schema().continuous);
  const auto a = model_.parameters();
  const auto b = loaded.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(a[i]->value, b[i]->value);
  }
  const auto pa = model_.predict_batch(rows_);
  const auto pb = loaded.predict_batch(rows_);
  EXPECT_EQ(pa, pb);
  EXPECT_EQ(serialize_model(loaded), serialize_model(model_));
}

TEST_F(ModelIo, CorruptedMagicIsLoadError) {
  save_model(model_, path_);
  auto b = read_bytes();
  b[0] = 'X';
  write_bytes(b);
  try {
    load_model(path_);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST_F(ModelIo, VersionMismatchIsLoadError) {
  save_model(model_, path_);
  auto b = read_bytes();
  b[4] = 9;
  write_bytes(b);
  try {
    load_model(path_);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("version 9"), std::string::npos);
  }
}

TEST_F(ModelIo, TruncationIsLoadError) {
  save_model(model_, path_);
  auto b = read_bytes();
  b.resize(b.size() / 2);
  write_bytes(b);
  EXPECT_THROW(load_model(path_), LoadError);
  b.resize(10);
  write_bytes(b);
  EXPECT_THROW(load_model(path_), LoadError);
}

TEST_F(ModelIo, FlippedPayloadByteIsChecksumFailure) {
  save_model(model_, path_);
  auto b = read_bytes();
  b[b.size() - 100] ^= 0x01;
  write_bytes(b);
  try {
    load_model(path_);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST_F(ModelIo, SchemaHashGuard) {
  EXPECT_NO_THROW(require_schema_match(model_, "abc123"));
  EXPECT_THROW(require_schema_match(model_, "def456"), SchemaMismatchError);
}

TEST(ModelIoMissing, MissingFileIsLoadError) {
  EXPECT_THROW(load_model("/nonexistent/dir/model.mdnm"), LoadError);
}

}  // namespace
}  // namespace monoelastic
