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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "monoelastic/pairs.hpp"
#include "monoelastic/transactions.hpp"
#include "test_support.hpp"

namespace monoelastic {
namespace {

const char* kHeader =
    "item_id,year_month,price,units_sold,inventory,oos_days,rating_count,days_launched,"
    "competitor_price,substitute_available,event_flags,brand,size,category,subcategory\n";

std::vector<TransactionMonth> ingest_text(const std::string& body) {
  std::istringstream in(std::string(kHeader) + body);
  return ingest(in);
}

TransactionMonth record(const std::string& item, int yyyymm, double price, double inventory,
                        double units = 10.0) {
  TransactionMonth t;
  t.item_id = item;
  t.year_month = YearMonth::from_yyyymm(yyyymm);
  t.signals.price = price;
  t.signals.units_sold = units;
  t.signals.inventory = inventory;
  t.attributes = {"b", "s", "c", "sc"};
  return t;
}

TEST(Ingest, ThreeValidRows) {
  const auto r = ingest_text(
      "item_A,2023-05,3.5,10,40,0,12,100,3.9,1,holiday,acme,M,food,snacks\n"
      "item_A,202306,3.5,11,40,2,12,130,,0,,acme,M,food,snacks\n"
      "item_B,2023-05,7,0,0,30,1,10,,false,holiday;back_to_school,zen,L,home,misc\n");
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].year_month.yyyymm(), 202305);
  EXPECT_EQ(r[0].signals.competitor_price, 3.9);
  EXPECT_TRUE(r[0].signals.substitute_available);
  EXPECT_FALSE(r[1].signals.competitor_price.has_value());
  EXPECT_EQ(r[2].signals.event_flags,
            (std::vector<std::string>{"back_to_school", "holiday"}));
  EXPECT_EQ(r[2].attributes.category, "home");
}

TEST(Ingest, DuplicateKeyIsIntegrityError) {
  EXPECT_THROW(ingest_text("item_A,2023-05,3.5,10,40,0,12,100,,0,,a,M,f,s\n"
                           "item_A,202305,3.6,10,40,0,12,100,,0,,a,M,f,s\n"),
               IntegrityError);
}

TEST(Ingest, NegativePriceIsParseErrorWithLine) {
  try {
    ingest_text("item_A,2023-05,3.5,10,40,0,12,100,,0,,a,M,f,s\n"
                "item_A,2023-06,-3.50,10,40,0,12,100,,0,,a,M,f,s\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Ingest, RejectsMalformedRows) {
  EXPECT_THROW(ingest_text("item_A,2023-05,3.5,-1,40,0,12,100,,0,,a,M,f,s\n"), ParseError);
  EXPECT_THROW(ingest_text("item_A,2023-05,3.5,1,40,32,12,100,,0,,a,M,f,s\n"), ParseError);
  EXPECT_THROW(ingest_text("item_A,2023-13,3.5,1,40,0,12,100,,0,,a,M,f,s\n"), ParseError);
  EXPECT_THROW(ingest_text("item_A,2023-05,abc,1,40,0,12,100,,0,,a,M,f,s\n"), ParseError);
  EXPECT_THROW(ingest_text("item_A,2023-05,3.5,1,40,0,12\n"), ParseError);
  EXPECT_THROW(ingest_text("item_A,2023-05,0,5,40,0,12,100,,0,,a,M,f,s\n"), ParseError);
  std::istringstream bad_header("item,month\n");
  EXPECT_THROW(ingest(bad_header), ParseError);
}

TEST(Ingest, WriteThenIngestRoundTrips) {
  Rng rng(5);
  auto recs = testing::random_records(rng, 3, 10);
  std::ostringstream out;
  write_transactions(out, recs);
  std::istringstream in(out.str());
  auto back = ingest(in);
  auto by_key = [](const TransactionMonth& a, const TransactionMonth& b) {
    return std::tie(a.item_id, a.year_month) < std::tie(b.item_id, b.year_month);
  };
  std::sort(recs.begin(), recs.end(), by_key);
  std::sort(back.begin(), back.end(), by_key);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].signals, recs[i].signals);
    EXPECT_EQ(back[i].attributes, recs[i].attributes);
  }
}

TEST(PriceChangePct, Examples) {
  EXPECT_DOUBLE_EQ(price_change_pct(10, 12), 0.2);
  EXPECT_EQ(price_change_pct(10, 10), 0.0);
  EXPECT_DOUBLE_EQ(price_change_pct(8, 6), -0.25);
  EXPECT_THROW(price_change_pct(0, 6), DomainError);
  EXPECT_THROW(price_change_pct(-1, 6), DomainError);
}

TEST(BuildPairs, ThreeMonthsGiveThreePairs) {
  const std::vector<TransactionMonth> recs = {record("A", 202301, 2, 5),
                                              record("A", 202303, 2.5, 5),
                                              record("A", 202302, 2.2, 5)};
  const auto pairs = build_pairs(recs);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].lag_month.yyyymm(), 202301);
  EXPECT_EQ(pairs[0].lead_month.yyyymm(), 202302);
  EXPECT_EQ(pairs[1].lead_month.yyyymm(), 202303);
  EXPECT_EQ(pairs[2].lag_month.yyyymm(), 202302);
  EXPECT_EQ(pairs[1].month_gap, 2);
  EXPECT_DOUBLE_EQ(pairs[1].price_change_pct, 0.25);
  EXPECT_EQ(pairs[1].target, 10.0);
}

TEST(BuildPairs, GapOfFourteenExcluded) {
  const auto pairs = build_pairs({record("A", 202301, 2, 5), record("A", 202403, 2, 5)});
  EXPECT_TRUE(pairs.empty());
  EXPECT_EQ(build_pairs({record("A", 202301, 2, 5), record("A", 202401, 2, 5)}).size(), 1u);
}

TEST(BuildPairs, ZeroInventoryExcluded) {
  EXPECT_TRUE(build_pairs({record("A", 202301, 2, 5), record("A", 202302, 2, 0)}).empty());
  EXPECT_TRUE(build_pairs({record("A", 202301, 2, 0), record("A", 202302, 2, 5)}).empty());
}

TEST(BuildPairs, ItemsNeverMix) {
  const auto pairs = build_pairs({record("A", 202301, 2, 5), record("B", 202302, 2, 5)});
  EXPECT_TRUE(pairs.empty());
  EXPECT_TRUE(build_pairs({}).empty());
}

TEST(BuildPairs, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int instance = 0; instance < 50; ++instance) {
    const auto recs = testing::random_records(rng, 5, 30);
    const auto pairs = build_pairs(recs);
    EXPECT_EQ(testing::keys_of(pairs), testing::brute_force_pairs(recs)) << "instance " << instance;
    EXPECT_EQ(testing::keys_of(pairs).size(), pairs.size());
    EXPECT_TRUE(std::is_sorted(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
      return std::tie(a.item_id, a.lag_month, a.lead_month) <
             std::tie(b.item_id, b.lag_month, b.lead_month);
    }));
  }
}

std::vector<TransactionMonth> monthly_records(int items, int months) {
  std::vector<TransactionMonth> out;
  for (int i = 0; i < items; ++i) {
    for (int m = 0; m < months; ++m) {
      auto r = record("item" + std::to_string(i), 202201, 3.0 + m * 0.1, 20);
      r.year_month = YearMonth::from_yyyymm(202201).plus_months(m);
      out.push_back(r);
    }
  }
  return out;
}

TEST(Split, TwentySevenMonthsHoldOutLastThree) {
  const auto pairs = build_pairs(monthly_records(4, 27));
  const auto ds = split(pairs, SplitPolicy{}, 3);
  EXPECT_EQ(ds.manifest.first_month.yyyymm(), 202201);
  EXPECT_EQ(ds.manifest.last_month.yyyymm(), 202403);
  EXPECT_EQ(ds.manifest.boundary_month.yyyymm(), 202401);  // month 25
  std::set<int> oot_leads;
  for (const auto& p : ds.out_of_time) oot_leads.insert(p.lead_month.yyyymm());
  EXPECT_EQ(oot_leads, (std::set<int>{202401, 202402, 202403}));
  for (const auto* part : {&ds.train, &ds.validation}) {
    for (const auto& p : *part) EXPECT_LT(p.lead_month, ds.manifest.boundary_month);
  }
  EXPECT_EQ(ds.train.size() + ds.validation.size() + ds.out_of_time.size(), pairs.size());
}

TEST(Split, DisjointAndDeterministic) {
  const auto pairs = build_pairs(monthly_records(5, 15));
  const auto a = split(pairs, SplitPolicy{}, 11);
  const auto b = split(pairs, SplitPolicy{}, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  const auto c = split(pairs, SplitPolicy{}, 12);
  EXPECT_NE(a.train, c.train);
  auto ka = testing::keys_of(a.train);
  for (const auto& k : testing::keys_of(a.validation)) EXPECT_FALSE(ka.count(k));
  for (const auto& k : testing::keys_of(a.out_of_time)) EXPECT_FALSE(ka.count(k));
}

TEST(Split, HundredPairsGiveEightyTwenty) {
  // Ten items, months 1..12 as lag and month 13 as the only lead: exactly
  // 100 pairs with lead month before the boundary once OOT months are added.
  std::vector<PairExample> pairs;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    auto p = testing::random_pair(rng);
    p.lag_month = YearMonth::from_yyyymm(202201);
    p.lead_month = YearMonth::from_yyyymm(202202);
    p.month_gap = 1;
    pairs.push_back(p);
  }
  auto oot = testing::random_pair(rng);
  oot.lag_month = YearMonth::from_yyyymm(202202);
  oot.lead_month = YearMonth::from_yyyymm(202205);
  pairs.push_back(oot);
  const auto ds = split(pairs, SplitPolicy{}, 9);
  EXPECT_EQ(ds.out_of_time.size(), 1u);
  EXPECT_EQ(ds.train.size(), 80u);
  EXPECT_EQ(ds.validation.size(), 20u);
}

TEST(Split, ByItemKeepsItemsTogether) {
  const auto pairs = build_pairs(monthly_records(10, 12));
  SplitPolicy pol;
  pol.by_item = true;
  const auto ds = split(pairs, pol, 4);
  std::set<std::string> train_items, val_items;
  for (const auto& p : ds.train) train_items.insert(p.item_id);
  for (const auto& p : ds.validation) val_items.insert(p.item_id);
  EXPECT_EQ(train_items.size(), 8u);
  EXPECT_EQ(val_items.size(), 2u);
  for (const auto& id : val_items) EXPECT_FALSE(train_items.count(id));
}

TEST(Split, ShortSpanIsConfigError) {
  const auto pairs = build_pairs(monthly_records(2, 3));
  EXPECT_THROW(split(pairs, SplitPolicy{}, 1), ConfigError);
  EXPECT_THROW(split({}, SplitPolicy{}, 1), ConfigError);
  EXPECT_NO_THROW(split(build_pairs(monthly_records(2, 4)), SplitPolicy{}, 1));
}

TEST(InferenceSet, ZeroInventorySkippedValidItemKept) {
  auto recs = monthly_records(2, 14);
  for (auto& r : recs) {
    if (r.item_id == "item1" && r.year_month.yyyymm() == 202302) r.signals.inventory = 0;
  }
  recs[1].signals.event_flags = {"holiday"};  // item0, 2022-02
  const auto set = build_inference_set(recs, YearMonth::from_yyyymm(202302));
  ASSERT_EQ(set.rows.size(), 1u);
  ASSERT_EQ(set.skipped.size(), 1u);
  EXPECT_EQ(set.skipped[0].item_id, "item1");
  const auto& row = set.rows[0];
  EXPECT_EQ(row.item_id, "item0");
  EXPECT_EQ(row.month_gap, 1);
  EXPECT_EQ(row.lead_month.yyyymm(), 202303);
  EXPECT_EQ(row.lead.price, row.lag.price);
  EXPECT_EQ(row.price_change_pct, 0.0);
  EXPECT_FALSE(row.target.has_value());
  EXPECT_TRUE(row.lead.event_flags.empty());
  const auto set2 = build_inference_set(recs, YearMonth::from_yyyymm(202301));
  EXPECT_EQ(set2.rows[0].lead.event_flags, std::vector<std::string>{"holiday"});
}

TEST(InferenceSet, MissingAsOfMonthSkipped) {
  auto recs = monthly_records(1, 3);
  recs.push_back(record("late", 202212, 3, 5));
  const auto set = build_inference_set(recs, YearMonth::from_yyyymm(202203));
  EXPECT_EQ(set.rows.size(), 1u);
  ASSERT_EQ(set.skipped.size(), 1u);
  EXPECT_EQ(set.skipped[0].item_id, "late");
}

TEST(InferenceSet, EmptyRecordsGiveEmptySet) {
  const auto set = build_inference_set({}, YearMonth::from_yyyymm(202301));
  EXPECT_TRUE(set.rows.empty());
  EXPECT_TRUE(set.skipped.empty());
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(DatasetIo, SerializationIsByteIdenticalAndReadable) {
  Rng rng(77);
  const auto recs = testing::random_records(rng, 5, 20);
  const auto tmp = std::filesystem::temp_directory_path() / "monoelastic_dataset_io";
  std::filesystem::remove_all(tmp);
  const auto ds = split(build_pairs(recs), SplitPolicy{}, 5);
  write_dataset(tmp / "a", ds);
  write_dataset(tmp / "b", split(build_pairs(recs), SplitPolicy{}, 5));
  EXPECT_EQ(slurp(tmp / "a" / "pairs.csv"), slurp(tmp / "b" / "pairs.csv"));
  EXPECT_EQ(slurp(tmp / "a" / "manifest.json"), slurp(tmp / "b" / "manifest.json"));

  const auto back = read_dataset(tmp / "a");
  EXPECT_EQ(back.train, ds.train);
  EXPECT_EQ(back.validation, ds.validation);
  EXPECT_EQ(back.out_of_time, ds.out_of_time);
  EXPECT_EQ(back.schema_hash, ds.schema_hash);
  EXPECT_EQ(back.manifest.boundary_month, ds.manifest.boundary_month);
  EXPECT_EQ(back.manifest.seed, 5u);
  std::filesystem::remove_all(tmp);
}

}  // namespace
}  // namespace monoelastic
