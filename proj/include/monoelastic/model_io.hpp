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

#ifndef MONOELASTIC_MODEL_IO_HPP_
#define MONOELASTIC_MODEL_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "monoelastic/errors.hpp"
#include "monoelastic/hash.hpp"
#include "monoelastic/model.hpp"

namespace monoelastic {

// Model container layout (all integers little-endian):
//   "MDNM" | u32 version | u64 json_len | schema JSON
//   | u32 blob_count | blobs... | u32 file CRC32
// blob: u32 name_len | name | u32 rows | u32 cols | f64[rows*cols] | u32 CRC32
// The blob CRC covers name, shape and data; the file CRC covers every byte
// before it.
inline constexpr char kModelMagic[4] = {'M', 'D', 'N', 'M'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::size_t size() const { return bytes_.size(); }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::span<const unsigned char> since(std::size_t offset) const {
    return std::span<const unsigned char>(bytes_).subspan(offset);
  }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> b) : b_(b) {}
  std::span<const unsigned char> take(std::size_t n) {
    if (n > b_.size() - pos_) throw LoadError("model file truncated");
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

inline nlohmann::ordered_json schema_to_json(const FeatureSchema& s) {
  nlohmann::ordered_json j;
  j["categorical"] = nlohmann::ordered_json::array();
  for (const auto& c : s.categorical) {
    j["categorical"].push_back(
        {{"name", c.name}, {"embedding_dim", c.embedding_dim}, {"levels", c.levels}});
  }
  j["continuous"] = s.continuous;
  j["monotone"] = nlohmann::ordered_json::array();
  for (const auto& m : s.monotone) {
    j["monotone"].push_back({{"name", m.name}, {"direction", m.direction}});
  }
  return j;
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  for (const auto& c : j.at("categorical")) {
    s.categorical.push_back(CategoricalFeature{c.at("name").get<std::string>(),
                                               c.at("levels").get<std::vector<std::string>>(),
                                               c.at("embedding_dim").get<std::size_t>()});
  }
  s.continuous = j.at("continuous").get<std::vector<std::string>>();
  for (const auto& m : j.at("monotone")) {
    s.monotone.push_back({m.at("name").get<std::string>(), m.at("direction").get<int>()});
  }
  return s;
}

inline nlohmann::ordered_json architecture_to_json(const ArchitectureConfig& a) {
  return {{"continuous_width", a.continuous_width},
          {"trunk_widths", a.trunk_widths},
          {"injection_width", a.injection_width},
          {"post_widths", a.post_widths},
          {"split", {a.split.convex_parts, a.split.concave_parts, a.split.bounded_parts}},
          {"activation", to_string(a.activation)},
          {"unknown_level_rate", a.unknown_level_rate}};
}

inline ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  a.continuous_width = j.at("continuous_width").get<std::size_t>();
  a.trunk_widths = j.at("trunk_widths").get<std::vector<std::size_t>>();
  a.injection_width = j.at("injection_width").get<std::size_t>();
  a.post_widths = j.at("post_widths").get<std::vector<std::size_t>>();
  const auto split = j.at("split").get<std::vector<int>>();
  if (split.size() != 3) throw LoadError("activation split must have three parts");
  a.split = ActivationSplit{split[0], split[1], split[2]};
  a.activation = parse_base_activation(j.at("activation").get<std::string>());
  a.unknown_level_rate = j.at("unknown_level_rate").get<double>();
  return a;
}

inline void write_blob(ByteWriter& w, const std::string& name, const Tensor2& t) {
  const std::size_t start = w.size();
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  for (double v : t.data()) w.f64(v);
  w.u32(crc32_of(w.since(start)));
}

inline Tensor2 row_vector(const std::vector<double>& v) {
  return Tensor2(1, v.size(), std::vector<double>(v));
}

}  // namespace detail

inline std::vector<unsigned char> serialize_model(const DemandModel& model) {
  detail::ByteWriter w;
  w.raw(kModelMagic, 4);
  w.u32(kModelFormatVersion);
  nlohmann::ordered_json header;
  header["dataset_schema_hash"] = model.dataset_schema_hash();
  header["feature_schema"] = detail::schema_to_json(model.schema());
  header["architecture"] = detail::architecture_to_json(model.architecture());
  const std::string json = header.dump();
  w.u64(json.size());
  w.raw(json.data(), json.size());

  const auto params = model.parameters();
  const auto& st = model.stats();
  w.u32(static_cast<std::uint32_t>(params.size() + 5));
  for (const Parameter* p : params) detail::write_blob(w, p->name, p->value);
  detail::write_blob(w, "stats.continuous_mean", detail::row_vector(st.continuous_mean));
  detail::write_blob(w, "stats.continuous_std", detail::row_vector(st.continuous_std));
  detail::write_blob(w, "stats.monotone_mean", detail::row_vector(st.monotone_mean));
  detail::write_blob(w, "stats.monotone_std", detail::row_vector(st.monotone_std));
  detail::write_blob(w, "stats.target", Tensor2(1, 2, std::vector<double>{st.target_mean,
                                                                          st.target_std}));
  w.u32(crc32_of(w.since(0)));
  return w.bytes();
}

inline DemandModel deserialize_model(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw LoadError("not a model file (bad magic bytes)");
  }
  if (bytes.size() < 12) throw LoadError("model file truncated");
  detail::ByteReader r(bytes);
  r.take(4);
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    throw LoadError("unsupported model format version " + std::to_string(version) +
                    " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  {
    detail::ByteReader tail(bytes.subspan(bytes.size() - 4));
    const std::uint32_t stored = tail.u32();
    if (crc32_of(bytes.first(bytes.size() - 4)) != stored) {
      throw LoadError("model file checksum mismatch (corrupt or truncated)");
    }
  }

  const std::uint64_t json_len = r.u64();
  if (json_len > r.remaining()) throw LoadError("model file truncated");
  auto json_bytes = r.take(static_cast<std::size_t>(json_len));
  DemandModel model;
  try {
    const auto header =
        nlohmann::json::parse(std::string(json_bytes.begin(), json_bytes.end()));
    model = build_model(detail::schema_from_json(header.at("feature_schema")),
                        detail::architecture_from_json(header.at("architecture")), 0);
    model.set_dataset_schema_hash(header.at("dataset_schema_hash").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("invalid model header: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid model header: ") + e.what());
  }

  std::map<std::string, Tensor2> blobs;
  const std::uint32_t count = r.u32();
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::size_t start = r.pos();
    const std::uint32_t name_len = r.u32();
    auto name_bytes = r.take(name_len);
    std::string name(name_bytes.begin(), name_bytes.end());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    if (n * 8 > r.remaining()) throw LoadError("model file truncated in blob '" + name + "'");
    std::vector<double> data(static_cast<std::size_t>(n));
    for (auto& v : data) v = r.f64();
    const std::uint32_t expected = crc32_of(bytes.subspan(start, r.pos() - start));
    if (r.u32() != expected) throw LoadError("checksum mismatch in blob '" + name + "'");
    blobs.emplace(std::move(name), Tensor2(rows, cols, std::move(data)));
  }
  if (r.remaining() != 4) throw LoadError("unexpected trailing bytes in model file");

  auto take_blob = [&](const std::string& name) -> Tensor2 {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw LoadError("model file is missing blob '" + name + "'");
    return it->second;
  };
  for (Parameter* p : model.parameters()) {
    Tensor2 t = take_blob(p->name);
    if (!t.same_shape(p->value)) {
      throw LoadError("blob '" + p->name + "' has shape " + t.shape() + ", expected " +
                      p->value.shape());
    }
    p->value = std::move(t);
    p->zero_grad();
  }
  auto vec = [&](const std::string& name) {
    Tensor2 t = take_blob(name);
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  StandardizationStats st;
  st.continuous_mean = vec("stats.continuous_mean");
  st.continuous_std = vec("stats.continuous_std");
  st.monotone_mean = vec("stats.monotone_mean");
  st.monotone_std = vec("stats.monotone_std");
  const auto target = vec("stats.target");
  if (target.size() != 2) throw LoadError("stats.target must hold mean and std");
  st.target_mean = target[0];
  st.target_std = target[1];
  try {
    model.set_stats(std::move(st));
  } catch (const ConfigError& e) {
    throw LoadError(e.what());
  }
  return model;
}

inline void save_model(const DemandModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing model file '" + path.string() + "'");
}

inline DemandModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open model file '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

// Guard used before evaluating a model against a dataset.
inline void require_schema_match(const DemandModel& model, const std::string& dataset_hash) {
  if (model.dataset_schema_hash() != dataset_hash) {
    throw SchemaMismatchError("model was trained on dataset schema '" +
                              model.dataset_schema_hash() + "' but the dataset has schema '" +
                              dataset_hash + "'");
  }
}

}  // namespace monoelastic

#endif  // MONOELASTIC_MODEL_IO_HPP_
