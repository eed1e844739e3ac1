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

#ifndef MONOELASTIC_GRADCHECK_HPP_
#define MONOELASTIC_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "monoelastic/errors.hpp"
#include "monoelastic/random.hpp"
#include "monoelastic/tape.hpp"
#include "monoelastic/tensor.hpp"

namespace monoelastic {

inline constexpr double kGradcheckStep = 1e-5;
// Denominator floor for the relative error; keeps near-zero gradients from
// turning central-difference rounding noise (~1e-11) into large ratios.
inline constexpr double kGradcheckFloor = 1e-4;

struct GradcheckEntry {
  std::string parameter;
  std::size_t probes = 0;
  double max_relative_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  double max_relative_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_relative_error);
    return m;
  }
};

// Builds the scalar loss on a fresh tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;
// Return false to skip probing entry `index` of a parameter (e.g. kinks).
using ProbeFilter = std::function<bool(const Parameter&, std::size_t index)>;

inline double gradcheck_relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients against central differences at probe_count
// randomly chosen entries of every parameter.
inline GradcheckReport gradcheck(const LossBuilder& build_loss,
                                 std::span<Parameter* const> params,
                                 std::size_t probe_count,
                                 std::uint64_t seed = 0x5eed,
                                 const ProbeFilter& filter = {}) {
  GradcheckReport report;
  if (params.empty()) return report;

  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = build_loss(tape);
    if (!tape.value(loss).all_finite()) {
      throw NumericError("gradcheck: non-finite loss at the base point");
    }
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    return tape.value(build_loss(tape))[0];
  };

  Rng rng(seed);
  for (Parameter* p : params) {
    if (!p->gradient.all_finite()) {
      throw NumericError("gradcheck: non-finite gradient in parameter '" +
                         p->name + "'");
    }
    GradcheckEntry entry;
    entry.parameter = p->name;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (!filter || filter(*p, i)) candidates.push_back(i);
    }
    const std::size_t n = std::min(probe_count, candidates.size());
    for (std::size_t k = 0; k < n; ++k) {
      // sample without replacement
      const std::size_t j = k + rng.uniform_index(candidates.size() - k);
      std::swap(candidates[k], candidates[j]);
      const std::size_t idx = candidates[k];

      const double original = p->value[idx];
      p->value[idx] = original + kGradcheckStep;
      const double up = eval();
      p->value[idx] = original - kGradcheckStep;
      const double down = eval();
      p->value[idx] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: non-finite loss while probing '" +
                           p->name + "' entry " + std::to_string(idx));
      }
      const double numeric = (up - down) / (2.0 * kGradcheckStep);
      const double analytic = p->gradient[idx];
      const double rel = gradcheck_relative_error(analytic, numeric);
      ++entry.probes;
      if (rel >= entry.max_relative_error) {
        entry.max_relative_error = rel;
        entry.worst_analytic = analytic;
        entry.worst_numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace monoelastic

#endif  // MONOELASTIC_GRADCHECK_HPP_
