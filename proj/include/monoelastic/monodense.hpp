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

#ifndef MONOELASTIC_MONODENSE_HPP_
#define MONOELASTIC_MONODENSE_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "monoelastic/errors.hpp"
#include "monoelastic/random.hpp"
#include "monoelastic/tape.hpp"
#include "monoelastic/tensor.hpp"

namespace monoelastic {

// Zero-centred, monotone increasing, convex base activations.
enum class BaseActivation { kRelu, kElu, kSelu };

inline std::string to_string(BaseActivation a) {
  switch (a) {
    case BaseActivation::kRelu: return "relu";
    case BaseActivation::kElu: return "elu";
    case BaseActivation::kSelu: return "selu";
  }
  return "relu";
}

inline BaseActivation parse_base_activation(const std::string& name) {
  if (name == "relu") return BaseActivation::kRelu;
  if (name == "elu") return BaseActivation::kElu;
  if (name == "selu") return BaseActivation::kSelu;
  throw ConfigError("unknown activation '" + name + "' (expected relu, elu or selu)");
}

namespace activation {

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline double base(double x, BaseActivation rho) {
  switch (rho) {
    case BaseActivation::kRelu: return x > 0.0 ? x : 0.0;
    case BaseActivation::kElu: return x > 0.0 ? x : std::expm1(x);
    case BaseActivation::kSelu:
      return kSeluLambda * (x > 0.0 ? x : kSeluAlpha * std::expm1(x));
  }
  return 0.0;
}

inline double base_derivative(double x, BaseActivation rho) {
  switch (rho) {
    case BaseActivation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case BaseActivation::kElu: return x > 0.0 ? 1.0 : std::exp(x);
    case BaseActivation::kSelu:
      return kSeluLambda * (x > 0.0 ? 1.0 : kSeluAlpha * std::exp(x));
  }
  return 0.0;
}

// Concave, upper-bounded mirror of the base activation: -rho(-x).
inline double concave(double x, BaseActivation rho) { return -base(-x, rho); }

inline double concave_derivative(double x, BaseActivation rho) {
  return base_derivative(-x, rho);
}

// Saturating piecewise blend of the convex and concave variants; continuous
// at 0 and bounded on both sides.
inline double bounded(double x, BaseActivation rho) {
  const double rho1 = base(1.0, rho);
  if (x < 0.0) return base(x + 1.0, rho) - rho1;
  return concave(x - 1.0, rho) + rho1;
}

inline double bounded_derivative(double x, BaseActivation rho) {
  if (x < 0.0) return base_derivative(x + 1.0, rho);
  return concave_derivative(x - 1.0, rho);
}

}  // namespace activation

// Per-input-feature monotonic direction: +1 increasing, -1 decreasing, 0 free.
class MonotonicityIndicator {
 public:
  MonotonicityIndicator() = default;
  explicit MonotonicityIndicator(std::vector<int> t) : t_(std::move(t)) {
    for (int v : t_) {
      if (v < -1 || v > 1) {
        throw ConfigError("monotonicity indicator entries must be -1, 0 or +1, got " +
                          std::to_string(v));
      }
    }
  }
  static MonotonicityIndicator filled(std::size_t n, int v) {
    return MonotonicityIndicator(std::vector<int>(n, v));
  }

  std::size_t size() const { return t_.size(); }
  int operator[](std::size_t i) const { return t_[i]; }
  const std::vector<int>& values() const { return t_; }

  friend bool operator==(const MonotonicityIndicator&,
                         const MonotonicityIndicator&) = default;

 private:
  std::vector<int> t_;
};

inline double effective_weight(double raw, int indicator) {
  if (indicator > 0) return std::abs(raw);
  if (indicator < 0) return -std::abs(raw);
  return raw;
}

enum class ActivationKind { kConvex, kConcave, kBounded };

// Share of a layer's neurons given to each activation variant, as integer
// parts of a common total. Concave and bounded subsets get floor(share *
// width); the convex subset absorbs the remainder.
struct ActivationSplit {
  int convex_parts = 7;
  int concave_parts = 7;
  int bounded_parts = 2;

  void validate() const {
    if (convex_parts < 0 || concave_parts < 0 || bounded_parts < 0 ||
        convex_parts + concave_parts + bounded_parts <= 0) {
      throw ConfigError("activation split parts must be non-negative with a positive total");
    }
  }
  int total() const { return convex_parts + concave_parts + bounded_parts; }

  // Neuron order: convex block, concave block, bounded block.
  std::vector<ActivationKind> assign(std::size_t width) const {
    validate();
    const auto t = static_cast<std::size_t>(total());
    const std::size_t concave = width * static_cast<std::size_t>(concave_parts) / t;
    const std::size_t bounded = width * static_cast<std::size_t>(bounded_parts) / t;
    const std::size_t convex = width - concave - bounded;
    std::vector<ActivationKind> kinds;
    kinds.reserve(width);
    kinds.insert(kinds.end(), convex, ActivationKind::kConvex);
    kinds.insert(kinds.end(), concave, ActivationKind::kConcave);
    kinds.insert(kinds.end(), bounded, ActivationKind::kBounded);
    return kinds;
  }

  friend bool operator==(const ActivationSplit&, const ActivationSplit&) = default;
};

inline double apply_activation(ActivationKind kind, double x, BaseActivation rho) {
  switch (kind) {
    case ActivationKind::kConvex: return activation::base(x, rho);
    case ActivationKind::kConcave: return activation::concave(x, rho);
    case ActivationKind::kBounded: return activation::bounded(x, rho);
  }
  return 0.0;
}

inline double apply_activation_derivative(ActivationKind kind, double x,
                                          BaseActivation rho) {
  switch (kind) {
    case ActivationKind::kConvex: return activation::base_derivative(x, rho);
    case ActivationKind::kConcave: return activation::concave_derivative(x, rho);
    case ActivationKind::kBounded: return activation::bounded_derivative(x, rho);
  }
  return 0.0;
}

// Glorot-uniform draw that never returns exactly zero (|w| has no useful
// gradient there).
inline Tensor2 glorot_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor2 w(in, out);
  for (double& v : w.data()) {
    do {
      v = rng.uniform(-a, a);
    } while (v == 0.0);
  }
  return w;
}

// Dense layer whose effective weights obey a monotonicity indicator on its
// inputs, followed by the convex/concave/bounded activation split.
class MonoDenseLayer {
 public:
  MonoDenseLayer() = default;
  MonoDenseLayer(const std::string& name, MonotonicityIndicator indicator,
                 std::size_t out_width, ActivationSplit split,
                 BaseActivation rho, Rng& rng)
      : raw_weights_(name + ".w", glorot_uniform(indicator.size(), out_width, rng)),
        bias_(name + ".b", Tensor2(1, out_width)),
        indicator_(std::move(indicator)),
        split_(split),
        rho_(rho),
        kinds_(split.assign(out_width)) {
    if (out_width == 0 || indicator_.size() == 0) {
      throw ConfigError("monodense layer '" + name + "' needs positive widths");
    }
  }

  std::size_t in_width() const { return indicator_.size(); }
  std::size_t out_width() const { return kinds_.size(); }
  const MonotonicityIndicator& indicator() const { return indicator_; }
  const ActivationSplit& split() const { return split_; }
  BaseActivation base_activation() const { return rho_; }
  const std::vector<ActivationKind>& kinds() const { return kinds_; }

  Parameter& raw_weights() { return raw_weights_; }
  const Parameter& raw_weights() const { return raw_weights_; }
  Parameter& bias() { return bias_; }
  const Parameter& bias() const { return bias_; }

  Tensor2 effective_weights() const {
    Tensor2 w = raw_weights_.value;
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (double& v : w.row(r)) v = effective_weight(v, indicator_[r]);
    }
    return w;
  }

  // Pre-activation z = x * W_eff + b.
  Var pre_activation(Tape& tape, Var x) { return pre_activation_impl(*this, tape, x); }
  Var pre_activation(Tape& tape, Var x) const {
    return pre_activation_impl(*this, tape, x);
  }

  // Non-const overloads record gradients into the layer's parameters; const
  // overloads are inference-only.
  Var forward(Tape& tape, Var x) { return forward_impl(*this, tape, x); }
  Var forward(Tape& tape, Var x) const { return forward_impl(*this, tape, x); }

 private:
  Parameter raw_weights_;
  Parameter bias_;
  MonotonicityIndicator indicator_;
  ActivationSplit split_;
  BaseActivation rho_ = BaseActivation::kRelu;
  std::vector<ActivationKind> kinds_;

  template <typename Self>
  static Var pre_activation_impl(Self& self, Tape& tape, Var x) {
    if (tape.value(x).cols() != self.in_width()) {
      throw DimensionError("monodense input width " +
                           std::to_string(tape.value(x).cols()) +
                           " does not match indicator length " +
                           std::to_string(self.in_width()));
    }
    Var w = tape.signed_abs(tape.parameter(self.raw_weights_),
                            self.indicator_.values());
    return tape.add_bias(tape.matmul(x, w), tape.parameter(self.bias_));
  }

  template <typename Self>
  static Var forward_impl(Self& self, Tape& tape, Var x) {
    Var z = pre_activation_impl(self, tape, x);
    const auto* kinds = &self.kinds_;
    const BaseActivation rho = self.rho_;
    return tape.map_columns(
        z,
        [kinds, rho](std::size_t c, double v) {
          return apply_activation((*kinds)[c], v, rho);
        },
        [kinds, rho](std::size_t c, double v) {
          return apply_activation_derivative((*kinds)[c], v, rho);
        });
  }
};

// Plain affine layer with optional relu.
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weights_(name + ".w", glorot_uniform(in, out, rng)),
        bias_(name + ".b", Tensor2(1, out)) {
    if (in == 0 || out == 0) {
      throw ConfigError("dense layer '" + name + "' needs positive widths");
    }
  }

  std::size_t in_width() const { return weights_.value.rows(); }
  std::size_t out_width() const { return weights_.value.cols(); }
  Parameter& weights() { return weights_; }
  const Parameter& weights() const { return weights_; }
  Parameter& bias() { return bias_; }
  const Parameter& bias() const { return bias_; }

  Var forward(Tape& tape, Var x, bool apply_relu) {
    return forward_impl(*this, tape, x, apply_relu);
  }
  Var forward(Tape& tape, Var x, bool apply_relu) const {
    return forward_impl(*this, tape, x, apply_relu);
  }

 private:
  Parameter weights_;
  Parameter bias_;

  template <typename Self>
  static Var forward_impl(Self& self, Tape& tape, Var x, bool apply_relu) {
    Var z = tape.add_bias(tape.matmul(x, tape.parameter(self.weights_)),
                          tape.parameter(self.bias_));
    return apply_relu ? tape.relu(z) : z;
  }
};

}  // namespace monoelastic

#endif  // MONOELASTIC_MONODENSE_HPP_
