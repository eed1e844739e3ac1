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

#ifndef MONOELASTIC_TAPE_HPP_
#define MONOELASTIC_TAPE_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monoelastic/errors.hpp"
#include "monoelastic/tensor.hpp"

namespace monoelastic {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Define-by-run reverse-mode tape. Each op appends a node holding its forward
// value and a backward rule; backward() replays the rules in reverse creation
// order. Nodes only reference earlier nodes, so the graph is acyclic by
// construction. A tape is meant to live for one batch on one thread.
class Tape {
 public:
  using ColumnFn = std::function<double(std::size_t col, double x)>;

  Tape() { nodes_.reserve(64); }

  Var constant(Tensor2 value) { return push(std::move(value), nullptr); }

  // Leaf referencing a parameter's storage; backward() accumulates into
  // param.gradient. The parameter must outlive the tape and stay unmodified
  // while the tape is in use.
  Var parameter(Parameter& p) {
    Var v = push(Tensor2(), nullptr);
    nodes_[v.id].external = &p.value;
    nodes_[v.id].param = &p;
    return v;
  }

  // Read-only leaf: no gradient is written back. Used for inference on const
  // models.
  Var parameter(const Parameter& p) {
    Var v = push(Tensor2(), nullptr);
    nodes_[v.id].external = &p.value;
    return v;
  }

  const Tensor2& value(Var v) const { return nodes_.at(v.id).get(); }
  // Gradient of the last backward() output with respect to v.
  const Tensor2& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    Tensor2 out = kernels::matmul(value(a), value(b));
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      kernels::add_matmul_bt(g, t.value(b), t.grad_for(a));
      kernels::add_matmul_at(t.value(a), g, t.grad_for(b));
    });
  }

  // x (BxN) + bias (1xN) broadcast over rows.
  Var add_bias(Var x, Var bias) {
    const Tensor2& xv = value(x);
    const Tensor2& bv = value(bias);
    if (bv.rows() != 1 || bv.cols() != xv.cols()) {
      throw DimensionError("bias shape " + bv.shape() +
                           " does not broadcast over " + xv.shape());
    }
    Tensor2 out = xv;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < out.cols(); ++c) row[c] += bv[c];
    }
    return push(std::move(out), [x, bias](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      Tensor2& gx = t.grad_for(x);
      Tensor2& gb = t.grad_for(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          gx(r, c) += g(r, c);
          gb[c] += g(r, c);
        }
      }
    });
  }

  Var add(Var a, Var b) {
    const Tensor2& av = value(a);
    const Tensor2& bv = value(b);
    if (!av.same_shape(bv)) {
      throw DimensionError("add shape mismatch: " + av.shape() + " vs " +
                           bv.shape());
    }
    Tensor2 out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      Tensor2& ga = t.grad_for(a);
      Tensor2& gb = t.grad_for(b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }

  Var scale(Var x, double factor) {
    Tensor2 out = value(x);
    for (double& v : out.data()) v *= factor;
    return push(std::move(out), [x, factor](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      Tensor2& gx = t.grad_for(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
  }

  // 1x1 sum of all entries.
  Var sum(Var x) {
    double s = 0.0;
    for (double v : value(x).data()) s += v;
    return push(Tensor2(1, 1, s), [x](Tape& t, std::size_t self) {
      const double g = t.nodes_[self].grad[0];
      for (double& v : t.grad_for(x).data()) v += g;
    });
  }

  // 1x1 sum of squared entries (L2 penalty building block).
  Var sum_squares(Var x) {
    double s = 0.0;
    for (double v : value(x).data()) s += v * v;
    return push(Tensor2(1, 1, s), [x](Tape& t, std::size_t self) {
      const double g = t.nodes_[self].grad[0];
      const Tensor2& xv = t.value(x);
      Tensor2& gx = t.grad_for(x);
      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * g;
    });
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) {
        throw DimensionError("concat row mismatch: " + value(parts[0]).shape() +
                             " vs " + value(p).shape());
      }
      cols += value(p).cols();
    }
    Tensor2 out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
      const Tensor2& pv = value(p);
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(pv.row(r).begin(), pv.row(r).end(),
                  out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
      }
      offset += pv.cols();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push(std::move(out), [inputs](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      std::size_t off = 0;
      for (Var p : inputs) {
        Tensor2& gp = t.grad_for(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, off + c);
        }
        off += gp.cols();
      }
    });
  }

  Var relu(Var x) {
    Tensor2 out = value(x);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), [x](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      const Tensor2& xv = t.value(x);
      Tensor2& gx = t.grad_for(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    });
  }

  // Elementwise map whose function may depend on the column; used for the
  // mixed activation subsets of monotone layers.
  Var map_columns(Var x, ColumnFn f, ColumnFn df) {
    Tensor2 out = value(x);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < out.cols(); ++c) row[c] = f(c, row[c]);
    }
    return push(std::move(out), [x, df = std::move(df)](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      const Tensor2& xv = t.value(x);
      Tensor2& gx = t.grad_for(x);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          gx(r, c) += g(r, c) * df(c, xv(r, c));
        }
      }
    });
  }

  // Row gather from an embedding table; backward scatter-adds into the table.
  Var embedding(Var tv, std::span<const std::size_t> indices,
                const std::string& table_name = "embedding") {
    const Tensor2& tab = value(tv);
    for (std::size_t idx : indices) {
      if (idx >= tab.rows()) {
        throw LookupError("embedding index " + std::to_string(idx) +
                          " out of range for table '" + table_name + "' with " +
                          std::to_string(tab.rows()) + " rows");
      }
    }
    Tensor2 out(indices.size(), tab.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      auto src = tab.row(indices[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return push(std::move(out), [tv, idx = std::move(idx)](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      Tensor2& gt = t.grad_for(tv);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        auto dst = gt.row(idx[r]);
        auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
      }
    });
  }

  // Independent width-k affine map per input column:
  //   out[:, f*k + j] = x[:, f] * w(f, j) + b[f*k + j]
  Var featurewise_dense(Var x, Var w, Var b) {
    const Tensor2& xv = value(x);
    const Tensor2& wv = value(w);
    const Tensor2& bv = value(b);
    const std::size_t features = wv.rows();
    const std::size_t k = wv.cols();
    if (xv.cols() != features || bv.rows() != 1 || bv.cols() != features * k) {
      throw DimensionError("featurewise dense mismatch: x " + xv.shape() +
                           ", w " + wv.shape() + ", b " + bv.shape());
    }
    Tensor2 out(xv.rows(), features * k);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      for (std::size_t f = 0; f < features; ++f) {
        for (std::size_t j = 0; j < k; ++j) {
          out(r, f * k + j) = xv(r, f) * wv(f, j) + bv[f * k + j];
        }
      }
    }
    return push(std::move(out), [x, w, b, features, k](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      const Tensor2& xv = t.value(x);
      const Tensor2& wv = t.value(w);
      Tensor2& gx = t.grad_for(x);
      Tensor2& gw = t.grad_for(w);
      Tensor2& gb = t.grad_for(b);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t f = 0; f < features; ++f) {
          for (std::size_t j = 0; j < k; ++j) {
            const double gv = g(r, f * k + j);
            gx(r, f) += gv * wv(f, j);
            gw(f, j) += gv * xv(r, f);
            gb[f * k + j] += gv;
          }
        }
      }
    });
  }

  // Sign reparameterization applied per input row: +1 -> |w|, -1 -> -|w|,
  // 0 -> w. d|w|/dw is taken as 0 at w == 0.
  Var signed_abs(Var w, std::span<const int> row_signs) {
    const Tensor2& wv = value(w);
    if (row_signs.size() != wv.rows()) {
      throw DimensionError("indicator length " + std::to_string(row_signs.size()) +
                           " does not match weight rows " + wv.shape());
    }
    Tensor2 out = wv;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const int s = row_signs[r];
      if (s == 0) continue;
      for (double& v : out.row(r)) v = s > 0 ? std::abs(v) : -std::abs(v);
    }
    std::vector<int> signs(row_signs.begin(), row_signs.end());
    return push(std::move(out), [w, signs = std::move(signs)](Tape& t, std::size_t self) {
      const Tensor2& g = t.nodes_[self].grad;
      const Tensor2& wv = t.value(w);
      Tensor2& gw = t.grad_for(w);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const int s = signs[r];
        for (std::size_t c = 0; c < g.cols(); ++c) {
          double d = 1.0;
          if (s != 0) {
            const double raw = wv(r, c);
            const double sgn = raw > 0.0 ? 1.0 : (raw < 0.0 ? -1.0 : 0.0);
            d = s > 0 ? sgn : -sgn;
          }
          gw(r, c) += g(r, c) * d;
        }
      }
    });
  }

  // Mean squared error, 1x1. Gradient 2(pred - target)/N flows to both sides.
  Var mse(Var pred, Var target) {
    const Tensor2& pv = value(pred);
    const Tensor2& tv = value(target);
    if (!pv.same_shape(tv)) {
      throw DimensionError("mse shape mismatch: " + pv.shape() + " vs " +
                           tv.shape());
    }
    if (pv.empty()) throw DimensionError("mse over zero elements");
    double s = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = pv[i] - tv[i];
      s += d * d;
    }
    const double n = static_cast<double>(pv.size());
    return push(Tensor2(1, 1, s / n), [pred, target, n](Tape& t, std::size_t self) {
      const double g = t.nodes_[self].grad[0];
      const Tensor2& pv = t.value(pred);
      const Tensor2& tv = t.value(target);
      Tensor2& gp = t.grad_for(pred);
      Tensor2& gt = t.grad_for(target);
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = 2.0 * (pv[i] - tv[i]) / n * g;
        gp[i] += d;
        gt[i] -= d;
      }
    });
  }

  // Reverse sweep from a 1x1 output. Node gradients are reset first; parameter
  // gradients are accumulated (never reset) so repeated calls add up.
  void backward(Var out) {
    if (value(out).size() != 1) {
      throw DimensionError("backward requires a scalar output, got " +
                           value(out).shape());
    }
    for (Node& n : nodes_) n.grad = Tensor2();

    grad_for(out)[0] = 1.0;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backprop) n.backprop(*this, i);
      if (n.param != nullptr) {
        Tensor2& pg = n.param->gradient;
        if (!pg.same_shape(n.param->value)) n.param->zero_grad();
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
    }
  }

 private:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor2 value;
    Tensor2 grad;
    Backprop backprop;
    const Tensor2* external = nullptr;
    Parameter* param = nullptr;

    const Tensor2& get() const { return external != nullptr ? *external : value; }
  };

  Var push(Tensor2 value, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Tensor2(), std::move(backprop)});
    return Var{nodes_.size() - 1};
  }

  Tensor2& grad_for(Var v) {
    Node& n = nodes_[v.id];
    const Tensor2& val = n.get();
    if (n.grad.empty() && !val.empty()) n.grad = Tensor2(val.rows(), val.cols());
    return n.grad;
  }

  std::vector<Node> nodes_;
};

}  // namespace monoelastic

#endif  // MONOELASTIC_TAPE_HPP_
