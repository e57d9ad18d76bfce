#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/error.h"
#include "core/rng.h"
#include "core/tensor.h"

namespace refbase {

// Reverse-mode tape over dense tensors. Ops execute eagerly and append a
// node whose backward closure accumulates into the gradients of its inputs.
// Node creation order is a topological order, so walking the node list in
// reverse is exact reverse-topological replay. Gradients accumulate
// additively across uses of the same node.
//
// Reductions use a fixed summation order, so results are bit-stable for a
// given build. A tape is single-owner; independent tapes may run on
// separate threads.
template <typename T>
class Tape {
 public:
  using Id = int32_t;

  template <typename S>
  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<EMat<T>>;
  using CMap = Eigen::Map<const EMat<T>>;

  explicit Tape(bool finite_checks = true) : finite_checks_(finite_checks) {}

  // Differentiable leaf (parameters, perturbed inputs).
  Id input(Tensor<T> t) { return push("input", std::move(t), true, nullptr); }

  // Non-differentiable leaf (rope tables, masks, fixed data).
  Id constant(Tensor<T> t) { return push("constant", std::move(t), false, nullptr); }

  const Tensor<T>& value(Id id) const { return nodes_[check(id)].value; }

  bool has_grad(Id id) const { return !grads_[check(id)].empty(); }

  const std::vector<T>& grad(Id id) const {
    if (!has_grad(id))
      throw Error("grad: node " + std::to_string(id) + " has no gradient (run backward first)");
    return grads_[static_cast<size_t>(id)];
  }

  size_t node_count() const { return nodes_.size(); }

  // ---------------------------------------------------------------- add/mul

  // Elementwise add. `b` may equal `a`'s shape or any trailing suffix of it
  // (bias over leading batch dims). All other mismatches are errors.
  Id add(Id a, Id b) { return binary_elementwise("add", a, b, false); }

  // Elementwise multiply with the same trailing-broadcast rule.
  Id mul(Id a, Id b) { return binary_elementwise("mul", a, b, true); }

  Id scale(Id a, T c) {
    const Tensor<T>& x = value(a);
    Tensor<T> out(x.shape());
    const T* xp = x.data();
    T* op = out.mutable_data();
    for (int64_t i = 0; i < x.size(); ++i) op[i] = xp[i] * c;
    return push("scale", std::move(out), needs_grad(a),
                [a, c](Tape& t, Id self) {
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  if (!t.needs_grad(a)) return;
                  std::vector<T>& ga = t.grad_buf(a);
                  for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                });
  }

  // ---------------------------------------------------------------- matmul

  // (..., m, k) @ (..., k, n) with identical leading dims, or a 2-D rhs
  // applied to any lhs (leading dims flattened as batch).
  Id matmul(Id a, Id b) {
    const Tensor<T>& x = value(a);
    const Tensor<T>& y = value(b);
    if (x.rank() < 2 || y.rank() < 2)
      throw ShapeError("matmul: ranks " + shape_str(x.shape()) + " @ " + shape_str(y.shape()));
    const int64_t m = x.dim(x.rank() - 2), k = x.dim(x.rank() - 1);
    const int64_t k2 = y.dim(y.rank() - 2), n = y.dim(y.rank() - 1);
    bool rhs2d = y.rank() == 2;
    int64_t batch = 1;
    if (rhs2d) {
      batch = x.size() / (m * k);
    } else {
      if (x.rank() != y.rank())
        throw ShapeError("matmul: rank mismatch " + shape_str(x.shape()) + " @ " + shape_str(y.shape()));
      for (int i = 0; i + 2 < x.rank(); ++i) {
        if (x.dim(i) != y.dim(i))
          throw ShapeError("matmul: batch dims differ " + shape_str(x.shape()) + " @ " + shape_str(y.shape()));
        batch *= x.dim(i);
      }
    }
    if (k != k2)
      throw ShapeError("matmul: inner dims differ " + shape_str(x.shape()) + " @ " + shape_str(y.shape()));

    Shape out_shape(x.shape());
    out_shape.back() = n;
    Tensor<T> out(out_shape);
    if (rhs2d) {
      CMap xm(x.data(), batch * m, k);
      CMap ym(y.data(), k, n);
      Map om(out.mutable_data(), batch * m, n);
      om.noalias() = xm * ym;
    } else {
      for (int64_t bi = 0; bi < batch; ++bi) {
        CMap xm(x.data() + bi * m * k, m, k);
        CMap ym(y.data() + bi * k * n, k, n);
        Map om(out.mutable_data() + bi * m * n, m, n);
        om.noalias() = xm * ym;
      }
    }
    return push("matmul", std::move(out), needs_grad(a) || needs_grad(b),
                [a, b, m, k, n, batch, rhs2d](Tape& t, Id self) {
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  const Tensor<T>& x = t.value(a);
                  const Tensor<T>& y = t.value(b);
                  if (rhs2d) {
                    CMap gm(g.data(), batch * m, n);
                    if (t.needs_grad(a)) {
                      Map ga(t.grad_buf(a).data(), batch * m, k);
                      CMap ym(y.data(), k, n);
                      ga.noalias() += gm * ym.transpose();
                    }
                    if (t.needs_grad(b)) {
                      Map gb(t.grad_buf(b).data(), k, n);
                      CMap xm(x.data(), batch * m, k);
                      gb.noalias() += xm.transpose() * gm;
                    }
                  } else {
                    for (int64_t bi = 0; bi < batch; ++bi) {
                      CMap gm(g.data() + bi * m * n, m, n);
                      if (t.needs_grad(a)) {
                        Map ga(t.grad_buf(a).data() + bi * m * k, m, k);
                        CMap ym(y.data() + bi * k * n, k, n);
                        ga.noalias() += gm * ym.transpose();
                      }
                      if (t.needs_grad(b)) {
                        Map gb(t.grad_buf(b).data() + bi * k * n, k, n);
                        CMap xm(x.data() + bi * m * k, m, k);
                        gb.noalias() += xm.transpose() * gm;
                      }
                    }
                  }
                });
  }

  // ------------------------------------------------------- layout changes

  Id reshape(Id a, Shape shape) {
    const Tensor<T>& x = value(a);
    if (shape_numel(shape) != x.size())
      throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    Tensor<T> out(shape, x.vec());
    return push("reshape", std::move(out), needs_grad(a),
                [a](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& ga = t.grad_buf(a);
                  for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                });
  }

  // Swap two axes.
  Id transpose(Id a, int ax0, int ax1) {
    const Tensor<T>& x = value(a);
    const int r = x.rank();
    if (ax0 < 0) ax0 += r;
    if (ax1 < 0) ax1 += r;
    if (ax0 < 0 || ax0 >= r || ax1 < 0 || ax1 >= r)
      throw ShapeError("transpose: axes out of range for " + shape_str(x.shape()));
    std::vector<int> perm(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) perm[static_cast<size_t>(i)] = i;
    std::swap(perm[static_cast<size_t>(ax0)], perm[static_cast<size_t>(ax1)]);
    Tensor<T> out = permute_copy(x, perm);
    return push("transpose", std::move(out), needs_grad(a),
                [a, perm](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  // swapping two axes is its own inverse
                  Tensor<T> g(t.nodes_[static_cast<size_t>(self)].value.shape(),
                              t.grads_[static_cast<size_t>(self)]);
                  Tensor<T> gx = permute_copy(g, perm);
                  std::vector<T>& ga = t.grad_buf(a);
                  const T* gp = gx.data();
                  for (size_t i = 0; i < ga.size(); ++i) ga[i] += gp[i];
                });
  }

  Id slice(Id a, int axis, int64_t begin, int64_t end) {
    const Tensor<T>& x = value(a);
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r || begin < 0 || end > x.dim(axis) || begin >= end)
      throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
    auto [outer, n, inner] = axis_split(x.shape(), axis);
    Shape out_shape(x.shape());
    out_shape[static_cast<size_t>(axis)] = end - begin;
    Tensor<T> out(out_shape);
    const T* xp = x.data();
    T* op = out.mutable_data();
    const int64_t len = end - begin;
    for (int64_t o = 0; o < outer; ++o)
      std::copy(xp + (o * n + begin) * inner, xp + (o * n + end) * inner,
                op + o * len * inner);
    return push("slice", std::move(out), needs_grad(a),
                [a, axis, begin, len](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const Tensor<T>& x = t.value(a);
                  auto [outer, n, inner] = axis_split(x.shape(), axis);
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& ga = t.grad_buf(a);
                  for (int64_t o = 0; o < outer; ++o) {
                    const T* gp = g.data() + o * len * inner;
                    T* gap = ga.data() + (o * n + begin) * inner;
                    for (int64_t i = 0; i < len * inner; ++i) gap[i] += gp[i];
                  }
                });
  }

  Id concat(const std::vector<Id>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Tensor<T>& first = value(parts[0]);
    const int r = first.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
      throw ShapeError("concat: axis out of range for " + shape_str(first.shape()));
    int64_t total = 0;
    bool grad = false;
    for (Id p : parts) {
      const Tensor<T>& t = value(p);
      if (t.rank() != r)
        throw ShapeError("concat: rank mismatch " + shape_str(t.shape()));
      for (int i = 0; i < r; ++i)
        if (i != axis && t.dim(i) != first.dim(i))
          throw ShapeError("concat: shapes " + shape_str(first.shape()) + " vs " + shape_str(t.shape()));
      total += t.dim(axis);
      grad = grad || needs_grad(p);
    }
    Shape out_shape(first.shape());
    out_shape[static_cast<size_t>(axis)] = total;
    Tensor<T> out(out_shape);
    auto [outer, n, inner] = axis_split(out_shape, axis);
    int64_t offset = 0;
    std::vector<int64_t> offsets;
    for (Id p : parts) {
      const Tensor<T>& t = value(p);
      const int64_t len = t.dim(axis);
      offsets.push_back(offset);
      const T* tp = t.data();
      T* op = out.mutable_data();
      for (int64_t o = 0; o < outer; ++o)
        std::copy(tp + o * len * inner, tp + (o + 1) * len * inner,
                  op + (o * n + offset) * inner);
      offset += len;
    }
    std::vector<Id> parts_copy(parts);
    return push("concat", std::move(out), grad,
                [parts_copy, offsets, axis](Tape& t, Id self) {
                  const Tensor<T>& out = t.nodes_[static_cast<size_t>(self)].value;
                  auto [outer, n, inner] = axis_split(out.shape(), axis);
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  for (size_t pi = 0; pi < parts_copy.size(); ++pi) {
                    const Id p = parts_copy[pi];
                    if (!t.needs_grad(p)) continue;
                    const int64_t len = t.value(p).dim(axis);
                    const int64_t off = offsets[pi];
                    std::vector<T>& gp = t.grad_buf(p);
                    for (int64_t o = 0; o < outer; ++o) {
                      const T* gs = g.data() + (o * n + off) * inner;
                      T* gd = gp.data() + o * len * inner;
                      for (int64_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
                    }
                  }
                });
  }

  // ------------------------------------------------------------ nonlinear

  Id silu(Id a) {
    const Tensor<T>& x = value(a);
    Tensor<T> out(x.shape());
    const T* xp = x.data();
    T* op = out.mutable_data();
    for (int64_t i = 0; i < x.size(); ++i) op[i] = xp[i] * sigmoid(xp[i]);
    return push("silu", std::move(out), needs_grad(a),
                [a](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  const T* xp = t.value(a).data();
                  std::vector<T>& ga = t.grad_buf(a);
                  for (size_t i = 0; i < g.size(); ++i) {
                    const T s = sigmoid(xp[i]);
                    ga[i] += g[i] * (s + xp[i] * s * (T(1) - s));
                  }
                });
  }

  Id softmax(Id a, int axis) {
    const Tensor<T>& x = value(a);
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
      throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    auto [outer, n, inner] = axis_split(x.shape(), axis);
    Tensor<T> out(x.shape());
    const T* xp = x.data();
    T* op = out.mutable_data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t base = o * n * inner + i;
        T m = xp[base];
        for (int64_t j = 1; j < n; ++j) m = std::max(m, xp[base + j * inner]);
        double z = 0;
        for (int64_t j = 0; j < n; ++j) {
          const T e = std::exp(xp[base + j * inner] - m);
          op[base + j * inner] = e;
          z += static_cast<double>(e);
        }
        const T inv = static_cast<T>(1.0 / z);
        for (int64_t j = 0; j < n; ++j) op[base + j * inner] *= inv;
      }
    }
    return push("softmax", std::move(out), needs_grad(a),
                [a, axis](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const Tensor<T>& p = t.nodes_[static_cast<size_t>(self)].value;
                  auto [outer, n, inner] = axis_split(p.shape(), axis);
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& ga = t.grad_buf(a);
                  const T* pp = p.data();
                  for (int64_t o = 0; o < outer; ++o) {
                    for (int64_t i = 0; i < inner; ++i) {
                      const int64_t base = o * n * inner + i;
                      double dot = 0;
                      for (int64_t j = 0; j < n; ++j)
                        dot += static_cast<double>(g[base + j * inner]) * pp[base + j * inner];
                      for (int64_t j = 0; j < n; ++j) {
                        const int64_t k = base + j * inner;
                        ga[k] += pp[k] * (g[k] - static_cast<T>(dot));
                      }
                    }
                  }
                });
  }

  // y = x / sqrt(mean(x^2, axis) + eps). The eps floor keeps zero vectors at
  // zero instead of faulting.
  Id rms_normalize(Id a, int axis, T eps) {
    if (!(eps > T(0))) throw ConfigError("rms_normalize: eps must be > 0");
    const Tensor<T>& x = value(a);
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
      throw ShapeError("rms_normalize: axis out of range for " + shape_str(x.shape()));
    auto [outer, n, inner] = axis_split(x.shape(), axis);
    Tensor<T> out(x.shape());
    const T* xp = x.data();
    T* op = out.mutable_data();
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        const int64_t base = o * n * inner + i;
        double ms = 0;
        for (int64_t j = 0; j < n; ++j) {
          const double v = static_cast<double>(xp[base + j * inner]);
          ms += v * v;
        }
        const T rinv = static_cast<T>(1.0 / std::sqrt(ms / static_cast<double>(n) +
                                                      static_cast<double>(eps)));
        for (int64_t j = 0; j < n; ++j) op[base + j * inner] = xp[base + j * inner] * rinv;
      }
    }
    return push("rms_normalize", std::move(out), needs_grad(a),
                [a, axis, eps](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const Tensor<T>& x = t.value(a);
                  auto [outer, n, inner] = axis_split(x.shape(), axis);
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& ga = t.grad_buf(a);
                  const T* xp = x.data();
                  for (int64_t o = 0; o < outer; ++o) {
                    for (int64_t i = 0; i < inner; ++i) {
                      const int64_t base = o * n * inner + i;
                      double ms = 0, dot = 0;
                      for (int64_t j = 0; j < n; ++j) {
                        const int64_t k = base + j * inner;
                        const double v = static_cast<double>(xp[k]);
                        ms += v * v;
                        dot += static_cast<double>(g[k]) * v;
                      }
                      const double denom = ms / static_cast<double>(n) + static_cast<double>(eps);
                      const double rinv = 1.0 / std::sqrt(denom);
                      const double r3_over_n = rinv * rinv * rinv / static_cast<double>(n);
                      for (int64_t j = 0; j < n; ++j) {
                        const int64_t k = base + j * inner;
                        ga[k] += static_cast<T>(rinv * static_cast<double>(g[k]) -
                                                r3_over_n * dot * static_cast<double>(xp[k]));
                      }
                    }
                  }
                });
  }

  // Sets entries above the diagonal of the trailing (S, S) block to a large
  // negative value; softmax then assigns them exactly zero probability.
  Id causal_mask(Id a) {
    const Tensor<T>& x = value(a);
    if (x.rank() < 2 || x.dim(x.rank() - 1) != x.dim(x.rank() - 2))
      throw ShapeError("causal_mask: trailing dims must be square, got " + shape_str(x.shape()));
    const int64_t s = x.dim(x.rank() - 1);
    const int64_t batch = x.size() / (s * s);
    Tensor<T> out(x.shape(), x.vec());
    T* op = out.mutable_data();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < s; ++i)
        for (int64_t j = i + 1; j < s; ++j) op[(b * s + i) * s + j] = masked_value();
    return push("causal_mask", std::move(out), needs_grad(a),
                [a, s, batch](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& ga = t.grad_buf(a);
                  for (int64_t b = 0; b < batch; ++b)
                    for (int64_t i = 0; i < s; ++i)
                      for (int64_t j = 0; j <= i; ++j) {
                        const int64_t k = (b * s + i) * s + j;
                        ga[k] += g[k];
                      }
                });
  }

  // Inverted dropout: kept entries scale by 1/(1-p). p == 0 is a no-op.
  Id dropout(Id a, double p, Rng& rng) {
    if (p <= 0) return a;
    if (p >= 1) throw ConfigError("dropout: p must be < 1");
    const Tensor<T>& x = value(a);
    auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(x.size()));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : *mask) m = rng.uniform() < p ? T(0) : keep_scale;
    Tensor<T> out(x.shape());
    const T* xp = x.data();
    T* op = out.mutable_data();
    for (int64_t i = 0; i < x.size(); ++i) op[i] = xp[i] * (*mask)[static_cast<size_t>(i)];
    return push("dropout", std::move(out), needs_grad(a),
                [a, mask](Tape& t, Id self) {
                  if (!t.needs_grad(a)) return;
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& ga = t.grad_buf(a);
                  for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
                });
  }

  // ------------------------------------------------------- token-indexed

  Id embedding_lookup(Id table, const TokenTensor& ids) {
    const Tensor<T>& w = value(table);
    if (w.rank() != 2)
      throw ShapeError("embedding_lookup: table must be 2-D, got " + shape_str(w.shape()));
    const int64_t vocab = w.dim(0), width = w.dim(1);
    for (size_t i = 0; i < ids.ids.size(); ++i)
      if (ids.ids[i] < 0 || ids.ids[i] >= vocab)
        throw DataError("embedding_lookup: token id " + std::to_string(ids.ids[i]) +
                        " at position " + std::to_string(i) + " out of range [0," +
                        std::to_string(vocab) + ")");
    Shape out_shape(ids.shape);
    out_shape.push_back(width);
    Tensor<T> out(out_shape);
    const T* wp = w.data();
    T* op = out.mutable_data();
    for (int64_t i = 0; i < ids.size(); ++i)
      std::copy(wp + ids.ids[static_cast<size_t>(i)] * width,
                wp + (ids.ids[static_cast<size_t>(i)] + 1) * width, op + i * width);
    auto ids_copy = std::make_shared<TokenTensor>(ids);
    return push("embedding_lookup", std::move(out), needs_grad(table),
                [table, ids_copy, width](Tape& t, Id self) {
                  if (!t.needs_grad(table)) return;
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  std::vector<T>& gw = t.grad_buf(table);
                  for (int64_t i = 0; i < ids_copy->size(); ++i) {
                    T* row = gw.data() + ids_copy->ids[static_cast<size_t>(i)] * width;
                    const T* gs = g.data() + i * width;
                    for (int64_t j = 0; j < width; ++j) row[j] += gs[j];
                  }
                });
  }

  // Mean next-token negative log-likelihood in nats over all rows.
  // logits: (..., V), targets: matching leading shape.
  Id cross_entropy(Id logits, const TokenTensor& targets) {
    const Tensor<T>& x = value(logits);
    if (x.rank() < 1) throw ShapeError("cross_entropy: logits must have a class axis");
    const int64_t v = x.dim(x.rank() - 1);
    const int64_t rows = x.size() / v;
    if (targets.size() != rows)
      throw ShapeError("cross_entropy: " + std::to_string(rows) + " logit rows vs " +
                       std::to_string(targets.size()) + " targets");
    for (size_t i = 0; i < targets.ids.size(); ++i)
      if (targets.ids[i] < 0 || targets.ids[i] >= v)
        throw DataError("cross_entropy: target id " + std::to_string(targets.ids[i]) +
                        " at row " + std::to_string(i) + " out of range [0," +
                        std::to_string(v) + ")");
    const T* xp = x.data();
    double total = 0;
    for (int64_t r = 0; r < rows; ++r) {
      const T* row = xp + r * v;
      T m = row[0];
      for (int64_t j = 1; j < v; ++j) m = std::max(m, row[j]);
      double z = 0;
      for (int64_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j] - m));
      const double lse = static_cast<double>(m) + std::log(z);
      total += lse - static_cast<double>(row[targets.ids[static_cast<size_t>(r)]]);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(rows)));
    auto tgt = std::make_shared<TokenTensor>(targets);
    return push("cross_entropy", std::move(out), needs_grad(logits),
                [logits, tgt, v, rows](Tape& t, Id self) {
                  if (!t.needs_grad(logits)) return;
                  const T g = t.grads_[static_cast<size_t>(self)][0];
                  const T* xp = t.value(logits).data();
                  std::vector<T>& gl = t.grad_buf(logits);
                  const T inv_rows = static_cast<T>(1.0 / static_cast<double>(rows));
                  for (int64_t r = 0; r < rows; ++r) {
                    const T* row = xp + r * v;
                    T* grow = gl.data() + r * v;
                    T m = row[0];
                    for (int64_t j = 1; j < v; ++j) m = std::max(m, row[j]);
                    double z = 0;
                    for (int64_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j] - m));
                    const double inv_z = 1.0 / z;
                    for (int64_t j = 0; j < v; ++j) {
                      T p = static_cast<T>(std::exp(static_cast<double>(row[j] - m)) * inv_z);
                      if (j == tgt->ids[static_cast<size_t>(r)]) p -= T(1);
                      grow[j] += g * p * inv_rows;
                    }
                  }
                });
  }

  // ------------------------------------------------------------- backward

  void backward(Id root) {
    const Tensor<T>& r = value(root);
    if (r.size() != 1)
      throw ShapeError("backward: root must be scalar, got " + shape_str(r.shape()));
    grad_buf(root)[0] = T(1);
    for (Id i = root; i >= 0; --i) {
      const Node& node = nodes_[static_cast<size_t>(i)];
      if (grads_[static_cast<size_t>(i)].empty() || !node.backward) continue;
      node.backward(*this, i);
      if (finite_checks_) {
        // a node's incoming grad is final once its backward has run
        for (T gv : grads_[static_cast<size_t>(i)])
          if (!std::isfinite(static_cast<double>(gv)))
            throw NumericFault("backward through '" + node.op + "': non-finite gradient");
      }
    }
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    bool needs_grad;
    std::function<void(Tape&, Id)> backward;
  };

  static T sigmoid(T x) {
    if (x >= T(0)) {
      const T e = std::exp(-x);
      return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  static constexpr T masked_value() { return T(-1e30); }

  // Decomposes shape around `axis` into (outer, n, inner) extents.
  static std::tuple<int64_t, int64_t, int64_t> axis_split(const Shape& s, int axis) {
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
    return {outer, s[static_cast<size_t>(axis)], inner};
  }

  static Tensor<T> permute_copy(const Tensor<T>& x, const std::vector<int>& perm) {
    const int r = x.rank();
    Shape out_shape(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<size_t>(i)] = x.dim(perm[static_cast<size_t>(i)]);
    Tensor<T> out(out_shape);
    std::vector<int64_t> in_strides(static_cast<size_t>(r), 1), out_strides(static_cast<size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) {
      in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i + 1)] * x.dim(i + 1);
      out_strides[static_cast<size_t>(i)] = out_strides[static_cast<size_t>(i + 1)] * out_shape[static_cast<size_t>(i + 1)];
    }
    const T* xp = x.data();
    T* op = out.mutable_data();
    // out dimension i walks input dimension perm[i]
    std::vector<int64_t> idx(static_cast<size_t>(r), 0);
    for (int64_t flat = 0; flat < x.size(); ++flat) {
      int64_t src = 0;
      for (int i = 0; i < r; ++i)
        src += idx[static_cast<size_t>(i)] * in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];
      op[flat] = xp[src];
      for (int i = r - 1; i >= 0; --i) {
        if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
        idx[static_cast<size_t>(i)] = 0;
      }
    }
    return out;
  }

  bool needs_grad(Id id) const { return nodes_[check(id)].needs_grad; }

  size_t check(Id id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
      throw Error("tape: invalid node id " + std::to_string(id));
    return static_cast<size_t>(id);
  }

  std::vector<T>& grad_buf(Id id) {
    auto& g = grads_[check(id)];
    if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(id)].value.size()), T(0));
    return g;
  }

  Id push(std::string op, Tensor<T> value, bool needs_grad,
          std::function<void(Tape&, Id)> backward) {
    if (finite_checks_) check_finite(op.c_str(), value);
    nodes_.push_back(Node{std::move(op), std::move(value), needs_grad, std::move(backward)});
    grads_.emplace_back();
    return static_cast<Id>(nodes_.size() - 1);
  }

  void check_finite(const char* op, const Tensor<T>& t) const {
    const T* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i)
      if (!std::isfinite(static_cast<double>(p[i])))
        throw NumericFault(std::string("op '") + op + "' produced a non-finite value");
  }

  Id binary_elementwise(const char* name, Id a, Id b, bool is_mul) {
    const Tensor<T>& x = value(a);
    const Tensor<T>& y = value(b);
    if (!is_trailing_shape(y.shape(), x.shape()))
      throw ShapeError(std::string(name) + ": shapes " + shape_str(x.shape()) +
                       " vs " + shape_str(y.shape()));
    const int64_t yn = y.size();
    Tensor<T> out(x.shape());
    const T* xp = x.data();
    const T* yp = y.data();
    T* op = out.mutable_data();
    if (is_mul)
      for (int64_t i = 0; i < x.size(); ++i) op[i] = xp[i] * yp[i % yn];
    else
      for (int64_t i = 0; i < x.size(); ++i) op[i] = xp[i] + yp[i % yn];
    return push(name, std::move(out), needs_grad(a) || needs_grad(b),
                [a, b, yn, is_mul](Tape& t, Id self) {
                  const std::vector<T>& g = t.grads_[static_cast<size_t>(self)];
                  const T* xp = t.value(a).data();
                  const T* yp = t.value(b).data();
                  if (t.needs_grad(a)) {
                    std::vector<T>& ga = t.grad_buf(a);
                    if (is_mul)
                      for (size_t i = 0; i < g.size(); ++i)
                        ga[i] += g[i] * yp[static_cast<int64_t>(i) % yn];
                    else
                      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (t.needs_grad(b)) {
                    std::vector<T>& gb = t.grad_buf(b);
                    if (is_mul)
                      for (size_t i = 0; i < g.size(); ++i)
                        gb[static_cast<size_t>(static_cast<int64_t>(i) % yn)] += g[i] * xp[i];
                    else
                      for (size_t i = 0; i < g.size(); ++i)
                        gb[static_cast<size_t>(static_cast<int64_t>(i) % yn)] += g[i];
                  }
                });
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool finite_checks_;
};

}  // namespace refbase
