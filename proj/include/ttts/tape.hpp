// Copyright 2026 The ttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/mat.hpp"

namespace ttts {

/// Named trainable tensor. `frozen` excludes it from gradient accumulation
/// and from optimizer updates while ops that read it keep propagating
/// sensitivities to their other inputs.
template <class S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  bool frozen = false;

  Param() = default;
  Param(std::string n, int r, int c) : name(std::move(n)), value(r, c), grad(r, c) {}

  void zero_grad() { grad.fill(S(0)); }
};

/// Reverse-mode tape over small dense tensors.
///
/// Values and gradients live in two parallel arenas whose capacity persists
/// across reset(), so a training step allocates almost nothing after warmup.
/// A node is referenced by index; indices are invalidated by reset().
/// backward() must be called at most once per built graph.
template <class S>
class Tape {
 public:
  using Ref = std::int32_t;

  // ---- leaves ------------------------------------------------------------

  Ref constant(int rows, int cols, const S* data) {
    Ref r = make_node(Op::kConst, rows, cols);
    std::memcpy(val(r), data, sizeof(S) * count(r));
    return r;
  }

  Ref constant(const Mat<S>& m) { return constant(m.rows, m.cols, m.data()); }

  /// Constant from foreign scalar type (e.g. float corpus data into a
  /// double-instantiated tape).
  template <class T>
  Ref constant_cast(int rows, int cols, const T* data) {
    Ref r = make_node(Op::kConst, rows, cols);
    S* out = val(r);
    for (std::size_t i = 0; i < count(r); ++i) out[i] = static_cast<S>(data[i]);
    return r;
  }

  Ref zeros(int rows, int cols) { return make_node(Op::kConst, rows, cols); }

  Ref scalar_const(S x) { return constant(1, 1, &x); }

  /// Leaf bound to an external parameter. One node per parameter per tape,
  /// so gradient accumulation into `p.grad` happens exactly once.
  Ref param(Param<S>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Ref r = make_node(Op::kParam, p.value.rows, p.value.cols);
    std::memcpy(val(r), p.value.data(), sizeof(S) * count(r));
    nodes_[r].bound = &p;
    param_nodes_.emplace(&p, r);
    return r;
  }

  /// Constant copy of a node's current value (stops gradient flow).
  Ref detach(Ref a) {
    scratch_.assign(val(a), val(a) + count(a));
    Ref r = make_node(Op::kConst, rows(a), cols(a));
    std::memcpy(val(r), scratch_.data(), sizeof(S) * count(r));
    return r;
  }

  // ---- elementwise / structural ops ---------------------------------------

  Ref add(Ref a, Ref b) { return binary_same(Op::kAdd, a, b); }
  Ref sub(Ref a, Ref b) { return binary_same(Op::kSub, a, b); }
  Ref hadamard(Ref a, Ref b) { return binary_same(Op::kHadamard, a, b); }

  /// (1 - z) .* a + z .* b
  Ref lerp(Ref z, Ref a, Ref b) {
    check_same_shape(z, a);
    check_same_shape(z, b);
    Ref r = make_node(Op::kLerp, rows(z), cols(z), z, a, b);
    S* out = val(r);
    const S* pz = val(z);
    const S* pa = val(a);
    const S* pb = val(b);
    for (std::size_t i = 0; i < count(r); ++i)
      out[i] = pa[i] + pz[i] * (pb[i] - pa[i]);
    return r;
  }

  /// k * a + c (elementwise, constants).
  Ref scale_shift(Ref a, S k, S c = S(0)) {
    Ref r = make_node(Op::kScaleShift, rows(a), cols(a), a);
    nodes_[r].s0 = k;
    S* out = val(r);
    const S* pa = val(a);
    for (std::size_t i = 0; i < count(r); ++i) out[i] = k * pa[i] + c;
    return r;
  }

  Ref tanh_(Ref a) { return unary(Op::kTanh, a, [](S x) { return std::tanh(x); }); }

  Ref sigmoid_(Ref a) {
    return unary(Op::kSigmoid, a, [](S x) { return S(1) / (S(1) + std::exp(-x)); });
  }

  Ref relu(Ref a) { return unary(Op::kRelu, a, [](S x) { return x > S(0) ? x : S(0); }); }

  Ref abs_(Ref a) { return unary(Op::kAbs, a, [](S x) { return std::abs(x); }); }

  Ref square(Ref a) { return unary(Op::kSquare, a, [](S x) { return x * x; }); }

  Ref concat(Ref a, Ref b) {
    check_vector(a);
    check_vector(b);
    Ref r = make_node(Op::kConcat2, rows(a) + rows(b), 1, a, b);
    std::memcpy(val(r), val(a), sizeof(S) * count(a));
    std::memcpy(val(r) + count(a), val(b), sizeof(S) * count(b));
    return r;
  }

  Ref concat(Ref a, Ref b, Ref c) {
    check_vector(a);
    check_vector(b);
    check_vector(c);
    Ref r = make_node(Op::kConcat3, rows(a) + rows(b) + rows(c), 1, a, b, c);
    std::memcpy(val(r), val(a), sizeof(S) * count(a));
    std::memcpy(val(r) + count(a), val(b), sizeof(S) * count(b));
    std::memcpy(val(r) + count(a) + count(b), val(c), sizeof(S) * count(c));
    return r;
  }

  Ref concat(Ref a, Ref b, Ref c, Ref d) {
    check_vector(a);
    check_vector(b);
    check_vector(c);
    check_vector(d);
    Ref r = make_node(Op::kConcat4, rows(a) + rows(b) + rows(c) + rows(d), 1, a, b, c);
    nodes_[r].d = d;
    std::memcpy(val(r), val(a), sizeof(S) * count(a));
    std::memcpy(val(r) + count(a), val(b), sizeof(S) * count(b));
    std::memcpy(val(r) + count(a) + count(b), val(c), sizeof(S) * count(c));
    std::memcpy(val(r) + count(a) + count(b) + count(c), val(d), sizeof(S) * count(d));
    return r;
  }

  // ---- linear algebra ------------------------------------------------------

  /// W (r x c) * x (c x 1) + b (r x 1)
  Ref affine(Ref W, Ref x, Ref b) {
    if (cols(W) != rows(x) || cols(x) != 1 || rows(b) != rows(W) || cols(b) != 1)
      throw InputError("affine: shape mismatch");
    Ref r = make_node(Op::kAffine, rows(W), 1, W, x, b);
    emap(val(r), rows(r), 1).noalias() =
        emap(val(W), rows(W), cols(W)) * emap(val(x), rows(x), 1) +
        emap(val(b), rows(b), 1);
    return r;
  }

  /// Row `row` of `table` as a column vector.
  Ref embed_row(Ref table, int row) {
    if (row < 0 || row >= rows(table)) throw InputError("embed_row: row out of range");
    Ref r = make_node(Op::kEmbed, cols(table), 1, table);
    nodes_[r].i0 = row;
    std::memcpy(val(r), val(table) + static_cast<std::size_t>(row) * cols(table),
                sizeof(S) * count(r));
    return r;
  }

  // ---- reductions ----------------------------------------------------------

  Ref sum(Ref a) {
    Ref r = make_node(Op::kSum, 1, 1, a);
    S acc = 0;
    const S* pa = val(a);
    for (std::size_t i = 0; i < count(a); ++i) acc += pa[i];
    *val(r) = acc;
    return r;
  }

  Ref dot(Ref a, Ref b) {
    check_same_shape(a, b);
    Ref r = make_node(Op::kDot, 1, 1, a, b);
    S acc = 0;
    const S* pa = val(a);
    const S* pb = val(b);
    for (std::size_t i = 0; i < count(a); ++i) acc += pa[i] * pb[i];
    *val(r) = acc;
    return r;
  }

  /// sum |a - b|
  Ref sum_abs_diff(Ref a, Ref b) {
    check_same_shape(a, b);
    Ref r = make_node(Op::kSumAbsDiff, 1, 1, a, b);
    S acc = 0;
    const S* pa = val(a);
    const S* pb = val(b);
    for (std::size_t i = 0; i < count(a); ++i) acc += std::abs(pa[i] - pb[i]);
    *val(r) = acc;
    return r;
  }

  /// sum (a - b)^2
  Ref sum_sq_diff(Ref a, Ref b) {
    check_same_shape(a, b);
    Ref r = make_node(Op::kSumSqDiff, 1, 1, a, b);
    S acc = 0;
    const S* pa = val(a);
    const S* pb = val(b);
    for (std::size_t i = 0; i < count(a); ++i) acc += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    *val(r) = acc;
    return r;
  }

  /// max(||a||_2, eps). Counts eps clamps in degenerate_norms().
  Ref norm_eps(Ref a, S eps) {
    Ref r = make_node(Op::kNormEps, 1, 1, a);
    nodes_[r].s0 = eps;
    S ssq = 0;
    const S* pa = val(a);
    for (std::size_t i = 0; i < count(a); ++i) ssq += pa[i] * pa[i];
    S raw = std::sqrt(ssq);
    if (raw < eps) {
      ++degenerate_norms_;
      raw = eps;
    }
    *val(r) = raw;
    return r;
  }

  /// Scalar division a / b.
  Ref div(Ref a, Ref b) {
    check_scalar(a);
    check_scalar(b);
    Ref r = make_node(Op::kDiv, 1, 1, a, b);
    *val(r) = *val(a) / *val(b);
    return r;
  }

  /// Cross entropy of softmax(logits) against `target` (stable log-sum-exp).
  Ref softmax_cross_entropy(Ref logits, int target) {
    check_vector(logits);
    if (target < 0 || target >= rows(logits))
      throw InputError("softmax_cross_entropy: target out of range");
    Ref r = make_node(Op::kSoftmaxCe, 1, 1, logits);
    nodes_[r].i0 = target;
    const S* pl = val(logits);
    const std::size_t n = count(logits);
    S m = pl[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, pl[i]);
    S lse = 0;
    for (std::size_t i = 0; i < n; ++i) lse += std::exp(pl[i] - m);
    *val(r) = m + std::log(lse) - pl[target];
    return r;
  }

  /// Identity forward; backward negates the incoming sensitivity.
  Ref grad_reverse(Ref a) {
    Ref r = make_node(Op::kGradReverse, rows(a), cols(a), a);
    std::memcpy(val(r), val(a), sizeof(S) * count(a));
    return r;
  }

  // ---- access ----------------------------------------------------------------

  int rows(Ref r) const { return nodes_[r].rows; }
  int cols(Ref r) const { return nodes_[r].cols; }
  std::size_t count(Ref r) const {
    return static_cast<std::size_t>(nodes_[r].rows) * nodes_[r].cols;
  }

  std::span<const S> value(Ref r) const { return {val_.data() + nodes_[r].val, count(r)}; }
  std::span<const S> grad(Ref r) const { return {grd_.data() + nodes_[r].val, count(r)}; }

  S scalar(Ref r) const {
    check_scalar(r);
    return val_[nodes_[r].val];
  }

  Mat<S> value_mat(Ref r) const {
    Mat<S> m(rows(r), cols(r));
    std::memcpy(m.data(), val_.data() + nodes_[r].val, sizeof(S) * count(r));
    return m;
  }

  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t degenerate_norms() const { return degenerate_norms_; }

  // ---- engine -----------------------------------------------------------------

  void backward(Ref root) {
    check_scalar(root);
    std::fill(grd_.begin(), grd_.begin() + used_, S(0));
    grd_[nodes_[root].val] = S(1);
    for (Ref i = root; i >= 0; --i) step_backward(i);
  }

  void reset() {
    nodes_.clear();
    param_nodes_.clear();
    used_ = 0;
  }

 private:
  enum class Op : std::uint8_t {
    kConst,
    kParam,
    kAffine,
    kEmbed,
    kAdd,
    kSub,
    kHadamard,
    kLerp,
    kScaleShift,
    kTanh,
    kSigmoid,
    kRelu,
    kAbs,
    kSquare,
    kConcat2,
    kConcat3,
    kConcat4,
    kSum,
    kDot,
    kSumAbsDiff,
    kSumSqDiff,
    kNormEps,
    kDiv,
    kSoftmaxCe,
    kGradReverse,
  };

  struct Node {
    Op op;
    int rows, cols;
    std::size_t val;  // shared offset into val_ and grd_
    Ref a = -1, b = -1, c = -1, d = -1;
    S s0 = 0;
    int i0 = 0;
    Param<S>* bound = nullptr;
  };

  using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  static Eigen::Map<EMat> emap(S* p, int r, int c) { return {p, r, c}; }
  static Eigen::Map<const EMat> emap(const S* p, int r, int c) { return {p, r, c}; }

  S* val(Ref r) { return val_.data() + nodes_[r].val; }
  const S* val(Ref r) const { return val_.data() + nodes_[r].val; }
  S* grd(Ref r) { return grd_.data() + nodes_[r].val; }

  Ref make_node(Op op, int r, int c, Ref a = -1, Ref b = -1, Ref cc = -1) {
    const std::size_t n = static_cast<std::size_t>(r) * c;
    if (used_ + n > val_.size()) {
      const std::size_t want = std::max(used_ + n, val_.size() * 2 + 64);
      val_.resize(want);
      grd_.resize(want);
    }
    Node node;
    node.op = op;
    node.rows = r;
    node.cols = c;
    node.val = used_;
    node.a = a;
    node.b = b;
    node.c = cc;
    used_ += n;
    std::fill(val_.begin() + node.val, val_.begin() + node.val + n, S(0));
    nodes_.push_back(node);
    return static_cast<Ref>(nodes_.size() - 1);
  }

  template <class F>
  Ref unary(Op op, Ref a, F f) {
    Ref r = make_node(op, rows(a), cols(a), a);
    S* out = val(r);
    const S* pa = val(a);
    for (std::size_t i = 0; i < count(a); ++i) out[i] = f(pa[i]);
    return r;
  }

  Ref binary_same(Op op, Ref a, Ref b) {
    check_same_shape(a, b);
    Ref r = make_node(op, rows(a), cols(a), a, b);
    S* out = val(r);
    const S* pa = val(a);
    const S* pb = val(b);
    switch (op) {
      case Op::kAdd:
        for (std::size_t i = 0; i < count(r); ++i) out[i] = pa[i] + pb[i];
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < count(r); ++i) out[i] = pa[i] - pb[i];
        break;
      case Op::kHadamard:
        for (std::size_t i = 0; i < count(r); ++i) out[i] = pa[i] * pb[i];
        break;
      default:
        throw InputError("binary_same: bad op");
    }
    return r;
  }

  void check_same_shape(Ref a, Ref b) const {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      throw InputError("tape: shape mismatch");
  }
  void check_vector(Ref a) const {
    if (cols(a) != 1) throw InputError("tape: column vector expected");
  }
  void check_scalar(Ref a) const {
    if (rows(a) != 1 || cols(a) != 1) throw InputError("tape: scalar expected");
  }

  void step_backward(Ref i) {
    Node& n = nodes_[i];
    const S* gy = grd_.data() + n.val;
    const S* y = val_.data() + n.val;
    const std::size_t cnt = static_cast<std::size_t>(n.rows) * n.cols;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        if (!n.bound->frozen) {
          S* pg = n.bound->grad.data();
          for (std::size_t k = 0; k < cnt; ++k) pg[k] += gy[k];
        }
        break;
      case Op::kAffine: {
        // y = W x + b
        Node& W = nodes_[n.a];
        Node& x = nodes_[n.b];
        Node& b = nodes_[n.c];
        emap(grd_.data() + W.val, W.rows, W.cols).noalias() +=
            emap(gy, n.rows, 1) * emap(val_.data() + x.val, x.rows, 1).transpose();
        emap(grd_.data() + x.val, x.rows, 1).noalias() +=
            emap(val_.data() + W.val, W.rows, W.cols).transpose() * emap(gy, n.rows, 1);
        emap(grd_.data() + b.val, b.rows, 1).noalias() += emap(gy, n.rows, 1);
        break;
      }
      case Op::kEmbed: {
        Node& t = nodes_[n.a];
        S* gt = grd_.data() + t.val + static_cast<std::size_t>(n.i0) * t.cols;
        for (std::size_t k = 0; k < cnt; ++k) gt[k] += gy[k];
        break;
      }
      case Op::kAdd: {
        accumulate(n.a, gy, cnt, S(1));
        accumulate(n.b, gy, cnt, S(1));
        break;
      }
      case Op::kSub: {
        accumulate(n.a, gy, cnt, S(1));
        accumulate(n.b, gy, cnt, S(-1));
        break;
      }
      case Op::kHadamard: {
        S* ga = grd_.data() + nodes_[n.a].val;
        S* gb = grd_.data() + nodes_[n.b].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        const S* pb = val_.data() + nodes_[n.b].val;
        for (std::size_t k = 0; k < cnt; ++k) {
          ga[k] += gy[k] * pb[k];
          gb[k] += gy[k] * pa[k];
        }
        break;
      }
      case Op::kLerp: {
        S* gz = grd_.data() + nodes_[n.a].val;
        S* ga = grd_.data() + nodes_[n.b].val;
        S* gb = grd_.data() + nodes_[n.c].val;
        const S* pz = val_.data() + nodes_[n.a].val;
        const S* pa = val_.data() + nodes_[n.b].val;
        const S* pb = val_.data() + nodes_[n.c].val;
        for (std::size_t k = 0; k < cnt; ++k) {
          gz[k] += gy[k] * (pb[k] - pa[k]);
          ga[k] += gy[k] * (S(1) - pz[k]);
          gb[k] += gy[k] * pz[k];
        }
        break;
      }
      case Op::kScaleShift:
        accumulate(n.a, gy, cnt, n.s0);
        break;
      case Op::kTanh: {
        S* ga = grd_.data() + nodes_[n.a].val;
        for (std::size_t k = 0; k < cnt; ++k) ga[k] += gy[k] * (S(1) - y[k] * y[k]);
        break;
      }
      case Op::kSigmoid: {
        S* ga = grd_.data() + nodes_[n.a].val;
        for (std::size_t k = 0; k < cnt; ++k) ga[k] += gy[k] * y[k] * (S(1) - y[k]);
        break;
      }
      case Op::kRelu: {
        S* ga = grd_.data() + nodes_[n.a].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        for (std::size_t k = 0; k < cnt; ++k)
          if (pa[k] > S(0)) ga[k] += gy[k];
        break;
      }
      case Op::kAbs: {
        S* ga = grd_.data() + nodes_[n.a].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        for (std::size_t k = 0; k < cnt; ++k)
          ga[k] += gy[k] * (pa[k] > S(0) ? S(1) : (pa[k] < S(0) ? S(-1) : S(0)));
        break;
      }
      case Op::kSquare: {
        S* ga = grd_.data() + nodes_[n.a].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        for (std::size_t k = 0; k < cnt; ++k) ga[k] += gy[k] * S(2) * pa[k];
        break;
      }
      case Op::kConcat2:
      case Op::kConcat3:
      case Op::kConcat4: {
        std::size_t off = 0;
        for (Ref p : {n.a, n.b, n.c, n.d}) {
          if (p < 0) break;
          Node& pn = nodes_[p];
          const std::size_t pc = static_cast<std::size_t>(pn.rows) * pn.cols;
          S* gp = grd_.data() + pn.val;
          for (std::size_t k = 0; k < pc; ++k) gp[k] += gy[off + k];
          off += pc;
        }
        break;
      }
      case Op::kSum: {
        Node& a = nodes_[n.a];
        const std::size_t ac = static_cast<std::size_t>(a.rows) * a.cols;
        S* ga = grd_.data() + a.val;
        for (std::size_t k = 0; k < ac; ++k) ga[k] += gy[0];
        break;
      }
      case Op::kDot: {
        Node& a = nodes_[n.a];
        const std::size_t ac = static_cast<std::size_t>(a.rows) * a.cols;
        S* ga = grd_.data() + nodes_[n.a].val;
        S* gb = grd_.data() + nodes_[n.b].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        const S* pb = val_.data() + nodes_[n.b].val;
        for (std::size_t k = 0; k < ac; ++k) {
          ga[k] += gy[0] * pb[k];
          gb[k] += gy[0] * pa[k];
        }
        break;
      }
      case Op::kSumAbsDiff: {
        Node& a = nodes_[n.a];
        const std::size_t ac = static_cast<std::size_t>(a.rows) * a.cols;
        S* ga = grd_.data() + nodes_[n.a].val;
        S* gb = grd_.data() + nodes_[n.b].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        const S* pb = val_.data() + nodes_[n.b].val;
        for (std::size_t k = 0; k < ac; ++k) {
          const S dv = pa[k] - pb[k];
          const S sg = dv > S(0) ? S(1) : (dv < S(0) ? S(-1) : S(0));
          ga[k] += gy[0] * sg;
          gb[k] -= gy[0] * sg;
        }
        break;
      }
      case Op::kSumSqDiff: {
        Node& a = nodes_[n.a];
        const std::size_t ac = static_cast<std::size_t>(a.rows) * a.cols;
        S* ga = grd_.data() + nodes_[n.a].val;
        S* gb = grd_.data() + nodes_[n.b].val;
        const S* pa = val_.data() + nodes_[n.a].val;
        const S* pb = val_.data() + nodes_[n.b].val;
        for (std::size_t k = 0; k < ac; ++k) {
          const S dv = S(2) * (pa[k] - pb[k]);
          ga[k] += gy[0] * dv;
          gb[k] -= gy[0] * dv;
        }
        break;
      }
      case Op::kNormEps: {
        Node& a = nodes_[n.a];
        const std::size_t ac = static_cast<std::size_t>(a.rows) * a.cols;
        const S* pa = val_.data() + a.val;
        S ssq = 0;
        for (std::size_t k = 0; k < ac; ++k) ssq += pa[k] * pa[k];
        const S raw = std::sqrt(ssq);
        if (raw >= n.s0 && raw > S(0)) {
          S* ga = grd_.data() + a.val;
          for (std::size_t k = 0; k < ac; ++k) ga[k] += gy[0] * pa[k] / raw;
        }
        break;
      }
      case Op::kDiv: {
        const S va = *(val_.data() + nodes_[n.a].val);
        const S vb = *(val_.data() + nodes_[n.b].val);
        *(grd_.data() + nodes_[n.a].val) += gy[0] / vb;
        *(grd_.data() + nodes_[n.b].val) -= gy[0] * va / (vb * vb);
        break;
      }
      case Op::kSoftmaxCe: {
        Node& a = nodes_[n.a];
        const std::size_t ac = static_cast<std::size_t>(a.rows) * a.cols;
        const S* pl = val_.data() + a.val;
        S m = pl[0];
        for (std::size_t k = 1; k < ac; ++k) m = std::max(m, pl[k]);
        S lse = 0;
        for (std::size_t k = 0; k < ac; ++k) lse += std::exp(pl[k] - m);
        S* ga = grd_.data() + a.val;
        for (std::size_t k = 0; k < ac; ++k) {
          S p = std::exp(pl[k] - m) / lse;
          ga[k] += gy[0] * (p - (static_cast<int>(k) == n.i0 ? S(1) : S(0)));
        }
        break;
      }
      case Op::kGradReverse:
        accumulate(n.a, gy, cnt, S(-1));
        break;
    }
  }

  void accumulate(Ref target, const S* gy, std::size_t cnt, S scale) {
    S* g = grd_.data() + nodes_[target].val;
    for (std::size_t k = 0; k < cnt; ++k) g[k] += scale * gy[k];
  }

  std::vector<Node> nodes_;
  std::vector<S> val_;
  std::vector<S> grd_;
  std::vector<S> scratch_;
  std::size_t used_ = 0;
  std::unordered_map<const Param<S>*, Ref> param_nodes_;
  std::uint64_t degenerate_norms_ = 0;
};

/// Sum of a list of like-shaped nodes (left fold).
template <class S>
typename Tape<S>::Ref fold_add(Tape<S>& t, std::span<const typename Tape<S>::Ref> xs) {
  if (xs.empty()) throw InputError("fold_add: empty list");
  auto acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = t.add(acc, xs[i]);
  return acc;
}

/// Cosine distance 1 - a.b/(|a||b|) with an epsilon guard on the norms.
template <class S>
typename Tape<S>::Ref cosine_distance(Tape<S>& t, typename Tape<S>::Ref a,
                                      typename Tape<S>::Ref b, S eps = S(1e-8)) {
  auto na = t.norm_eps(a, eps);
  auto nb = t.norm_eps(b, eps);
  auto cosine = t.div(t.dot(a, b), t.hadamard(na, nb));
  return t.scale_shift(cosine, S(-1), S(1));
}

}  // namespace ttts
