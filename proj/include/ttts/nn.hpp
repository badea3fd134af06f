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

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttts/errors.hpp"
#include "ttts/rng.hpp"
#include "ttts/tape.hpp"

namespace ttts {

/// Owns all trainable tensors, keyed by hierarchical dotted names.
/// Iteration follows creation order, which is what makes seeded
/// initialization and optimizer sweeps reproducible.
template <class S>
class ParamStore {
 public:
  Param<S>& create(const std::string& name, int rows, int cols) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.emplace_back(name, rows, cols);
    Param<S>* p = &params_.back();
    order_.push_back(p);
    index_.emplace(name, p);
    return *p;
  }

  Param<S>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }
  const Param<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }

  std::span<Param<S>* const> all() { return order_; }
  std::span<const Param<S>* const> all() const {
    return {const_cast<const Param<S>* const*>(order_.data()), order_.size()};
  }

  /// Marks every parameter whose name starts with `prefix` frozen.
  /// Throws if the prefix matches nothing (guards against silent typos).
  int freeze_prefix(const std::string& prefix) {
    int n = 0;
    for (Param<S>* p : order_) {
      if (p->name.rfind(prefix, 0) == 0) {
        p->frozen = true;
        ++n;
      }
    }
    if (n == 0) throw ConfigError("freeze prefix matches no parameter: " + prefix);
    return n;
  }

  void zero_grads() {
    for (Param<S>* p : order_) p->zero_grad();
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const Param<S>* p : order_) n += p->value.size();
    return n;
  }

 private:
  std::deque<Param<S>> params_;  // deque: stable addresses
  std::vector<Param<S>*> order_;
  std::unordered_map<std::string, Param<S>*> index_;
};

/// Freezes parameters by name prefix; returns the names actually frozen.
template <class S>
std::vector<std::string> apply_freeze(ParamStore<S>& store,
                                      std::span<const std::string> prefixes) {
  for (const auto& pre : prefixes) store.freeze_prefix(pre);
  std::vector<std::string> frozen;
  for (Param<S>* p : store.all())
    if (p->frozen) frozen.push_back(p->name);
  return frozen;
}

template <class S>
void init_uniform(Param<S>& p, Rng& rng, double scale) {
  for (auto& x : p.value.v) x = static_cast<S>(rng.uniform(-scale, scale));
}

// ---- layers ------------------------------------------------------------------

template <class S>
struct Affine {
  Param<S>* w = nullptr;
  Param<S>* b = nullptr;

  void init(ParamStore<S>& store, const std::string& name, int in, int out, Rng& rng) {
    w = &store.create(name + ".w", out, in);
    b = &store.create(name + ".b", out, 1);
    init_uniform(*w, rng, std::sqrt(1.0 / in));
    init_uniform(*b, rng, std::sqrt(1.0 / in));
  }

  typename Tape<S>::Ref apply(Tape<S>& t, typename Tape<S>::Ref x) const {
    return t.affine(t.param(*w), x, t.param(*b));
  }
};

template <class S>
struct GruCell {
  Affine<S> update, reset, candidate;
  int hidden = 0;

  void init(ParamStore<S>& store, const std::string& name, int input, int h, Rng& rng) {
    hidden = h;
    update.init(store, name + ".z", input + h, h, rng);
    reset.init(store, name + ".r", input + h, h, rng);
    candidate.init(store, name + ".n", input + h, h, rng);
  }

  typename Tape<S>::Ref step(Tape<S>& t, typename Tape<S>::Ref x,
                             typename Tape<S>::Ref h) const {
    auto xh = t.concat(x, h);
    auto z = t.sigmoid_(update.apply(t, xh));
    auto r = t.sigmoid_(reset.apply(t, xh));
    auto n = t.tanh_(candidate.apply(t, t.concat(x, t.hadamard(r, h))));
    return t.lerp(z, n, h);  // z -> 1 keeps the previous state
  }
};

/// Unidirectional GRU over a sequence of column-vector nodes.
template <class S>
struct Gru {
  GruCell<S> cell;

  void init(ParamStore<S>& store, const std::string& name, int input, int h, Rng& rng) {
    cell.init(store, name, input, h, rng);
  }

  /// States aligned with the input order. reverse=true scans right-to-left
  /// (the state at index i then summarizes xs[i..end]).
  std::vector<typename Tape<S>::Ref> run(Tape<S>& t,
                                         std::span<const typename Tape<S>::Ref> xs,
                                         bool reverse = false) const {
    std::vector<typename Tape<S>::Ref> states(xs.size());
    auto h = t.zeros(cell.hidden, 1);
    if (!reverse) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        h = cell.step(t, xs[i], h);
        states[i] = h;
      }
    } else {
      for (std::size_t i = xs.size(); i-- > 0;) {
        h = cell.step(t, xs[i], h);
        states[i] = h;
      }
    }
    return states;
  }

  /// Final state of a left-to-right scan (summary of the whole sequence).
  typename Tape<S>::Ref last(Tape<S>& t,
                             std::span<const typename Tape<S>::Ref> xs) const {
    auto h = t.zeros(cell.hidden, 1);
    for (auto x : xs) h = cell.step(t, x, h);
    return h;
  }
};

/// Bidirectional GRU; per-position output is [forward; backward].
template <class S>
struct BiGru {
  Gru<S> fw, bw;

  void init(ParamStore<S>& store, const std::string& name, int input, int h_per_dir,
            Rng& rng) {
    fw.init(store, name + ".fw", input, h_per_dir, rng);
    bw.init(store, name + ".bw", input, h_per_dir, rng);
  }

  std::vector<typename Tape<S>::Ref> run(Tape<S>& t,
                                         std::span<const typename Tape<S>::Ref> xs) const {
    auto f = fw.run(t, xs, false);
    auto b = bw.run(t, xs, true);
    std::vector<typename Tape<S>::Ref> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = t.concat(f[i], b[i]);
    return out;
  }
};

/// Kernel-3 1-D mixing layer over a sequence of column vectors, zero-padded at
/// the edges. tanh activation unless constructed linear.
template <class S>
struct ConvSeq {
  Affine<S> aff;
  int in = 0;
  bool tanh_act = true;

  void init(ParamStore<S>& store, const std::string& name, int input, int out, Rng& rng,
            bool activation = true) {
    in = input;
    tanh_act = activation;
    aff.init(store, name, 3 * input, out, rng);
  }

  std::vector<typename Tape<S>::Ref> apply(Tape<S>& t,
                                           std::span<const typename Tape<S>::Ref> xs) const {
    auto zero = t.zeros(in, 1);
    std::vector<typename Tape<S>::Ref> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto left = i > 0 ? xs[i - 1] : zero;
      auto right = i + 1 < xs.size() ? xs[i + 1] : zero;
      auto y = aff.apply(t, t.concat(left, xs[i], right));
      out[i] = tanh_act ? t.tanh_(y) : y;
    }
    return out;
  }
};

// ---- optimizer -----------------------------------------------------------------

/// Adam with bias correction. Frozen parameters are skipped entirely: no
/// update, and no moment state is ever allocated for them.
template <class S>
class Adam {
 public:
  struct Moments {
    Mat<S> m, v;
  };

  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Param<S>* const> params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Param<S>* p : params) {
      if (p->frozen) continue;
      auto& mo = state_[p->name];
      if (mo.m.size() == 0) {
        mo.m = Mat<S>(p->value.rows, p->value.cols);
        mo.v = Mat<S>(p->value.rows, p->value.cols);
      }
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad.v[i]);
        const double m = beta1_ * static_cast<double>(mo.m.v[i]) + (1.0 - beta1_) * g;
        const double v = beta2_ * static_cast<double>(mo.v.v[i]) + (1.0 - beta2_) * g * g;
        mo.m.v[i] = static_cast<S>(m);
        mo.v.v[i] = static_cast<S>(v);
        const double mh = m / bc1;
        const double vh = v / bc2;
        p->value.v[i] -= static_cast<S>(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }
  double learning_rate() const { return lr_; }

  bool has_state(const std::string& name) const { return state_.count(name) != 0; }
  const std::map<std::string, Moments>& state() const { return state_; }
  std::map<std::string, Moments>& state() { return state_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;  // ordered: deterministic serialization
};

}  // namespace ttts
