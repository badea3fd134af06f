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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/gradient_check.hpp"
#include "ttts/nn.hpp"
#include "ttts/rng.hpp"
#include "ttts/tape.hpp"

using namespace ttts;
using Catch::Approx;

namespace {

Mat<double> mat_from(std::initializer_list<double> xs) {
  Mat<double> m(static_cast<int>(xs.size()), 1);
  int i = 0;
  for (double x : xs) m.v[i++] = x;
  return m;
}

}  // namespace

TEST_CASE("affine forward matches manual computation") {
  Tape<double> t;
  Mat<double> w(2, 3);
  w.v = {1, 2, 3, 4, 5, 6};
  auto W = t.constant(w);
  auto x = t.constant(mat_from({1, 0, -1}));
  auto b = t.constant(mat_from({0.5, -0.5}));
  auto y = t.affine(W, x, b);
  REQUIRE(t.value(y)[0] == Approx(1 - 3 + 0.5));
  REQUIRE(t.value(y)[1] == Approx(4 - 6 - 0.5));
}

TEST_CASE("gradients of composed ops match finite differences") {
  // A small net touching every op family: affine, concat, gru-style gating,
  // reductions, cosine distance, softmax CE.
  ParamStore<double> store;
  Rng rng(11);
  Affine<double> l1, l2;
  l1.init(store, "l1", 3, 4, rng);
  l2.init(store, "l2", 4, 3, rng);
  Param<double>& table = store.create("emb", 5, 3);
  init_uniform(table, rng, 0.7);

  Mat<double> input = mat_from({0.3, -1.2, 0.8});

  auto build = [&](Tape<double>& t) {
    auto x = t.constant(input);
    auto h1 = t.tanh_(l1.apply(t, x));
    auto h2 = t.sigmoid_(l2.apply(t, h1));
    auto e = t.embed_row(t.param(table), 2);
    auto blend = t.lerp(h2, e, t.relu(t.scale_shift(e, -1.0, 0.1)));
    auto d = cosine_distance(t, blend, e);
    auto sq = t.sum_sq_diff(h2, e);
    auto l1term = t.sum_abs_diff(h2, t.scale_shift(e, 0.5));
    auto ce = t.softmax_cross_entropy(t.concat(h2, e), 4);
    auto dotn = t.div(t.dot(h2, e), t.norm_eps(e, 1e-8));
    auto mix = t.add(t.add(d, t.scale_shift(sq, 0.25)),
                     t.add(t.scale_shift(l1term, 0.1), t.add(ce, dotn)));
    return t.add(mix, t.sum(t.square(t.abs_(t.sub(h2, e)))));
  };

  Tape<double> tape;
  auto loss = build(tape);
  tape.backward(loss);

  auto eval = [&]() {
    Tape<double> t2;
    return t2.scalar(build(t2));
  };
  auto res = testing::finite_difference_check(store, eval);
  INFO("worst: " << res.worst);
  CHECK(res.checked > 40);
  CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("gru and conv layers match finite differences") {
  ParamStore<double> store;
  Rng rng(5);
  ConvSeq<double> conv;
  conv.init(store, "conv", 3, 3, rng);
  BiGru<double> bigru;
  bigru.init(store, "bigru", 3, 2, rng);
  Gru<double> gru;
  gru.init(store, "gru", 4, 3, rng);

  std::vector<Mat<double>> seq;
  Rng data(99);
  for (int i = 0; i < 4; ++i) {
    Mat<double> m(3, 1);
    for (auto& x : m.v) x = data.normal(0, 1);
    seq.push_back(m);
  }

  auto build = [&](Tape<double>& t) {
    std::vector<Tape<double>::Ref> xs;
    for (auto& m : seq) xs.push_back(t.constant(m));
    auto c = conv.apply(t, xs);
    auto b = bigru.run(t, c);
    auto g = gru.run(t, b);
    std::vector<Tape<double>::Ref> sums;
    for (auto r : g) sums.push_back(t.sum(t.square(r)));
    return fold_add(t, std::span<const Tape<double>::Ref>(sums));
  };

  Tape<double> tape;
  tape.backward(build(tape));
  auto res = testing::finite_difference_check(store, [&]() {
    Tape<double> t2;
    return t2.scalar(build(t2));
  });
  INFO("worst: " << res.worst);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("gradient reversal is identity forward and negation backward") {
  // 2-layer scalar net; the finite difference measures the true derivative,
  // the tape must report its negation upstream of the reversal.
  ParamStore<double> store;
  store.create("w1", 1, 1).value.v[0] = 0.7;
  store.create("w2", 1, 1).value.v[0] = -1.3;
  Param<double>& w1 = *store.find("w1");
  Param<double>& w2 = *store.find("w2");

  auto forward = [&](Tape<double>& t, bool reversed) {
    auto x = t.scalar_const(0.9);
    auto h = t.tanh_(t.hadamard(t.param(w1), x));
    auto hr = reversed ? t.grad_reverse(h) : h;
    auto y = t.hadamard(t.param(w2), hr);
    return t.square(y);
  };

  Tape<double> t;
  auto y = forward(t, true);
  REQUIRE(t.scalar(y) ==
          Approx(std::pow(-1.3 * std::tanh(0.7 * 0.9), 2)));  // forward identity

  t.backward(y);
  const double analytic_w1 = w1.grad.v[0];
  const double analytic_w2 = w2.grad.v[0];

  const double h = 1e-6;
  auto eval = [&](double v1) {
    Tape<double> t2;
    const double keep = w1.value.v[0];
    w1.value.v[0] = v1;
    double out = t2.scalar(forward(t2, true));
    w1.value.v[0] = keep;
    return out;
  };
  const double numeric_w1 =
      (eval(w1.value.v[0] + h) - eval(w1.value.v[0] - h)) / (2 * h);
  CHECK(analytic_w1 == Approx(-numeric_w1).epsilon(1e-6));  // upstream negated

  // Downstream of the reversal (w2) keeps the true gradient.
  auto eval2 = [&](double v2) {
    Tape<double> t2;
    const double keep = w2.value.v[0];
    w2.value.v[0] = v2;
    double out = t2.scalar(forward(t2, true));
    w2.value.v[0] = keep;
    return out;
  };
  const double numeric_w2 =
      (eval2(w2.value.v[0] + h) - eval2(w2.value.v[0] - h)) / (2 * h);
  CHECK(analytic_w2 == Approx(numeric_w2).epsilon(1e-6));
}

TEST_CASE("frozen parameters accumulate no gradient") {
  ParamStore<double> store;
  Rng rng(3);
  Affine<double> a, b;
  a.init(store, "enc.a", 2, 2, rng);
  b.init(store, "cls.b", 2, 2, rng);
  store.freeze_prefix("enc.");

  Tape<double> t;
  auto x = t.constant(mat_from({1.0, -2.0}));
  auto loss = t.sum(t.square(b.apply(t, t.tanh_(a.apply(t, x)))));
  t.backward(loss);

  for (double g : store.find("enc.a.w")->grad.v) CHECK(g == 0.0);
  double total = 0;
  for (double g : store.find("cls.b.w")->grad.v) total += std::abs(g);
  CHECK(total > 0.0);  // sensitivities still propagate through frozen params
}

TEST_CASE("cosine distance endpoints") {
  Tape<double> t;
  auto ex = t.constant(mat_from({1, 0}));
  auto ey = t.constant(mat_from({0, 1}));
  auto emx = t.constant(mat_from({-1, 0}));
  CHECK(t.scalar(cosine_distance(t, ex, ex)) == Approx(0.0).margin(1e-12));
  CHECK(t.scalar(cosine_distance(t, ex, ey)) == Approx(1.0));
  CHECK(t.scalar(cosine_distance(t, ex, emx)) == Approx(2.0));
}

TEST_CASE("zero-norm vectors are clamped and counted") {
  Tape<double> t;
  auto z = t.zeros(3, 1);
  auto n = t.norm_eps(z, 1e-8);
  CHECK(t.scalar(n) == Approx(1e-8));
  CHECK(t.degenerate_norms() == 1);
  auto ok = t.constant(mat_from({3, 4, 0}));
  CHECK(t.scalar(t.norm_eps(ok, 1e-8)) == Approx(5.0));
  CHECK(t.degenerate_norms() == 1);
}

TEST_CASE("softmax cross entropy of uniform logits is ln(n)") {
  Tape<double> t;
  auto logits = t.zeros(3, 1);
  CHECK(t.scalar(t.softmax_cross_entropy(logits, 1)) == Approx(std::log(3.0)));
}

TEST_CASE("tape reset reuses arena and keeps results identical") {
  ParamStore<float> store;
  Rng rng(7);
  Affine<float> l;
  l.init(store, "l", 4, 4, rng);
  Mat<float> in(4, 1);
  in.v = {0.1f, -0.2f, 0.3f, -0.4f};

  Tape<float> t;
  float first = 0;
  for (int it = 0; it < 3; ++it) {
    t.reset();
    auto loss = t.sum(t.square(l.apply(t, t.constant(in))));
    if (it == 0)
      first = t.scalar(loss);
    else
      REQUIRE(t.scalar(loss) == first);  // bitwise repeatable
    t.backward(loss);
  }
}

TEST_CASE("adam skips frozen parameters and allocates no state for them") {
  ParamStore<float> store;
  Rng rng(9);
  Affine<float> a, b;
  a.init(store, "frozen.a", 2, 2, rng);
  b.init(store, "live.b", 2, 2, rng);
  store.freeze_prefix("frozen.");
  Mat<float> before = store.find("frozen.a.w")->value;

  Adam<float> opt(1e-2);
  Mat<float> in(2, 1);
  in.v = {1.f, 2.f};
  for (int i = 0; i < 5; ++i) {
    store.zero_grads();
    Tape<float> t;
    auto loss = t.sum(t.square(b.apply(t, a.apply(t, t.constant(in)))));
    t.backward(loss);
    opt.step(store.all());
  }
  CHECK(store.find("frozen.a.w")->value == before);
  CHECK_FALSE(opt.has_state("frozen.a.w"));
  CHECK(opt.has_state("live.b.w"));
}
