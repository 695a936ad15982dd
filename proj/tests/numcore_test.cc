// Copyright 2026 The Subnav Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "subnav/autodiff.h"
#include "subnav/nn.h"
#include "subnav/tensor.h"

namespace subnav::num {
namespace {

// Scalar reference GRU, written out gate by gate.
std::vector<double> ref_gru(const std::vector<double>& x,
                            const std::vector<double>& h, const Tensor& wx,
                            const Tensor& wh, const Tensor& bx,
                            const Tensor& bh) {
  const std::size_t H = h.size();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto gate = [&](std::size_t col, bool from_x) {
    double s = from_x ? bx[col] : bh[col];
    if (from_x) {
      for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * wx.at(i, col);
    } else {
      for (std::size_t i = 0; i < H; ++i) s += h[i] * wh.at(i, col);
    }
    return s;
  };
  std::vector<double> out(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double r = sig(gate(j, true) + gate(j, false));
    const double z = sig(gate(H + j, true) + gate(H + j, false));
    const double n = std::tanh(gate(2 * H + j, true) + r * gate(2 * H + j, false));
    out[j] = (1 - z) * n + z * h[j];
  }
  return out;
}

void fill_counting(Parameter& p, double step, double offset) {
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    p.value[i] = offset + step * static_cast<double>(i % 7) -
                 step * static_cast<double>(i % 3);
  }
}

TEST_CASE("tensor construction and shape checks") {
  Tensor s;
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.at(1, 2) == 6.0);
  CHECK(m.row(1)[0] == 4.0);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{1, 1, 1, 1}), ShapeError);
  CHECK_THROWS_AS(m.item(), ShapeError);
  Tensor bad = Tensor::vector({1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_FALSE(bad.all_finite());
  CHECK_THROWS_AS(bad.require_finite("t"), NonFiniteError);
}

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
  CHECK(Rng(5).fork(1).next_u64() == Rng(5).fork(1).next_u64());
  CHECK(Rng(5).fork(1).next_u64() != Rng(5).fork(2).next_u64());
}

TEST_CASE("linear examples") {
  Tape t;
  Var x = t.constant(Tensor::vector({1, 0}));
  Var w = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var b = t.constant(Tensor::vector({0, 0}));
  CHECK(linear(x, w, b).value() == Tensor::vector({1, 0}));

  Var x2 = t.constant(Tensor::vector({1, 1}));
  Var w2 = t.constant(Tensor::matrix(2, 1, {1, 1}));
  Var b2 = t.constant(Tensor::vector({0.5}));
  CHECK(linear(x2, w2, b2).value()[0] == doctest::Approx(1 * 1 + 1 * 1 + 0.5));

  Var x3 = t.constant(Tensor::vector({1, 2, 3}));
  CHECK_THROWS_AS(linear(x3, w, b), ShapeError);
}

TEST_CASE("softmax examples and stability") {
  Tape t;
  auto sm = [&](std::vector<double> v) {
    return softmax(t.constant(Tensor::vector(std::move(v)))).value();
  };
  CHECK(sm({0, 0}) == Tensor::vector({0.5, 0.5}));
  CHECK(sm({1000, 1000}) == Tensor::vector({0.5, 0.5}));
  const Tensor r = sm({0, std::log(3.0)});
  CHECK(r[0] == doctest::Approx(1.0 / (1.0 + 3.0)).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(3.0 / (1.0 + 3.0)).epsilon(1e-14));

  Rng rng(3);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> v(1 + rng.below(12));
    for (double& e : v) e = rng.uniform(-50, 50);
    const Tensor y = sm(v);
    double s = 0;
    for (double e : y.values()) {
      CHECK(e > 0.0);
      s += e;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("gru_step fixed point and bounds") {
  ParamStore store;
  GruParams p = add_gru(store, "g", 3, 4);
  Tape t;
  GruVars cell = bind(t, p);
  Var h0 = t.constant(Tensor(Shape{4}));
  Var x = t.constant(Tensor::vector({0.3, -2, 5}));
  CHECK(gru_step(cell, x, h0).value() == Tensor(Shape{4}));

  Rng rng(11);
  store.init_uniform(rng);
  for (int c = 0; c < 50; ++c) {
    Tape tc;
    GruVars cc = bind(tc, p);
    Tensor hv(Shape{4});
    for (double& v : hv.values()) v = rng.uniform(-0.99, 0.99);
    Tensor xv(Shape{3});
    for (double& v : xv.values()) v = rng.uniform(-20, 20);
    Var h = gru_step(cc, tc.constant(xv), tc.constant(hv));
    for (double v : h.value().values()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
  CHECK_THROWS_AS(gru_step(cell, h0, h0), ShapeError);
}

TEST_CASE("gru_step matches a hand-unrolled two-unit cell") {
  ParamStore store;
  GruParams p = add_gru(store, "g", 2, 2);
  fill_counting(*p.wx, 0.1, -0.2);
  fill_counting(*p.wh, 0.05, 0.1);
  fill_counting(*p.bx, 0.2, -0.1);
  fill_counting(*p.bh, -0.1, 0.05);

  // Hand unroll for x = [1, -1], h = [0.5, -0.25].
  const Tensor& Wx = p.wx->value;
  const Tensor& Wh = p.wh->value;
  const Tensor& bx = p.bx->value;
  const Tensor& bh = p.bh->value;
  const double x0 = 1.0, x1 = -1.0, h0 = 0.5, h1 = -0.25;
  double expect[2];
  for (int j = 0; j < 2; ++j) {
    const double ar = x0 * Wx.at(0, j) + x1 * Wx.at(1, j) + bx[j] +
                      h0 * Wh.at(0, j) + h1 * Wh.at(1, j) + bh[j];
    const double az = x0 * Wx.at(0, 2 + j) + x1 * Wx.at(1, 2 + j) + bx[2 + j] +
                      h0 * Wh.at(0, 2 + j) + h1 * Wh.at(1, 2 + j) + bh[2 + j];
    const double r = 1.0 / (1.0 + std::exp(-ar));
    const double z = 1.0 / (1.0 + std::exp(-az));
    const double hn = h0 * Wh.at(0, 4 + j) + h1 * Wh.at(1, 4 + j) + bh[4 + j];
    const double n = std::tanh(x0 * Wx.at(0, 4 + j) + x1 * Wx.at(1, 4 + j) +
                               bx[4 + j] + r * hn);
    expect[j] = (1.0 - z) * n + z * (j == 0 ? h0 : h1);
  }
  Tape t;
  Var h = gru_step(bind(t, p), t.constant(Tensor::vector({x0, x1})),
                   t.constant(Tensor::vector({h0, h1})));
  CHECK(h.value()[0] == doctest::Approx(expect[0]).epsilon(1e-14));
  CHECK(h.value()[1] == doctest::Approx(expect[1]).epsilon(1e-14));
}

TEST_CASE("birnn_encode") {
  ParamStore store;
  GruParams f = add_gru(store, "f", 2, 2);
  GruParams b = add_gru(store, "b", 2, 2);
  Rng rng(5);
  store.init_uniform(rng);
  const std::vector<double> r0 = {0.4, -0.7}, r1 = {1.1, 0.2};

  SUBCASE("hand unroll L=2") {
    Tape t;
    Var out = birnn_encode(bind(t, f), bind(t, b),
                           t.constant(Tensor::matrix(2, 2, {0.4, -0.7, 1.1, 0.2})));
    const std::vector<double> zero = {0, 0};
    auto F = [&](auto x, auto h) {
      return ref_gru(x, h, f.wx->value, f.wh->value, f.bx->value, f.bh->value);
    };
    auto B = [&](auto x, auto h) {
      return ref_gru(x, h, b.wx->value, b.wh->value, b.bx->value, b.bh->value);
    };
    const auto f0 = F(r0, zero), f1 = F(r1, f0);
    const auto b1 = B(r1, zero), b0 = B(r0, b1);
    const std::array<double, 8> expect = {f0[0], f0[1], b0[0], b0[1],
                                          f1[0], f1[1], b1[0], b1[1]};
    REQUIRE(out.shape() == Shape{2, 4});
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(out.value()[i] == doctest::Approx(expect[i]).epsilon(1e-14));
    }
  }

  SUBCASE("L=1 is one step in each direction") {
    Tape t;
    GruVars fv = bind(t, f), bv = bind(t, b);
    Var x = t.constant(Tensor::matrix(1, 2, r0));
    Var out = birnn_encode(fv, bv, x);
    Var z = t.constant(Tensor(Shape{2}));
    Var xr = t.constant(Tensor::vector(r0));
    Tensor expect = concat({gru_step(fv, xr, z), gru_step(bv, xr, z)}).value();
    CHECK(out.value().values() == expect.values());
  }

  SUBCASE("reversal swaps halves when both directions share weights") {
    ParamStore shared;
    GruParams g = add_gru(shared, "g", 2, 3);
    Rng r(9);
    shared.init_uniform(r);
    Tape t;
    GruVars gv = bind(t, g);
    Var fwd = birnn_encode(
        gv, gv, t.constant(Tensor::matrix(3, 2, {1, 2, -1, 0.5, 0.3, -0.8})));
    Var rev = birnn_encode(
        gv, gv, t.constant(Tensor::matrix(3, 2, {0.3, -0.8, -1, 0.5, 1, 2})));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        CHECK(fwd.value().at(i, j) == rev.value().at(2 - i, 3 + j));
        CHECK(fwd.value().at(i, 3 + j) == rev.value().at(2 - i, j));
      }
    }
  }

  SUBCASE("empty sequence") {
    Tape t;
    CHECK_THROWS_AS(birnn_encode(bind(t, f), bind(t, b),
                                 t.constant(Tensor(Shape{0, 2}))),
                    ShapeError);
  }
}

// Sets every projection to identity and every bias to zero.
void identity_mha(MhaParams& p) {
  for (LinearParams* l : {&p.q, &p.k, &p.v, &p.o}) {
    l->w->value.fill(0.0);
    for (std::size_t i = 0; i < l->w->value.dim(0); ++i) l->w->value.at(i, i) = 1;
    l->b->value.fill(0.0);
  }
}

TEST_CASE("multi_head_attention") {
  SUBCASE("single key returns the projected value") {
    ParamStore store;
    MhaParams p = add_mha(store, "a", 4, 4, 4, 2);
    Rng rng(1);
    store.init_uniform(rng);
    Tape t;
    MhaVars m = bind(t, p);
    Var k = t.constant(Tensor::matrix(1, 4, {0.1, 0.2, 0.3, 0.4}));
    Var v = t.constant(Tensor::matrix(1, 4, {1, -1, 2, -2}));
    Var projected = apply(m.o, row(apply(m.v, v), 0));
    for (double qs : {-3.0, 0.0, 5.0}) {
      Attention a = multi_head_attention(
          m, t.constant(Tensor::vector({qs, 1, -qs, 2})), k, v);
      CHECK(a.scores.value() == Tensor::matrix(2, 1, {1, 1}));
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.output.value()[i] == doctest::Approx(projected.value()[i]));
      }
    }
  }

  SUBCASE("identical keys give uniform scores") {
    ParamStore store;
    MhaParams p = add_mha(store, "a", 4, 4, 4, 2);
    Rng rng(2);
    store.init_uniform(rng);
    Tape t;
    Var k = t.constant(Tensor::matrix(3, 4, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4}));
    Attention a = multi_head_attention(
        bind(t, p), t.constant(Tensor::vector({0.5, -1, 2, 0})), k, k);
    for (double s : a.scores.value().values()) {
      CHECK(s == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
  }

  SUBCASE("one head, d=2, m=2 by hand") {
    ParamStore store;
    MhaParams p = add_mha(store, "a", 2, 2, 2, 1);
    identity_mha(p);
    Tape t;
    // q = [1, 0], keys [1, 0] and [0, 1], values [2, 0] and [0, 4].
    // Logits 1/sqrt(2) and 0, softmax weight on key 0 = 1 / (1 + e^{-1/sqrt 2}).
    const double w0 = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
    Attention a = multi_head_attention(
        bind(t, p), t.constant(Tensor::vector({1, 0})),
        t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1})),
        t.constant(Tensor::matrix(2, 2, {2, 0, 0, 4})));
    CHECK(a.scores.value()[0] == doctest::Approx(w0).epsilon(1e-14));
    CHECK(a.scores.value()[1] == doctest::Approx(1 - w0).epsilon(1e-14));
    CHECK(a.output.value()[0] == doctest::Approx(2 * w0).epsilon(1e-14));
    CHECK(a.output.value()[1] == doctest::Approx(4 * (1 - w0)).epsilon(1e-14));
  }

  SUBCASE("score rows sum to one") {
    ParamStore store;
    MhaParams p = add_mha(store, "a", 3, 5, 8, 4);
    Rng rng(4);
    store.init_uniform(rng);
    for (int c = 0; c < 20; ++c) {
      Tape t;
      const std::size_t m = 1 + rng.below(9);
      Tensor k(Shape{m, 5});
      for (double& v : k.values()) v = rng.uniform(-3, 3);
      Tensor q(Shape{3});
      for (double& v : q.values()) v = rng.uniform(-3, 3);
      Attention a = multi_head_attention(bind(t, p), t.constant(q),
                                         t.constant(k), t.constant(k));
      for (std::size_t h = 0; h < 4; ++h) {
        const auto r = a.scores.value().row(h);
        CHECK(std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0) <= 1e-9);
      }
    }
  }

  SUBCASE("indivisible heads") {
    ParamStore store;
    CHECK_THROWS_AS(add_mha(store, "a", 4, 4, 6, 4), std::invalid_argument);
  }
}

TEST_CASE("backward basics") {
  ParamStore store;
  Parameter& x = store.add("x", Shape{4}, 1);
  x.value = Tensor::vector({1, -2, 3, 0.5});
  {
    Tape t;
    t.backward(sum(t.param(x)));
    CHECK(x.grad == Tensor::vector({1, 1, 1, 1}));
  }
  Parameter& s = store.add("s", Shape{}, 1);
  s.value = Tensor::scalar(3.0);
  {
    Tape t;
    Var v = t.param(s);
    t.backward(mul(v, v));
    CHECK(s.grad.item() == 6.0);
  }
  {
    Tape t;
    CHECK_THROWS_AS(t.backward(t.param(x)), ShapeError);
  }
  {
    Tape t(false);
    Var v = sum(t.param(x));
    CHECK(v.item() == doctest::Approx(2.5));
    CHECK_THROWS_AS(t.backward(v), std::logic_error);
  }
}

TEST_CASE("non-finite values are rejected at op boundaries") {
  Tape t;
  Var big = t.constant(Tensor::vector({1000.0}));
  CHECK_THROWS_AS(exp(big), NonFiniteError);
  Var zero = t.constant(Tensor::vector({0.0}));
  CHECK_THROWS_AS(log(zero), NonFiniteError);
  CHECK_THROWS_AS(t.constant(Tensor::vector({std::numeric_limits<double>::infinity()})),
                  NonFiniteError);
}

TEST_CASE("finite_diff examples") {
  std::vector<double> x = {3.0};
  auto id = finite_diff([&] { return x[0]; }, x);
  CHECK(std::abs(id[0] - 1.0) <= 1e-9);
  auto sq = finite_diff([&] { return x[0] * x[0]; }, x);
  CHECK(std::abs(sq[0] - 6.0) <= 1e-6);
  CHECK(x[0] == 3.0);
}

// A random three-layer composition of the primitives on small dims.
struct Composition {
  ParamStore store;
  std::vector<int> ops;
  std::vector<std::size_t> dims;
  std::size_t heads = 1;
  std::vector<std::size_t> model_dims;
  Tensor probe;

  explicit Composition(Rng& rng) {
    std::size_t d = 1 + rng.below(8);
    dims.push_back(d);
    store.add("x", Shape{d}, 1);
    for (int layer = 0; layer < 3; ++layer) {
      const int op = static_cast<int>(rng.below(6));
      ops.push_back(op);
      const std::string p = "l" + std::to_string(layer);
      std::size_t next = 1 + rng.below(8);
      switch (op) {
        case 0:  // linear + tanh
        case 1:  // linear + sigmoid
          add_linear(store, p, d, next);
          break;
        case 2:  // gru step from a learned state
          add_gru(store, p, d, next);
          store.add(p + ".h0", Shape{next}, 1);
          break;
        case 3: {  // attention over a learned key matrix
          heads = 1 + rng.below(2);
          next = heads * (1 + rng.below(4));
          const std::size_t m = 1 + rng.below(4);
          add_mha(store, p, d, 3, next, heads);
          store.add(p + ".keys", Shape{m, 3}, 1);
          model_dims.push_back(next);
          next += m;
          break;
        }
        case 4:  // softmax then elementwise product with a parameter
          next = d;
          store.add(p + ".g", Shape{d}, 1);
          break;
        default:  // square, exp of a scaled slice, concat back
          next = d + 1;
          store.add(p + ".e", Shape{1}, 1);
          break;
      }
      dims.push_back(d = next);
    }
    store.init_uniform(rng);
    probe = Tensor(Shape{d});
    for (double& v : probe.values()) v = rng.uniform(-1, 1);
  }

  Var forward(Tape& t) {
    std::size_t attention = 0;
    Var h = t.param(store.get("x"));
    for (std::size_t layer = 0; layer < ops.size(); ++layer) {
      const std::string p = "l" + std::to_string(layer);
      auto lin = [&] {
        LinearParams lp{&store.get(p + ".w"), &store.get(p + ".b")};
        return apply(bind(t, lp), h);
      };
      switch (ops[layer]) {
        case 0:
          h = tanh(lin());
          break;
        case 1:
          h = sigmoid(lin());
          break;
        case 2: {
          GruParams g{&store.get(p + ".wx"), &store.get(p + ".wh"),
                      &store.get(p + ".bx"), &store.get(p + ".bh"), dims[layer],
                      dims[layer + 1]};
          h = gru_step(bind(t, g), h, t.param(store.get(p + ".h0")));
          break;
        }
        case 3: {
          auto L = [&](const std::string& n) {
            return LinearParams{&store.get(p + "." + n + ".w"),
                                &store.get(p + "." + n + ".b")};
          };
          MhaParams mp{L("q"), L("k"), L("v"), L("o"), model_dims[attention++],
                       heads};
          Var keys = t.param(store.get(p + ".keys"));
          Attention a = multi_head_attention(bind(t, mp), h, keys, keys);
          h = concat({a.output, row(a.scores, 0)});
          break;
        }
        case 4:
          h = mul(softmax(h), t.param(store.get(p + ".g")));
          break;
        default: {
          Var e = exp(scale(t.param(store.get(p + ".e")), 0.5));
          h = concat({square(h), mul(e, slice(h, 0, 1))});
          break;
        }
      }
    }
    return dot(h, t.constant(probe));
  }
};

TEST_CASE("backward matches finite differences on random compositions") {
  Rng rng(2024);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    Composition comp(rng);
    Tape t;
    t.backward(comp.forward(t));
    for (std::size_t i = 0; i < comp.store.size(); ++i) {
      Parameter& p = comp.store[i];
      const std::vector<double> analytic = p.grad.values();
      const std::vector<double> numeric = finite_diff(
          [&] {
            Tape f(false);
            return comp.forward(f).item();
          },
          p.value.values());
      // Key-bias gradients are exactly zero; the floor absorbs FD noise there.
      const double err = relative_error(analytic, numeric, 1e-4);
      worst = std::max(worst, err);
      CHECK_MESSAGE(err <= 1e-6, "case " << c << " param " << p.name);
    }
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("parameter init is deterministic") {
  auto build = [](std::uint64_t seed) {
    ParamStore s;
    add_gru(s, "g", 5, 6);
    add_mha(s, "a", 6, 6, 6, 2);
    Rng rng(seed);
    s.init_uniform(rng);
    std::vector<double> all;
    for (std::size_t i = 0; i < s.size(); ++i) {
      all.insert(all.end(), s[i].value.values().begin(), s[i].value.values().end());
    }
    return all;
  };
  CHECK(build(7) == build(7));
  CHECK(build(7) != build(8));
  const auto v = build(7);
  CHECK(std::all_of(v.begin(), v.end(), [](double x) { return std::abs(x) <= 1.0; }));
}

TEST_CASE("dropout") {
  Tape t;
  Var x = t.constant(Tensor(Shape{1000}, 1.0));
  CHECK(dropout(x, 0.25, nullptr).value() == x.value());
  Rng rng(3);
  Var y = dropout(x, 0.25, &rng);
  std::size_t kept = 0;
  for (double v : y.value().values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
}

TEST_CASE("argmax breaks ties low") {
  const std::vector<double> v = {0.1, 0.4, 0.4, 0.1};
  CHECK(argmax(v) == 1);
  const std::vector<double> u = {0.25, 0.25, 0.25, 0.25};
  CHECK(argmax(u) == 0);
}

}  // namespace
}  // namespace subnav::num
