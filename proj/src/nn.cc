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

#include "subnav/nn.h"

#include <cmath>
#include <stdexcept>

namespace subnav::num {

LinearParams add_linear(ParamStore& store, const std::string& prefix,
                        std::size_t in, std::size_t out) {
  LinearParams p;
  p.w = &store.add(prefix + ".w", Shape{in, out}, in);
  p.b = &store.add(prefix + ".b", Shape{out}, in);
  return p;
}

LinearVars bind(Tape& tape, const LinearParams& p) {
  return LinearVars{tape.param(*p.w), tape.param(*p.b)};
}

Var apply(const LinearVars& l, Var x) { return linear(x, l.w, l.b); }

GruParams add_gru(ParamStore& store, const std::string& prefix,
                  std::size_t input, std::size_t hidden) {
  if (input == 0 || hidden == 0) {
    throw std::invalid_argument("GRU dims must be positive");
  }
  GruParams p;
  p.wx = &store.add(prefix + ".wx", Shape{input, 3 * hidden}, hidden);
  p.wh = &store.add(prefix + ".wh", Shape{hidden, 3 * hidden}, hidden);
  p.bx = &store.add(prefix + ".bx", Shape{3 * hidden}, hidden);
  p.bh = &store.add(prefix + ".bh", Shape{3 * hidden}, hidden);
  p.input = input;
  p.hidden = hidden;
  return p;
}

GruVars bind(Tape& tape, const GruParams& p) {
  return GruVars{tape.param(*p.wx), tape.param(*p.wh), tape.param(*p.bx),
                 tape.param(*p.bh), p.input, p.hidden};
}

Var gru_step(const GruVars& cell, Var x, Var h) {
  const std::size_t H = cell.hidden;
  if (x.value().rank() != 1 || x.size() != cell.input) {
    throw ShapeError("gru_step: input " + shape_string(x.shape()) +
                     ", cell expects [" + std::to_string(cell.input) + "]");
  }
  if (h.value().rank() != 1 || h.size() != H) {
    throw ShapeError("gru_step: state " + shape_string(h.shape()) +
                     ", cell expects [" + std::to_string(H) + "]");
  }
  Var gx = linear(x, cell.wx, cell.bx);
  Var gh = linear(h, cell.wh, cell.bh);
  Var r = sigmoid(add(slice(gx, 0, H), slice(gh, 0, H)));
  Var z = sigmoid(add(slice(gx, H, 2 * H), slice(gh, H, 2 * H)));
  Var n = tanh(add(slice(gx, 2 * H, 3 * H), mul(r, slice(gh, 2 * H, 3 * H))));
  return add(n, mul(z, sub(h, n)));
}

Var birnn_encode(const GruVars& fwd, const GruVars& bwd, Var seq) {
  if (seq.value().rank() != 2) {
    throw ShapeError("birnn_encode: expected [L, in], got " +
                     shape_string(seq.shape()));
  }
  const std::size_t L = seq.value().dim(0);
  if (L == 0) throw ShapeError("birnn_encode: empty sequence");
  Tape& tape = *seq.tape();
  std::vector<Var> rows(L);
  for (std::size_t i = 0; i < L; ++i) rows[i] = row(seq, i);

  std::vector<Var> f(L);
  Var h = tape.constant(Tensor(Shape{fwd.hidden}));
  for (std::size_t i = 0; i < L; ++i) f[i] = h = gru_step(fwd, rows[i], h);

  std::vector<Var> b(L);
  h = tape.constant(Tensor(Shape{bwd.hidden}));
  for (std::size_t i = L; i-- > 0;) b[i] = h = gru_step(bwd, rows[i], h);

  std::vector<Var> out(L);
  for (std::size_t i = 0; i < L; ++i) out[i] = concat({f[i], b[i]});
  return stack(out);
}

MhaParams add_mha(ParamStore& store, const std::string& prefix,
                  std::size_t query_dim, std::size_t key_dim,
                  std::size_t model_dim, std::size_t heads) {
  if (heads == 0 || model_dim == 0 || model_dim % heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(model_dim) +
                                " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  MhaParams p;
  p.q = add_linear(store, prefix + ".q", query_dim, model_dim);
  p.k = add_linear(store, prefix + ".k", key_dim, model_dim);
  p.v = add_linear(store, prefix + ".v", key_dim, model_dim);
  p.o = add_linear(store, prefix + ".o", model_dim, model_dim);
  p.model_dim = model_dim;
  p.heads = heads;
  return p;
}

MhaVars bind(Tape& tape, const MhaParams& p) {
  return MhaVars{bind(tape, p.q), bind(tape, p.k), bind(tape, p.v),
                 bind(tape, p.o), p.model_dim, p.heads};
}

HeadKeys split_heads(Var keys, Var values, std::size_t heads) {
  const Tensor& k = keys.value();
  if (k.rank() != 2 || values.shape() != k.shape()) {
    throw ShapeError("split_heads: keys " + shape_string(k.shape()) +
                     ", values " + shape_string(values.shape()));
  }
  const std::size_t m = k.dim(0);
  const std::size_t d = k.dim(1);
  if (m == 0) throw ShapeError("attention over zero keys");
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(d) +
                                " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  HeadKeys out;
  out.count = m;
  if (heads == 1) {
    out.keys.push_back(keys);
    out.values.push_back(values);
    return out;
  }
  const std::size_t dh = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    out.keys.push_back(cols(keys, h * dh, (h + 1) * dh));
    out.values.push_back(cols(values, h * dh, (h + 1) * dh));
  }
  return out;
}

HeadKeys prepare_keys(const MhaVars& mha, Var keys, Var values) {
  return split_heads(apply(mha.k, keys), apply(mha.v, values), mha.heads);
}

Attention attend(const MhaVars& mha, Var query, const HeadKeys& keys) {
  if (keys.keys.size() != mha.heads) {
    throw ShapeError("attend: keys split for " +
                     std::to_string(keys.keys.size()) + " heads, block has " +
                     std::to_string(mha.heads));
  }
  Var q = apply(mha.q, query);
  const std::size_t dh = mha.model_dim / mha.heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  std::vector<Var> scores;
  for (std::size_t h = 0; h < mha.heads; ++h) {
    Var qh = mha.heads == 1 ? q : slice(q, h * dh, (h + 1) * dh);
    Var a = softmax(scale(matvec(keys.keys[h], qh), scale_factor));
    scores.push_back(a);
    outs.push_back(vecmat(a, keys.values[h]));
  }
  Var joined = mha.heads == 1 ? outs.front() : concat(outs);
  return Attention{apply(mha.o, joined), stack(scores)};
}

Attention multi_head_attention(const MhaVars& mha, Var query, Var keys,
                               Var values) {
  return attend(mha, query, prepare_keys(mha, keys, values));
}

Var dropout(Var x, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Tensor mask(x.shape());
  const double keep = 1.0 - rate;
  for (double& m : mask.values()) m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, x.tape()->constant(std::move(mask)));
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace subnav::num
