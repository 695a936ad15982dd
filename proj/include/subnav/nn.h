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

// Layers built from autodiff primitives: affine maps, GRU cells, a
// bidirectional GRU encoder and multi-head attention.
//
// Each layer comes in two halves. A *Params struct points at Parameters in a
// ParamStore and is created once per model; bind() turns it into Vars on a
// particular Tape for one forward pass.

#ifndef SUBNAV_NN_H_
#define SUBNAV_NN_H_

#include <cstddef>
#include <string>
#include <vector>

#include "subnav/autodiff.h"

namespace subnav::num {

struct LinearParams {
  Parameter* w = nullptr;  // [in, out]
  Parameter* b = nullptr;  // [out]
};

struct LinearVars {
  Var w;
  Var b;
};

LinearParams add_linear(ParamStore& store, const std::string& prefix,
                        std::size_t in, std::size_t out);
LinearVars bind(Tape& tape, const LinearParams& p);
Var apply(const LinearVars& l, Var x);

// Gate layout along the 3H axis: reset, update, candidate.
struct GruParams {
  Parameter* wx = nullptr;  // [in, 3H]
  Parameter* wh = nullptr;  // [H, 3H]
  Parameter* bx = nullptr;  // [3H]
  Parameter* bh = nullptr;  // [3H]
  std::size_t input = 0;
  std::size_t hidden = 0;
};

struct GruVars {
  Var wx, wh, bx, bh;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

GruParams add_gru(ParamStore& store, const std::string& prefix,
                  std::size_t input, std::size_t hidden);
GruVars bind(Tape& tape, const GruParams& p);

// r = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
// z = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
// n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
// h' = (1 - z) * n + z * h
Var gru_step(const GruVars& cell, Var x, Var h);

// seq [L, in] -> [L, fwd.hidden + bwd.hidden]. Row i holds the forward state
// after reading rows 0..i and the backward state after reading rows L-1..i.
// Both directions start from zeros.
Var birnn_encode(const GruVars& fwd, const GruVars& bwd, Var seq);

struct MhaParams {
  LinearParams q;  // [query_dim, d]
  LinearParams k;  // [key_dim, d]
  LinearParams v;  // [key_dim, d]
  LinearParams o;  // [d, d]
  std::size_t model_dim = 0;
  std::size_t heads = 1;
};

struct MhaVars {
  LinearVars q, k, v, o;
  std::size_t model_dim = 0;
  std::size_t heads = 1;
};

// Throws std::invalid_argument unless model_dim % heads == 0.
MhaParams add_mha(ParamStore& store, const std::string& prefix,
                  std::size_t query_dim, std::size_t key_dim,
                  std::size_t model_dim, std::size_t heads);
MhaVars bind(Tape& tape, const MhaParams& p);

// Projected keys and values split per head, reusable across queries.
struct HeadKeys {
  std::vector<Var> keys;    // heads x [m, d / heads]
  std::vector<Var> values;  // heads x [m, d / heads]
  std::size_t count = 0;    // m
};

// Splits already-projected keys/values [m, d] into heads.
HeadKeys split_heads(Var keys, Var values, std::size_t heads);
// Projects raw keys/values [m, key_dim] with the block's K/V maps.
HeadKeys prepare_keys(const MhaVars& mha, Var keys, Var values);

struct Attention {
  Var output;  // [d]
  Var scores;  // [heads, m], rows sum to 1
};

// Scaled dot-product attention per head with scale 1/sqrt(d / heads); head
// outputs are concatenated and passed through the output projection.
Attention attend(const MhaVars& mha, Var query, const HeadKeys& keys);
Attention multi_head_attention(const MhaVars& mha, Var query, Var keys,
                               Var values);

// Inverted dropout: each entry is zeroed with probability `rate` and the
// survivors are scaled by 1/(1 - rate). Identity when rng is null or rate is
// 0, so evaluation passes are exact.
Var dropout(Var x, double rate, Rng* rng);

// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);

}  // namespace subnav::num

#endif  // SUBNAV_NN_H_
