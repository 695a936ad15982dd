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

#include "subnav/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace subnav::gradcheck {
namespace {

using losses::ScoreRows;
using num::Rng;

constexpr double kSigmas[] = {0.5, 0.6, 0.8, 1.0};
constexpr std::size_t kSmallLength = 5;

std::vector<double> random_row(Rng& rng, std::size_t n) {
  std::vector<double> z(n);
  for (double& v : z) v = 2.0 * rng.normal();
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) s += (v = std::exp(v - m));
  for (double& v : z) v /= s;
  return z;
}

double frozen_pal(const ScoreRows& alphas, const ScoreRows& betas) {
  double s = 0.0;
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    for (std::size_t k = 0; k < alphas[t].size(); ++k) {
      const double d = alphas[t][k] - betas[t][k];
      s += d * d;
    }
  }
  return s / static_cast<double>(alphas.front().size());
}

}  // namespace

PalCheck check_pal(std::uint64_t seed, std::size_t cases) {
  if (cases == 0) throw std::invalid_argument("cases must be >= 1");
  Rng rng(seed);
  PalCheck out;
  for (std::size_t i = 0; i < cases; ++i) {
    const losses::CurveSpec curve{
        losses::kAllCurveKinds[i % std::size(losses::kAllCurveKinds)],
        kSigmas[(i / std::size(losses::kAllCurveKinds)) % std::size(kSigmas)]};
    const std::size_t n = 1 + rng.below(10);
    const std::size_t rows = 1 + rng.below(4);
    ScoreRows alphas;
    ScoreRows betas;
    for (std::size_t t = 0; t < rows; ++t) {
      alphas.push_back(random_row(rng, n));
      betas.push_back(losses::expected_score(alphas.back(), curve).beta);
    }
    const ScoreRows g = losses::pal_grad(alphas, curve);
    std::vector<double> analytic;
    std::vector<double> numeric;
    for (std::size_t t = 0; t < rows; ++t) {
      const auto fd = num::finite_diff(
          [&] { return frozen_pal(alphas, betas); }, alphas[t], 1e-4);
      analytic.insert(analytic.end(), g[t].begin(), g[t].end());
      numeric.insert(numeric.end(), fd.begin(), fd.end());
    }
    out.worst = std::max(out.worst, num::relative_error(analytic, numeric, 1e-4));
    ++out.cases;
  }
  return out;
}

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.feature_dim = 4;
  c.hidden_dim = 8;
  c.heads = 2;
  c.action_embed_dim = 3;
  c.dropout = 0.0;
  c.grid_cells = 2;
  c.vocab_size = harness::template_vocab().size();
  return c;
}

harness::SyntheticEpisode small_episode(std::uint64_t seed,
                                        const model::ModelConfig& config) {
  harness::SyntheticEpisode ep =
      harness::make_synthetic_episode(seed, 2, 3, config);
  ep.instruction_tokens.resize(kSmallLength);
  return ep;
}

ModelCheck check_model(std::uint64_t seed, double lambda) {
  const model::ModelConfig cfg = small_config();
  model::Model m(cfg);
  m.init(seed);
  const harness::SyntheticEpisode ep = small_episode(seed, cfg);
  const losses::CurveSpec curve;
  const losses::LossConfig loss;

  auto evaluate = [&](num::Tape& tape) {
    const harness::EpisodeGraph g = harness::forward_episode(
        m, tape, ep, harness::Mode::kTeacherForced);
    return harness::episode_losses(g, ep, curve, loss, lambda).total;
  };

  num::ParamStore& store = m.params();
  store.zero_grad();
  num::Tape tape;
  num::Var total = evaluate(tape);
  tape.backward(total);

  ModelCheck out;
  out.loss = total.item();
  for (std::size_t i = 0; i < store.size(); ++i) {
    num::Parameter& p = store[i];
    const auto fd = num::finite_diff(
        [&] {
          num::Tape eval(false);
          return evaluate(eval).item();
        },
        p.value.values(), 1e-5);
    const double err = num::relative_error(p.grad.values(), fd, 1e-4);
    out.tensors.push_back({p.name, p.value.size(), err});
    out.worst = std::max(out.worst, err);
  }
  return out;
}

}  // namespace subnav::gradcheck
