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

// Training objectives.
//
// Peak attention loss (PAL) pulls each sub-instruction attention row alpha_t
// towards a single-peak target beta_t centred on the row's own argmax k*:
//
//   beta_t = softmax(z),  z_k = curve(k - k*)
//   L_peak = (1/N) sum_t sum_k (alpha_tk - beta_tk)^2
//
// k* and beta are constants for differentiation. The action loss is an
// inflection-weighted cross-entropy against the teacher actions, the
// progress loss a mean squared error against t/T, and the total loss
//
//   L = L_action + lambda(u) L_peak + theta L_progress
//
// with lambda ramping linearly from 0 to lambda_max over the warmup.
//
// Every function here is pure. The plain versions work on doubles; the
// overloads taking Vars record the same arithmetic on a tape.

#ifndef SUBNAV_LOSSES_H_
#define SUBNAV_LOSSES_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subnav/autodiff.h"

namespace subnav::losses {

using num::Var;

enum class CurveKind { kGaussian, kConstant, kLinear, kQuadratic, kCubic };

inline constexpr CurveKind kAllCurveKinds[] = {
    CurveKind::kGaussian, CurveKind::kConstant, CurveKind::kLinear,
    CurveKind::kQuadratic, CurveKind::kCubic};

// "gaussian", "constant", "linear", "quadratic", "cubic".
std::string_view curve_name(CurveKind kind);
std::optional<CurveKind> parse_curve(std::string_view name);

// Off-peak logit of the constant curve.
inline constexpr double kConstantPenalty = 4.0;

struct CurveSpec {
  CurveKind kind = CurveKind::kGaussian;
  // Focusing ratio, used by the gaussian curve.
  double sigma = 0.6;

  // Throws std::invalid_argument unless sigma > 0 and finite.
  void validate() const;
};

struct LossConfig {
  double lambda_max = 0.4;
  double theta = 1.0;
  double inflection_weight = 3.2;
  double lambda_warmup_fraction = 0.5;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Target logit z for a distance d = k - k*.
double curve_logit(const CurveSpec& curve, double d);

struct ExpectedScore {
  std::vector<double> beta;
  std::size_t k_star = 0;
};

// k* = argmax alpha (lowest index on ties), beta = softmax over the curve.
ExpectedScore expected_score(std::span<const double> alpha,
                             const CurveSpec& curve);

// Rows are the alpha_t of one episode; all rows must have the same length.
using ScoreRows = std::vector<std::vector<double>>;

double pal_loss(const ScoreRows& alphas, const CurveSpec& curve);
// dL/dalpha_tk = (2/N)(alpha_tk - beta_tk).
ScoreRows pal_grad(const ScoreRows& alphas, const CurveSpec& curve);

// Plain gradient descent on a single attention row using pal_grad:
// alpha <- alpha - step_size * dL/dalpha. With 0 < step_size <= N/2 every
// iterate stays a convex combination of alpha and beta, so it remains a valid
// score vector. Returns the row after `steps` updates.
std::vector<double> pal_descent(std::vector<double> alpha,
                                const CurveSpec& curve, std::size_t steps,
                                double step_size);

// Entries strictly greater than each existing neighbour.
std::size_t count_local_maxima(std::span<const double> v);

// 1 at steps where the teacher action repeats, `weight` where it changes.
// Step 0 counts as a change.
std::vector<double> inflection_weights(std::span<const int> teacher,
                                       double weight);

// Rows are action distributions; -sum_t w_t log p_t[teacher_t] / sum_t w_t.
double action_loss(const ScoreRows& dists, std::span<const int> teacher,
                   double inflection_weight = 3.2);

double progress_loss(std::span<const double> progress,
                     std::span<const double> teacher_progress);

// t/T for t = 1..T.
std::vector<double> teacher_progress(std::size_t steps);

// lambda_max * min(1, u / (warmup_fraction * total_updates)).
double lambda_at(const LossConfig& config, std::size_t update,
                 std::size_t total_updates);

struct LossParts {
  double action = 0.0;
  double peak = 0.0;
  double progress = 0.0;
};

double total_loss(const LossParts& parts, double lambda, double theta);
double total_loss(const LossParts& parts, const LossConfig& config,
                  std::size_t update, std::size_t total_updates);

// Tape versions. alphas: one [N] Var per step.
Var pal_loss(std::span<const Var> alphas, const CurveSpec& curve);
// logits: one [A] Var per step, cross-entropy via log-softmax.
Var action_loss(std::span<const Var> logits, std::span<const int> teacher,
                double inflection_weight);
// progress: one single-element Var per step.
Var progress_loss(std::span<const Var> progress,
                  std::span<const double> teacher_progress);
Var total_loss(Var action, Var peak, Var progress, double lambda, double theta);

}  // namespace subnav::losses

#endif  // SUBNAV_LOSSES_H_
