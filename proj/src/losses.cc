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

#include "subnav/losses.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "subnav/nn.h"

namespace subnav::losses {
namespace {

using num::Tensor;

void check_rows(const ScoreRows& rows, const char* what) {
  if (rows.empty()) throw std::invalid_argument(std::string(what) + ": no rows");
  const std::size_t n = rows.front().size();
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty row");
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != n) {
      throw std::invalid_argument(std::string(what) + ": row " +
                                  std::to_string(t) + " has " +
                                  std::to_string(rows[t].size()) +
                                  " entries, row 0 has " + std::to_string(n));
    }
  }
}

void check_teacher(std::span<const int> teacher, std::size_t actions) {
  for (int a : teacher) {
    if (a < 0 || static_cast<std::size_t>(a) >= actions) {
      throw std::out_of_range("teacher action " + std::to_string(a) +
                              " outside [0, " + std::to_string(actions) + ")");
    }
  }
}

}  // namespace

std::string_view curve_name(CurveKind kind) {
  switch (kind) {
    case CurveKind::kGaussian:
      return "gaussian";
    case CurveKind::kConstant:
      return "constant";
    case CurveKind::kLinear:
      return "linear";
    case CurveKind::kQuadratic:
      return "quadratic";
    case CurveKind::kCubic:
      return "cubic";
  }
  return "unknown";
}

std::optional<CurveKind> parse_curve(std::string_view name) {
  for (CurveKind k : kAllCurveKinds) {
    if (curve_name(k) == name) return k;
  }
  return std::nullopt;
}

void CurveSpec::validate() const {
  if (!(std::isfinite(sigma) && sigma > 0.0)) {
    throw std::invalid_argument("sigma must be > 0");
  }
}

void LossConfig::validate() const {
  if (!(std::isfinite(lambda_max) && lambda_max >= 0.0)) {
    throw std::invalid_argument("lambda_max must be >= 0");
  }
  if (!(std::isfinite(theta) && theta >= 0.0)) {
    throw std::invalid_argument("theta must be >= 0");
  }
  if (!(std::isfinite(inflection_weight) && inflection_weight >= 1.0)) {
    throw std::invalid_argument("inflection_weight must be >= 1");
  }
  if (!(lambda_warmup_fraction >= 0.0 && lambda_warmup_fraction <= 1.0)) {
    throw std::invalid_argument("lambda_warmup_fraction must be in [0, 1]");
  }
}

double curve_logit(const CurveSpec& curve, double d) {
  const double a = std::abs(d);
  switch (curve.kind) {
    case CurveKind::kGaussian:
      return -(d * d) / (2.0 * curve.sigma * curve.sigma);
    case CurveKind::kConstant:
      return a == 0.0 ? 0.0 : -kConstantPenalty;
    case CurveKind::kLinear:
      return -a;
    case CurveKind::kQuadratic:
      return -a * a;
    case CurveKind::kCubic:
      return -a * a * a;
  }
  return 0.0;
}

ExpectedScore expected_score(std::span<const double> alpha,
                             const CurveSpec& curve) {
  curve.validate();
  if (alpha.empty()) throw std::invalid_argument("expected_score: empty alpha");
  for (double a : alpha) {
    if (!std::isfinite(a) || a < 0.0) {
      throw std::invalid_argument("expected_score: alpha must be finite and >= 0");
    }
  }
  ExpectedScore out;
  out.k_star = num::argmax(alpha);
  out.beta.resize(alpha.size());
  // The largest logit is 0 at k*, so no max shift is needed.
  double z = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double d = static_cast<double>(k) - static_cast<double>(out.k_star);
    z += out.beta[k] = std::exp(curve_logit(curve, d));
  }
  for (double& b : out.beta) b /= z;
  return out;
}

double pal_loss(const ScoreRows& alphas, const CurveSpec& curve) {
  check_rows(alphas, "pal_loss");
  const double n = static_cast<double>(alphas.front().size());
  double total = 0.0;
  for (const auto& row : alphas) {
    const ExpectedScore es = expected_score(row, curve);
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double d = row[k] - es.beta[k];
      total += d * d;
    }
  }
  return total / n;
}

ScoreRows pal_grad(const ScoreRows& alphas, const CurveSpec& curve) {
  check_rows(alphas, "pal_grad");
  const double n = static_cast<double>(alphas.front().size());
  ScoreRows grad;
  grad.reserve(alphas.size());
  for (const auto& row : alphas) {
    const ExpectedScore es = expected_score(row, curve);
    std::vector<double> g(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      g[k] = 2.0 / n * (row[k] - es.beta[k]);
    }
    grad.push_back(std::move(g));
  }
  return grad;
}

std::vector<double> pal_descent(std::vector<double> alpha,
                                const CurveSpec& curve, std::size_t steps,
                                double step_size) {
  const double n = static_cast<double>(alpha.size());
  if (!(step_size > 0.0 && step_size <= n / 2.0)) {
    throw std::invalid_argument("pal_descent: step_size must be in (0, N/2]");
  }
  ScoreRows rows{std::move(alpha)};
  for (std::size_t i = 0; i < steps; ++i) {
    const ScoreRows g = pal_grad(rows, curve);
    for (std::size_t k = 0; k < rows[0].size(); ++k) {
      // Clamp the rounding residue that can leave a tiny negative.
      rows[0][k] = std::max(0.0, rows[0][k] - step_size * g[0][k]);
    }
  }
  return std::move(rows[0]);
}

std::size_t count_local_maxima(std::span<const double> v) {
  std::size_t c = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const bool left = k == 0 || v[k] > v[k - 1];
    const bool right = k + 1 == v.size() || v[k] > v[k + 1];
    c += left && right;
  }
  return c;
}

std::vector<double> inflection_weights(std::span<const int> teacher,
                                       double weight) {
  std::vector<double> w(teacher.size(), 1.0);
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    if (t == 0 || teacher[t] != teacher[t - 1]) w[t] = weight;
  }
  return w;
}

double action_loss(const ScoreRows& dists, std::span<const int> teacher,
                   double inflection_weight) {
  check_rows(dists, "action_loss");
  if (dists.size() != teacher.size()) {
    throw std::invalid_argument("action_loss: " + std::to_string(dists.size()) +
                                " distributions for " +
                                std::to_string(teacher.size()) + " actions");
  }
  check_teacher(teacher, dists.front().size());
  const auto w = inflection_weights(teacher, inflection_weight);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    num -= w[t] * std::log(dists[t][static_cast<std::size_t>(teacher[t])]);
    den += w[t];
  }
  return num / den;
}

double progress_loss(std::span<const double> progress,
                     std::span<const double> teacher) {
  if (progress.size() != teacher.size()) {
    throw std::invalid_argument("progress_loss: length mismatch " +
                                std::to_string(progress.size()) + " vs " +
                                std::to_string(teacher.size()));
  }
  if (progress.empty()) throw std::invalid_argument("progress_loss: empty input");
  double s = 0.0;
  for (std::size_t t = 0; t < progress.size(); ++t) {
    const double d = progress[t] - teacher[t];
    s += d * d;
  }
  return s / static_cast<double>(progress.size());
}

std::vector<double> teacher_progress(std::size_t steps) {
  std::vector<double> p(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    p[t] = static_cast<double>(t + 1) / static_cast<double>(steps);
  }
  return p;
}

double lambda_at(const LossConfig& config, std::size_t update,
                 std::size_t total_updates) {
  if (total_updates == 0) {
    throw std::invalid_argument("total_updates must be >= 1");
  }
  const double warmup =
      config.lambda_warmup_fraction * static_cast<double>(total_updates);
  if (warmup <= 0.0) return config.lambda_max;
  return config.lambda_max *
         std::min(1.0, static_cast<double>(update) / warmup);
}

double total_loss(const LossParts& parts, double lambda, double theta) {
  return parts.action + lambda * parts.peak + theta * parts.progress;
}

double total_loss(const LossParts& parts, const LossConfig& config,
                  std::size_t update, std::size_t total_updates) {
  return total_loss(parts, lambda_at(config, update, total_updates),
                    config.theta);
}

Var pal_loss(std::span<const Var> alphas, const CurveSpec& curve) {
  if (alphas.empty()) throw std::invalid_argument("pal_loss: no rows");
  num::Tape& tape = *alphas.front().tape();
  const std::size_t n = alphas.front().size();
  std::vector<Var> terms;
  terms.reserve(alphas.size());
  for (Var a : alphas) {
    if (a.value().rank() != 1 || a.size() != n) {
      throw std::invalid_argument("pal_loss: ragged attention rows");
    }
    const ExpectedScore es = expected_score(a.value().values(), curve);
    Var beta = tape.constant(Tensor::vector(es.beta));
    terms.push_back(num::sum(num::square(num::sub(a, beta))));
  }
  Var total = terms.size() == 1 ? terms.front() : num::sum(num::concat(terms));
  return num::scale(total, 1.0 / static_cast<double>(n));
}

Var action_loss(std::span<const Var> logits, std::span<const int> teacher,
                double inflection_weight) {
  if (logits.empty()) throw std::invalid_argument("action_loss: no steps");
  if (logits.size() != teacher.size()) {
    throw std::invalid_argument("action_loss: " + std::to_string(logits.size()) +
                                " steps for " + std::to_string(teacher.size()) +
                                " actions");
  }
  check_teacher(teacher, logits.front().size());
  const auto w = inflection_weights(teacher, inflection_weight);
  double den = 0.0;
  for (double v : w) den += v;
  std::vector<Var> terms;
  terms.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    Var lp = num::pick(num::log_softmax(logits[t]),
                       static_cast<std::size_t>(teacher[t]));
    terms.push_back(num::scale(lp, -w[t] / den));
  }
  return terms.size() == 1 ? terms.front() : num::sum(num::concat(terms));
}

Var progress_loss(std::span<const Var> progress,
                  std::span<const double> teacher) {
  if (progress.empty()) throw std::invalid_argument("progress_loss: no steps");
  if (progress.size() != teacher.size()) {
    throw std::invalid_argument("progress_loss: length mismatch");
  }
  num::Tape& tape = *progress.front().tape();
  Var pred = num::concat(progress);
  Var target = tape.constant(
      Tensor::vector(std::vector<double>(teacher.begin(), teacher.end())));
  return num::mean(num::square(num::sub(pred, target)));
}

Var total_loss(Var action, Var peak, Var progress, double lambda, double theta) {
  return num::add(num::add(action, num::scale(peak, lambda)),
                  num::scale(progress, theta));
}

}  // namespace subnav::losses
