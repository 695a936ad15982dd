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

#include "subnav/harness.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace subnav::harness {
namespace {

using num::Rng;
using num::Tape;
using num::Tensor;
using num::Var;

struct Template {
  const char* text;
  int action;
};

constexpr Template kTemplates[] = {
    {"Walk forward past the sofa.", model::kForward},
    {"Go straight down the hallway.", model::kForward},
    {"Continue ahead to the kitchen.", model::kForward},
    {"Walk past the dining table.", model::kForward},
    {"Go through the open doorway.", model::kForward},
    {"Head toward the front door.", model::kForward},
    {"Turn left at the stairs.", model::kTurnLeft},
    {"Make a left into the bathroom.", model::kTurnLeft},
    {"Turn left near the potted plant.", model::kTurnLeft},
    {"Veer left around the counter.", model::kTurnLeft},
    {"Turn right at the fireplace.", model::kTurnRight},
    {"Make a right after the fridge.", model::kTurnRight},
    {"Turn right toward the window.", model::kTurnRight},
    {"Bear right by the bookshelf.", model::kTurnRight},
};
constexpr std::size_t kTemplateCount = std::size(kTemplates);

// Signatures depend only on the template, so they are shared by every
// episode that uses it.
constexpr std::uint64_t kSignatureSeed = 0x5EED5160ULL;
constexpr double kNoiseScale = 0.5;

void fill_normal(Tensor& t, Rng& rng, double scale) {
  for (double& v : t.values()) v = scale * rng.normal();
}

struct Signature {
  Tensor rgb, depth, rgb_cells, depth_cells;
};

Signature make_signature(std::size_t template_index,
                         const ModelConfig& config) {
  Rng rng = Rng(kSignatureSeed).fork(template_index);
  const std::size_t F = config.feature_dim;
  const std::size_t G = config.grid_cells;
  Signature s{Tensor({F}), Tensor({F}), Tensor({G, F}), Tensor({G, F})};
  fill_normal(s.rgb, rng, 1.0);
  fill_normal(s.depth, rng, 1.0);
  fill_normal(s.rgb_cells, rng, 1.0);
  fill_normal(s.depth_cells, rng, 1.0);
  return s;
}

Tensor noisy(const Tensor& base, Rng& rng) {
  Tensor t = base;
  for (double& v : t.values()) v += kNoiseScale * rng.normal();
  return t;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Pose apply_action(const Pose& pose, int action) {
  Pose next = pose;
  switch (action) {
    case model::kStop:
      break;
    case model::kForward: {
      double c = 0.0;
      double s = 0.0;
      const double h = model::normalize_heading(pose.heading);
      if (std::fmod(h, 90.0) == 0.0) {
        // Exact unit steps on the axes, so grid paths accumulate no drift.
        constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0};
        constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0};
        const auto q = static_cast<std::size_t>(h / 90.0);
        c = kCos[q];
        s = kSin[q];
      } else {
        const double rad = h * std::numbers::pi / 180.0;
        c = std::cos(rad);
        s = std::sin(rad);
      }
      next.x += kStepMeters * c;
      next.y += kStepMeters * s;
      break;
    }
    case model::kTurnLeft:
      next.heading = model::normalize_heading(pose.heading + kTurnDegrees);
      break;
    case model::kTurnRight:
      next.heading = model::normalize_heading(pose.heading - kTurnDegrees);
      break;
    default:
      throw std::out_of_range("action " + std::to_string(action) +
                              " outside [0, 4)");
  }
  return next;
}

double distance(const Pose& a, const Pose& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

Metrics metrics(std::span<const Pose> trajectory, const Pose& goal,
                double shortest) {
  if (trajectory.empty()) throw std::invalid_argument("metrics: empty trajectory");
  if (!(shortest > 0.0)) throw std::invalid_argument("metrics: shortest must be > 0");
  Metrics m;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    m.trajectory_length += distance(trajectory[i - 1], trajectory[i]);
  }
  m.navigation_error = distance(trajectory.back(), goal);
  m.success = m.navigation_error <= kSuccessRadius ? 1.0 : 0.0;
  m.spl = m.success * shortest / std::max(m.trajectory_length, shortest);
  return m;
}

const std::vector<std::string>& template_bank() {
  static const std::vector<std::string> bank = [] {
    std::vector<std::string> b;
    for (const Template& t : kTemplates) b.emplace_back(t.text);
    return b;
  }();
  return bank;
}

int template_action(std::size_t i) {
  if (i >= kTemplateCount) throw std::out_of_range("template index");
  return kTemplates[i].action;
}

const instr::Vocab& template_vocab() {
  static const instr::Vocab vocab = [] {
    std::vector<instr::InstructionRecord> records;
    for (const Template& t : kTemplates) {
      instr::InstructionRecord r;
      r.id = "t";
      r.instruction = t.text;
      records.push_back(std::move(r));
    }
    return instr::build_vocab(records, 1);
  }();
  return vocab;
}

SyntheticEpisode make_synthetic_episode(std::uint64_t seed, std::size_t n_subs,
                                        std::size_t steps,
                                        const ModelConfig& config) {
  if (n_subs == 0) throw std::invalid_argument("n_subs must be >= 1");
  if (steps == 0) throw std::invalid_argument("steps must be >= 1");
  config.validate();
  if (template_vocab().size() > config.vocab_size) {
    throw std::invalid_argument("vocab_size is smaller than the template vocabulary");
  }
  Rng rng(seed);
  SyntheticEpisode ep;
  ep.seed = seed;

  std::string text;
  for (std::size_t k = 0; k < n_subs; ++k) {
    std::size_t pick = rng.below(kTemplateCount);
    // Consecutive repeats would make two identical sub-instructions.
    while (k > 0 && pick == ep.templates.back()) pick = rng.below(kTemplateCount);
    ep.templates.push_back(pick);
    if (k > 0) text += ' ';
    text += kTemplates[pick].text;
  }
  ep.record.id = "synthetic-" + std::to_string(seed);
  ep.record.instruction = text;
  const fsa::Segmentation seg = fsa::segment_instruction(
      text, fsa::RefineRuleSet::defaults(), template_vocab());
  if (seg.sub_instructions.size() != n_subs) {
    throw std::logic_error("template bank produced " +
                           std::to_string(seg.sub_instructions.size()) +
                           " sub-instructions for " + std::to_string(n_subs) +
                           " templates");
  }
  ep.record.sub_instructions = seg.sub_instructions;
  ep.record.tokens = seg.tokens;
  ep.instruction_tokens = instr::vocab_tokenize(text, template_vocab());

  std::vector<Signature> sigs;
  for (std::size_t k : ep.templates) sigs.push_back(make_signature(k, config));

  ep.start.x = rng.uniform(-5.0, 5.0);
  ep.start.y = rng.uniform(-5.0, 5.0);
  ep.start.heading = kTurnDegrees * static_cast<double>(rng.below(24));
  Pose pose = ep.start;
  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t k = t * n_subs / steps;
    ep.sub_of_step.push_back(k);
    const int action =
        t + 1 == steps ? model::kStop : kTemplates[ep.templates[k]].action;
    ep.teacher.push_back(action);
    pose = apply_action(pose, action);

    Rng noise = rng.fork(t);
    Observation obs;
    obs.rgb_pooled = noisy(sigs[k].rgb, noise);
    obs.depth_pooled = noisy(sigs[k].depth, noise);
    obs.rgb_spatial = noisy(sigs[k].rgb_cells, noise);
    obs.depth_spatial = noisy(sigs[k].depth_cells, noise);
    ep.observations.push_back(std::move(obs));
  }
  ep.goal = pose;
  ep.shortest = std::max(distance(ep.start, ep.goal), kStepMeters);
  return ep;
}

EpisodeGraph forward_episode(Model& model, Tape& tape,
                             const SyntheticEpisode& episode, Mode mode,
                             Rng* dropout_rng) {
  if (episode.steps() == 0 || episode.observations.size() != episode.steps()) {
    throw std::invalid_argument("episode has no steps or mismatched observations");
  }
  model::Forward fwd(model, tape, dropout_rng);
  const model::PreparedInstruction instr =
      fwd.prepare(episode.instruction_tokens, episode.record.tokens);
  model::EpisodeState state = fwd.initial_state(episode.start);
  EpisodeGraph g;
  g.trajectory.push_back(state.pose);
  const bool forced = mode == Mode::kTeacherForced;
  const std::size_t T = episode.steps();
  const std::size_t cap = forced ? T : kPolicyStepCap;
  for (std::size_t t = 0; t < cap; ++t) {
    const Observation& obs = episode.observations[std::min(t, T - 1)];
    model::StepOutput out = fwd.step(state, obs, instr);
    StepRecord rec;
    rec.step = t;
    rec.predicted = out.decode.action;
    rec.action = forced ? episode.teacher[t] : rec.predicted;
    state.pose = apply_action(state.pose, rec.action);
    rec.pose = state.pose;
    rec.alpha = out.fusion.alpha.value().values();
    rec.dist = out.decode.dist.value().values();
    rec.progress = out.decode.progress.value()[0];
    fwd.set_previous_action(state, rec.action);

    g.alphas.push_back(out.fusion.alpha);
    g.logits.push_back(out.decode.logits);
    g.progress.push_back(out.decode.progress);
    g.trace.push_back(std::move(rec));
    g.trajectory.push_back(state.pose);
    if (!forced && g.trace.back().action == model::kStop) break;
  }
  return g;
}

LossGraph episode_losses(const EpisodeGraph& graph,
                         const SyntheticEpisode& episode,
                         const losses::CurveSpec& curve,
                         const losses::LossConfig& config, double lambda) {
  const std::size_t n = std::min(graph.trace.size(), episode.steps());
  if (n == 0) throw std::invalid_argument("episode_losses: no steps");
  const auto target = losses::teacher_progress(episode.steps());
  LossGraph l;
  l.action = losses::action_loss(std::span(graph.logits).first(n),
                                 std::span(episode.teacher).first(n),
                                 config.inflection_weight);
  l.peak = losses::pal_loss(std::span(graph.alphas).first(n), curve);
  l.progress = losses::progress_loss(std::span(graph.progress).first(n),
                                     std::span(target).first(n));
  l.total = losses::total_loss(l.action, l.peak, l.progress, lambda,
                               config.theta);
  return l;
}

EpisodeResult run_episode(Model& model, const SyntheticEpisode& episode,
                          Mode mode, const RunOptions& options) {
  Tape tape(false);
  EpisodeGraph g = forward_episode(model, tape, episode, mode);
  LossGraph l = episode_losses(g, episode, options.curve, options.loss,
                               options.lambda);
  EpisodeResult r;
  r.losses = {l.action.item(), l.peak.item(), l.progress.item()};
  r.metrics = metrics(g.trajectory, episode.goal, episode.shortest);
  const std::size_t n = std::min(g.trace.size(), episode.steps());
  std::size_t hits = 0;
  for (std::size_t t = 0; t < n; ++t) {
    hits += g.trace[t].predicted == episode.teacher[t];
  }
  r.agreement = static_cast<double>(hits) / static_cast<double>(n);
  r.trace = std::move(g.trace);
  r.trajectory = std::move(g.trajectory);
  return r;
}

void TrainConfig::validate() const {
  if (episodes == 0) throw std::invalid_argument("episodes must be >= 1");
  if (updates == 0) throw std::invalid_argument("updates must be >= 1");
  if (n_subs == 0) throw std::invalid_argument("n_subs must be >= 1");
  if (steps == 0) throw std::invalid_argument("steps must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  model.validate();
  curve.validate();
  loss.validate();
}

TrainResult train_smoke(Model& model, const TrainConfig& config,
                        const std::function<void(const CurvePoint&)>& on_update) {
  config.validate();
  if (!(model.config() == config.model)) {
    throw std::invalid_argument("train_smoke: model was built from another config");
  }
  model.init(config.seed);
  const Rng root(config.seed);
  std::vector<SyntheticEpisode> episodes;
  for (std::size_t i = 0; i < config.episodes; ++i) {
    episodes.push_back(make_synthetic_episode(root.fork(i).seed(), config.n_subs,
                                              config.steps, config.model));
  }
  RunOptions eval{config.curve, config.loss, 0.0};
  auto evaluate = [&](double& loss, double& agreement) {
    loss = 0.0;
    agreement = 0.0;
    for (const auto& ep : episodes) {
      EpisodeResult r = run_episode(model, ep, Mode::kTeacherForced, eval);
      loss += r.losses.action;
      agreement += r.agreement;
    }
    loss /= static_cast<double>(episodes.size());
    agreement /= static_cast<double>(episodes.size());
  };

  TrainResult result;
  double ignored = 0.0;
  evaluate(result.initial_action_loss, ignored);

  num::Adam adam(model.params(), config.adam);
  const std::size_t batch = std::min(config.batch_size, config.episodes);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Rng dropout_root = root.fork(0xD50F);
  for (std::size_t u = 0; u < config.updates; ++u) {
    CurvePoint point;
    point.update = u;
    point.lambda = losses::lambda_at(config.loss, u, config.updates);
    model.params().zero_grad();
    try {
      for (std::size_t j = 0; j < batch; ++j) {
        const SyntheticEpisode& ep = episodes[(u * batch + j) % episodes.size()];
        Tape tape;
        Rng dropout_rng = dropout_root.fork(u * batch + j);
        EpisodeGraph g = forward_episode(
            model, tape, ep, Mode::kTeacherForced,
            config.use_dropout ? &dropout_rng : nullptr);
        LossGraph l = episode_losses(g, ep, config.curve, config.loss, point.lambda);
        tape.backward(num::scale(l.total, inv_batch));
        point.action += l.action.item() * inv_batch;
        point.peak += l.peak.item() * inv_batch;
        point.progress += l.progress.item() * inv_batch;
      }
      point.total = losses::total_loss({point.action, point.peak, point.progress},
                                       point.lambda, config.loss.theta);
      adam.step();
    } catch (const num::NonFiniteError& e) {
      std::ostringstream os;
      os << "training diverged at update " << u << " (lambda " << point.lambda
         << ", partial losses action " << point.action << " peak "
         << point.peak << " progress " << point.progress << "): " << e.what();
      throw std::runtime_error(os.str());
    }
    result.curve.push_back(point);
    if (on_update) on_update(point);
  }
  evaluate(result.final_action_loss, result.final_agreement);
  return result;
}

void export_trace(std::span<const StepRecord> trace,
                  const std::filesystem::path& path) {
  const std::size_t n = trace.empty() ? 0 : trace.front().alpha.size();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw instr::IoError("cannot write trace " + path.string());
  out << "step,action,x,y,heading";
  for (std::size_t k = 0; k < n; ++k) out << ",alpha_" << k;
  out << '\n';
  for (const StepRecord& r : trace) {
    if (r.alpha.size() != n) {
      throw std::invalid_argument("export_trace: ragged attention rows");
    }
    out << r.step << ',' << r.action << ',' << format_double(r.pose.x) << ','
        << format_double(r.pose.y) << ',' << format_double(r.pose.heading);
    for (double a : r.alpha) out << ',' << format_double(a);
    out << '\n';
  }
  if (!out) throw instr::IoError("error writing trace " + path.string());
}

void export_learning_curve(std::span<const CurvePoint> curve,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw instr::IoError("cannot write learning curve " + path.string());
  out << "update,loss_total,loss_action,loss_peak,loss_progress,lambda\n";
  for (const CurvePoint& p : curve) {
    out << p.update << ',' << format_double(p.total) << ','
        << format_double(p.action) << ',' << format_double(p.peak) << ','
        << format_double(p.progress) << ',' << format_double(p.lambda) << '\n';
  }
  if (!out) throw instr::IoError("error writing learning curve " + path.string());
}

}  // namespace subnav::harness
