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

// Episode plumbing around the model: kinematics, navigation metrics,
// synthetic episodes, the step loop, a small trainer and trace export.
//
// Synthetic episodes stand in for simulator data. The instruction is a chain
// of one-sentence sub-instructions drawn from a fixed template bank; each
// template names one motion primitive (forward, left or right). Step t of a
// T-step episode belongs to sub-instruction floor(t * N / T): its teacher
// action is that template's primitive (the last step is stop) and its
// observation features are the template's fixed signature plus per-step
// noise. Attention that tracks the current sub-instruction is therefore
// learnable from the observations alone.

#ifndef SUBNAV_HARNESS_H_
#define SUBNAV_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "subnav/fsa.h"
#include "subnav/instr.h"
#include "subnav/losses.h"
#include "subnav/model.h"
#include "subnav/optim.h"

namespace subnav::harness {

using model::Model;
using model::ModelConfig;
using model::Observation;
using model::Pose;

inline constexpr double kStepMeters = 0.25;
inline constexpr double kTurnDegrees = 15.0;
inline constexpr double kSuccessRadius = 3.0;
inline constexpr std::size_t kPolicyStepCap = 500;

// 0 = stop, 1 = forward 0.25 m, 2 = turn left 15 deg, 3 = turn right 15 deg.
// Throws std::out_of_range for any other index.
Pose apply_action(const Pose& pose, int action);

double distance(const Pose& a, const Pose& b);

struct Metrics {
  double trajectory_length = 0.0;  // TL
  double navigation_error = 0.0;   // NE
  double success = 0.0;            // SR, 0 or 1
  double spl = 0.0;                // SPL
};

// trajectory[0] is the start pose. Throws std::invalid_argument if the
// trajectory is empty or shortest <= 0.
Metrics metrics(std::span<const Pose> trajectory, const Pose& goal,
                double shortest);

struct SyntheticEpisode {
  std::uint64_t seed = 0;
  instr::InstructionRecord record;  // segmented
  std::vector<int> instruction_tokens;
  std::vector<std::size_t> templates;   // template index per sub
  std::vector<std::size_t> sub_of_step; // floor(t * N / T)
  std::vector<Observation> observations;  // one per teacher step
  std::vector<int> teacher;
  Pose start;
  Pose goal;
  double shortest = 0.0;

  std::size_t steps() const { return teacher.size(); }
  std::size_t sub_count() const { return record.sub_instructions.size(); }
};

// The template bank and the vocabulary covering it.
const std::vector<std::string>& template_bank();
// Primitive action of template i.
int template_action(std::size_t i);
const instr::Vocab& template_vocab();

// Deterministic in (seed, n_subs, steps, config.feature_dim,
// config.grid_cells). Throws std::invalid_argument if n_subs or steps is 0.
SyntheticEpisode make_synthetic_episode(std::uint64_t seed, std::size_t n_subs,
                                        std::size_t steps,
                                        const ModelConfig& config);

enum class Mode { kTeacherForced, kPolicy };

struct StepRecord {
  std::size_t step = 0;
  // Action executed at this step: the teacher's under teacher forcing, the
  // model's own in policy mode.
  int action = 0;
  int predicted = 0;
  Pose pose;  // after executing `action`
  std::vector<double> alpha;
  std::vector<double> dist;
  double progress = 0.0;
};

// The per-step graph of one episode, left on the caller's tape.
struct EpisodeGraph {
  std::vector<num::Var> alphas;
  std::vector<num::Var> logits;
  std::vector<num::Var> progress;
  std::vector<StepRecord> trace;
  std::vector<Pose> trajectory;  // start pose first
};

// Runs the step loop on `tape`. Teacher forcing feeds the teacher action back
// and runs exactly T steps; policy mode feeds the model's action and stops
// after it predicts stop or after kPolicyStepCap steps (observations past T
// repeat the last one).
EpisodeGraph forward_episode(Model& model, num::Tape& tape,
                             const SyntheticEpisode& episode, Mode mode,
                             num::Rng* dropout_rng = nullptr);

struct LossGraph {
  num::Var action;
  num::Var peak;
  num::Var progress;
  num::Var total;
};

// Loss terms over the first min(steps taken, T) steps of `graph`.
LossGraph episode_losses(const EpisodeGraph& graph,
                         const SyntheticEpisode& episode,
                         const losses::CurveSpec& curve,
                         const losses::LossConfig& config, double lambda);

struct EpisodeResult {
  std::vector<StepRecord> trace;
  std::vector<Pose> trajectory;
  losses::LossParts losses;
  Metrics metrics;
  // Fraction of scored steps whose argmax action equals the teacher action.
  double agreement = 0.0;
};

struct RunOptions {
  losses::CurveSpec curve;
  losses::LossConfig loss;
  double lambda = 0.4;
};

// Evaluation run (no dropout, no gradients).
EpisodeResult run_episode(Model& model, const SyntheticEpisode& episode,
                          Mode mode, const RunOptions& options = {});

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t episodes = 1;
  std::size_t updates = 300;
  std::size_t n_subs = 3;
  std::size_t steps = 8;
  std::size_t batch_size = 5;
  bool use_dropout = true;
  ModelConfig model;
  losses::CurveSpec curve;
  losses::LossConfig loss;
  num::AdamConfig adam;

  void validate() const;
};

struct CurvePoint {
  std::size_t update = 0;
  double total = 0.0;
  double action = 0.0;
  double peak = 0.0;
  double progress = 0.0;
  double lambda = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  // Teacher-forced evaluation over the training episodes, before the first
  // and after the last update.
  double initial_action_loss = 0.0;
  double final_action_loss = 0.0;
  double final_agreement = 0.0;

  double action_loss_drop() const {
    return 1.0 - final_action_loss / initial_action_loss;
  }
};

// Initializes `model` from config.seed, builds config.episodes synthetic
// episodes and runs config.updates Adam steps on the teacher-forced total
// loss. Each update averages over min(batch_size, episodes) episodes taken
// round-robin. Throws std::runtime_error with the update index and loss parts
// if the loss stops being finite. `on_update` (optional) sees every point.
TrainResult train_smoke(Model& model, const TrainConfig& config,
                        const std::function<void(const CurvePoint&)>& on_update = {});

// CSV `step,action,x,y,heading,alpha_0..alpha_{N-1}`, one row per step.
void export_trace(std::span<const StepRecord> trace,
                  const std::filesystem::path& path);
// CSV `update,loss_total,loss_action,loss_peak,loss_progress,lambda`.
void export_learning_curve(std::span<const CurvePoint> curve,
                           const std::filesystem::path& path);

}  // namespace subnav::harness

#endif  // SUBNAV_HARNESS_H_
