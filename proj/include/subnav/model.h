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

// The navigation agent: instruction encoders, two vision memories, multi-level
// attention (MLA) over words and sub-instructions, spatial attention over the
// visual grid, and a recurrent action decoder with a progress head.
//
// Image encoders are out of scope. Observations carry pooled and per-cell
// features that are assumed to come from upstream RGB and depth encoders.
//
// Typical use, one tape per episode:
//
//   Model model(config);
//   model.init(seed);
//   Tape tape;
//   Forward fwd(model, tape);
//   PreparedInstruction instr = fwd.prepare(tokens, sub_tokens);
//   EpisodeState state = fwd.initial_state();
//   for (...) StepOutput out = fwd.step(state, obs, instr);

#ifndef SUBNAV_MODEL_H_
#define SUBNAV_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "subnav/autodiff.h"
#include "subnav/nn.h"

namespace subnav::model {

using num::HeadKeys;
using num::ParamStore;
using num::Rng;
using num::Tape;
using num::Tensor;
using num::Var;

inline constexpr int kStop = 0;
inline constexpr int kForward = 1;
inline constexpr int kTurnLeft = 2;
inline constexpr int kTurnRight = 3;

struct ModelConfig {
  std::size_t feature_dim = 256;
  std::size_t hidden_dim = 512;
  std::size_t heads = 8;
  std::size_t action_embed_dim = 32;
  double dropout = 0.25;
  std::size_t action_count = 4;
  // Token ids must be below vocab_size.
  std::size_t vocab_size = 1024;
  // Cells per spatial grid (each of rgb and depth).
  std::size_t grid_cells = 16;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// JSON object with the field names above. Missing fields keep their
// defaults; unknown fields and wrong types are rejected (FormatError).
std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);
void save_config(const ModelConfig& config, const std::filesystem::path& path);

// Position in meters, heading in degrees [0, 360); heading 0 faces +x and
// angles grow counterclockwise.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  friend bool operator==(const Pose&, const Pose&) = default;
};

// Maps any finite angle to [0, 360).
double normalize_heading(double degrees);

struct Observation {
  Tensor rgb_pooled;     // [feature_dim]
  Tensor depth_pooled;   // [feature_dim]
  Tensor rgb_spatial;    // [G, feature_dim]
  Tensor depth_spatial;  // [G, feature_dim]

  // Throws num::ShapeError / num::NonFiniteError.
  void validate(const ModelConfig& config) const;
};

struct InstructionFeatures {
  Var low;   // [L, feature_dim], one row per word
  Var high;  // [N, feature_dim], one row per sub-instruction
};

// Instruction features plus their attention key/value projections, computed
// once per episode.
struct PreparedInstruction {
  InstructionFeatures features;
  HeadKeys high_keys;
  HeadKeys low_keys;
};

struct EpisodeState {
  Var h_high;             // [hidden]
  Var h_low;              // [hidden]
  Var h_action;           // [hidden]
  Var prev_action_embed;  // [action_embed]
  // Previous action, or -1 before the first step.
  int prev_action = -1;
  std::size_t step = 0;
  Pose pose;
};

struct MemoryOutput {
  Var h_high;
  Var h_low;
};

struct FusionOutput {
  Var f_i;        // [hidden]
  Var alpha;      // [N], head-mean of the sub-instruction attention
  Var alpha_low;  // [L], head-mean of the word attention
};

struct DecodeOutput {
  Var h_action;
  Var logits;    // [action_count]
  Var dist;      // [action_count]
  int action = 0;
  Var progress;  // [1], in (0, 1)
};

struct StepOutput {
  FusionOutput fusion;
  num::Attention spatial;
  DecodeOutput decode;
};

class Model {
 public:
  // Creates every parameter, zero-filled. Throws if the config is invalid.
  explicit Model(ModelConfig config);

  // Uniform fan-in initialization from `seed`.
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  friend class Forward;

  ModelConfig config_;
  ParamStore params_;
  num::Parameter* embed_low_;
  num::Parameter* embed_high_;
  num::Parameter* action_embed_;  // [action_count + 1, A]; last row = start
  num::GruParams low_fwd_, low_bwd_;
  num::LinearParams low_proj_;
  num::LinearParams high_proj_;
  num::GruParams mem_high_, mem_low_;
  num::MhaParams mla_high_, mla_low_;
  num::LinearParams fuse_;
  num::LinearParams sp_q_, sp_k_rgb_, sp_k_depth_, sp_v_rgb_, sp_v_depth_, sp_o_;
  num::GruParams decoder_;
  num::LinearParams action_head_;
  num::LinearParams progress_head_;
};

// One forward pass of `model` recorded on `tape`. With a non-null
// `dropout_rng` dropout is active on instruction and visual features;
// otherwise the pass is deterministic evaluation.
class Forward {
 public:
  Forward(Model& model, Tape& tape, Rng* dropout_rng = nullptr);

  // tokens: word ids of the full instruction -> [L, feature_dim].
  Var encode_low(const std::vector<int>& tokens);
  // One id list per sub-instruction -> [N, feature_dim].
  Var encode_high(const std::vector<std::vector<int>>& subs);
  PreparedInstruction prepare(const std::vector<int>& tokens,
                              const std::vector<std::vector<int>>& subs);

  EpisodeState initial_state(const Pose& pose = {});
  Var action_embedding(int action);

  MemoryOutput memory_step(const EpisodeState& state, const Observation& obs);
  FusionOutput mla_fuse(Var h_high, Var h_low, const PreparedInstruction& instr);
  // Single-head attention over the 2G rgb and depth cells; scores [1, 2G].
  num::Attention spatial_attend(Var f_i, const Observation& obs);
  DecodeOutput decode_action(const EpisodeState& state, Var h_high, Var h_low,
                             Var f_i, Var f_v);

  // Runs memory, fusion, spatial attention and decoding, and advances the
  // recurrent parts of `state`. The caller then feeds the next previous
  // action with set_previous_action (the teacher's or the model's own).
  StepOutput step(EpisodeState& state, const Observation& obs,
                  const PreparedInstruction& instr);
  void set_previous_action(EpisodeState& state, int action);

  Tape& tape() { return tape_; }

 private:
  Var encode_tokens(Var table, const std::vector<int>& tokens);

  Model& m_;
  Tape& tape_;
  Rng* rng_;
  const ModelConfig& cfg_;
  num::MhaVars mla_high_, mla_low_;
  num::LinearVars fuse_;
  num::MhaVars spatial_;  // q and o only; keys are built per observation
  num::LinearVars sp_k_rgb_, sp_k_depth_, sp_v_rgb_, sp_v_depth_;
  num::GruVars mem_high_, mem_low_, decoder_;
  num::LinearVars action_head_, progress_head_;
};

}  // namespace subnav::model

#endif  // SUBNAV_MODEL_H_
