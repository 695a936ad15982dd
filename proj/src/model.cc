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

#include "subnav/model.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "subnav/checkpoint.h"
#include "subnav/instr.h"

namespace subnav::model {
using instr::FormatError;
using instr::IoError;

namespace {

using num::Shape;
using num::ShapeError;

void require_positive(std::size_t v, const char* field) {
  if (v == 0) throw std::invalid_argument(std::string(field) + " must be >= 1");
}

void require_shape(const Tensor& t, const Shape& want, const char* field) {
  if (t.shape() != want) {
    throw ShapeError(std::string(field) + " has shape " +
                     num::shape_string(t.shape()) + ", expected " +
                     num::shape_string(want));
  }
  t.require_finite(field);
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(feature_dim, "feature_dim");
  require_positive(hidden_dim, "hidden_dim");
  require_positive(heads, "heads");
  require_positive(action_embed_dim, "action_embed_dim");
  require_positive(action_count, "action_count");
  require_positive(vocab_size, "vocab_size");
  require_positive(grid_cells, "grid_cells");
  if (hidden_dim % heads != 0) {
    throw std::invalid_argument("hidden_dim " + std::to_string(hidden_dim) +
                                " is not divisible by heads " +
                                std::to_string(heads));
  }
  // The word encoder splits hidden_dim between its two directions.
  if (hidden_dim % 2 != 0) {
    throw std::invalid_argument("hidden_dim must be even");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("dropout must be in [0, 1)");
  }
}

std::string config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["feature_dim"] = c.feature_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["heads"] = c.heads;
  j["action_embed_dim"] = c.action_embed_dim;
  j["dropout"] = c.dropout;
  j["action_count"] = c.action_count;
  j["vocab_size"] = c.vocab_size;
  j["grid_cells"] = c.grid_cells;
  return j.dump(2) + "\n";
}

ModelConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config: expected a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    auto count = [&](std::size_t& field) {
      if (!value.is_number_unsigned()) {
        throw FormatError("config: " + key + " must be a non-negative integer");
      }
      field = value.get<std::size_t>();
    };
    if (key == "feature_dim") {
      count(c.feature_dim);
    } else if (key == "hidden_dim") {
      count(c.hidden_dim);
    } else if (key == "heads") {
      count(c.heads);
    } else if (key == "action_embed_dim") {
      count(c.action_embed_dim);
    } else if (key == "action_count") {
      count(c.action_count);
    } else if (key == "vocab_size") {
      count(c.vocab_size);
    } else if (key == "grid_cells") {
      count(c.grid_cells);
    } else if (key == "dropout") {
      if (!value.is_number()) throw FormatError("config: dropout must be a number");
      c.dropout = value.get<double>();
    } else {
      throw FormatError("config: unknown field " + key);
    }
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const ModelConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config " + path.string());
  out << config_to_json(config);
  if (!out) throw IoError("error writing config " + path.string());
}

double normalize_heading(double degrees) {
  double h = std::fmod(degrees, 360.0);
  if (h < 0.0) h += 360.0;
  // fmod of a tiny negative value can round up to exactly 360.
  if (h >= 360.0) h = 0.0;
  return h;
}

void Observation::validate(const ModelConfig& c) const {
  require_shape(rgb_pooled, Shape{c.feature_dim}, "rgb_pooled");
  require_shape(depth_pooled, Shape{c.feature_dim}, "depth_pooled");
  if (rgb_spatial.rank() != 2 || rgb_spatial.dim(0) == 0) {
    throw ShapeError("rgb_spatial must be [G, feature_dim] with G >= 1");
  }
  const std::size_t g = rgb_spatial.dim(0);
  require_shape(rgb_spatial, Shape{g, c.feature_dim}, "rgb_spatial");
  require_shape(depth_spatial, Shape{g, c.feature_dim}, "depth_spatial");
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  const std::size_t F = config_.feature_dim;
  const std::size_t H = config_.hidden_dim;
  const std::size_t A = config_.action_embed_dim;
  const std::size_t V = config_.vocab_size;

  embed_low_ = &params_.add("embed_low", Shape{V, F}, 1);
  low_fwd_ = num::add_gru(params_, "low.fwd", F, H / 2);
  low_bwd_ = num::add_gru(params_, "low.bwd", F, H / 2);
  low_proj_ = num::add_linear(params_, "low.proj", H, F);

  embed_high_ = &params_.add("embed_high", Shape{V, F}, 1);
  high_proj_ = num::add_linear(params_, "high.proj", F, F);

  action_embed_ =
      &params_.add("action_embed", Shape{config_.action_count + 1, A}, 1);
  mem_high_ = num::add_gru(params_, "mem_high", 2 * F + A, H);
  mem_low_ = num::add_gru(params_, "mem_low", 2 * F + A, H);

  mla_high_ = num::add_mha(params_, "mla.high", H, F, H, config_.heads);
  mla_low_ = num::add_mha(params_, "mla.low", H, F, H, config_.heads);
  fuse_ = num::add_linear(params_, "mla.fuse", 2 * H, H);

  sp_q_ = num::add_linear(params_, "spatial.q", H, H);
  sp_k_rgb_ = num::add_linear(params_, "spatial.k_rgb", F, H);
  sp_k_depth_ = num::add_linear(params_, "spatial.k_depth", F, H);
  sp_v_rgb_ = num::add_linear(params_, "spatial.v_rgb", F, H);
  sp_v_depth_ = num::add_linear(params_, "spatial.v_depth", F, H);
  sp_o_ = num::add_linear(params_, "spatial.o", H, H);

  decoder_ = num::add_gru(params_, "decoder", 4 * H + A, H);
  action_head_ = num::add_linear(params_, "action_head", H, config_.action_count);
  progress_head_ = num::add_linear(params_, "progress_head", H, 1);
}

void Model::init(std::uint64_t seed) {
  Rng rng(seed);
  params_.init_uniform(rng);
}

void Model::save(const std::filesystem::path& path) const {
  num::save_checkpoint(params_, path);
}

void Model::load(const std::filesystem::path& path) {
  num::load_checkpoint(params_, path);
}

Forward::Forward(Model& model, Tape& tape, Rng* dropout_rng)
    : m_(model), tape_(tape), rng_(dropout_rng), cfg_(model.config_) {
  mla_high_ = num::bind(tape, model.mla_high_);
  mla_low_ = num::bind(tape, model.mla_low_);
  fuse_ = num::bind(tape, model.fuse_);
  spatial_.q = num::bind(tape, model.sp_q_);
  spatial_.o = num::bind(tape, model.sp_o_);
  spatial_.model_dim = cfg_.hidden_dim;
  spatial_.heads = 1;
  sp_k_rgb_ = num::bind(tape, model.sp_k_rgb_);
  sp_k_depth_ = num::bind(tape, model.sp_k_depth_);
  sp_v_rgb_ = num::bind(tape, model.sp_v_rgb_);
  sp_v_depth_ = num::bind(tape, model.sp_v_depth_);
  mem_high_ = num::bind(tape, model.mem_high_);
  mem_low_ = num::bind(tape, model.mem_low_);
  decoder_ = num::bind(tape, model.decoder_);
  action_head_ = num::bind(tape, model.action_head_);
  progress_head_ = num::bind(tape, model.progress_head_);
}

Var Forward::encode_tokens(Var table, const std::vector<int>& tokens) {
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(cfg_.vocab_size));
    }
  }
  return num::gather_rows(table, tokens);
}

Var Forward::encode_low(const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_low: empty token list");
  Var emb = encode_tokens(tape_.param(*m_.embed_low_), tokens);
  Var states = num::birnn_encode(num::bind(tape_, m_.low_fwd_),
                                 num::bind(tape_, m_.low_bwd_), emb);
  return num::dropout(num::apply(num::bind(tape_, m_.low_proj_), states),
                      cfg_.dropout, rng_);
}

Var Forward::encode_high(const std::vector<std::vector<int>>& subs) {
  if (subs.empty()) throw std::invalid_argument("encode_high: no sub-instructions");
  Var table = tape_.param(*m_.embed_high_);
  std::vector<Var> pooled;
  pooled.reserve(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i].empty()) {
      throw std::invalid_argument("encode_high: sub-instruction " +
                                  std::to_string(i) + " has no tokens");
    }
    pooled.push_back(num::mean_rows(encode_tokens(table, subs[i])));
  }
  Var rows = num::stack(pooled);
  return num::dropout(num::apply(num::bind(tape_, m_.high_proj_), rows),
                      cfg_.dropout, rng_);
}

PreparedInstruction Forward::prepare(const std::vector<int>& tokens,
                                     const std::vector<std::vector<int>>& subs) {
  PreparedInstruction p;
  p.features.low = encode_low(tokens);
  p.features.high = encode_high(subs);
  p.high_keys = num::prepare_keys(mla_high_, p.features.high, p.features.high);
  p.low_keys = num::prepare_keys(mla_low_, p.features.low, p.features.low);
  return p;
}

Var Forward::action_embedding(int action) {
  if (action < -1 || action >= static_cast<int>(cfg_.action_count)) {
    throw std::out_of_range("action " + std::to_string(action) + " out of range");
  }
  const std::size_t r = action < 0 ? cfg_.action_count
                                   : static_cast<std::size_t>(action);
  return num::row(tape_.param(*m_.action_embed_), r);
}

EpisodeState Forward::initial_state(const Pose& pose) {
  EpisodeState s;
  const Tensor zeros(Shape{cfg_.hidden_dim});
  s.h_high = tape_.constant(zeros);
  s.h_low = tape_.constant(zeros);
  s.h_action = tape_.constant(zeros);
  s.prev_action = -1;
  s.prev_action_embed = action_embedding(-1);
  s.pose = pose;
  s.pose.heading = normalize_heading(pose.heading);
  return s;
}

MemoryOutput Forward::memory_step(const EpisodeState& state,
                                  const Observation& obs) {
  obs.validate(cfg_);
  Var v = num::concat({tape_.constant(obs.rgb_pooled),
                       tape_.constant(obs.depth_pooled)});
  v = num::dropout(v, cfg_.dropout, rng_);
  Var x = num::concat({v, state.prev_action_embed});
  return MemoryOutput{num::gru_step(mem_high_, x, state.h_high),
                      num::gru_step(mem_low_, x, state.h_low)};
}

FusionOutput Forward::mla_fuse(Var h_high, Var h_low,
                               const PreparedInstruction& instr) {
  num::Attention high = num::attend(mla_high_, h_high, instr.high_keys);
  num::Attention low = num::attend(mla_low_, h_low, instr.low_keys);
  FusionOutput out;
  out.f_i = num::apply(fuse_, num::concat({high.output, low.output}));
  out.alpha = num::mean_rows(high.scores);
  out.alpha_low = num::mean_rows(low.scores);
  return out;
}

num::Attention Forward::spatial_attend(Var f_i, const Observation& obs) {
  obs.validate(cfg_);
  Var rgb = tape_.constant(obs.rgb_spatial);
  Var depth = tape_.constant(obs.depth_spatial);
  Var keys = num::concat_rows(num::apply(sp_k_rgb_, rgb),
                              num::apply(sp_k_depth_, depth));
  Var values = num::concat_rows(num::apply(sp_v_rgb_, rgb),
                                num::apply(sp_v_depth_, depth));
  return num::attend(spatial_, f_i, num::split_heads(keys, values, 1));
}

DecodeOutput Forward::decode_action(const EpisodeState& state, Var h_high,
                                    Var h_low, Var f_i, Var f_v) {
  Var x = num::concat({h_high, h_low, state.prev_action_embed, f_i, f_v});
  DecodeOutput out;
  out.h_action = num::gru_step(decoder_, x, state.h_action);
  out.logits = num::apply(action_head_, out.h_action);
  out.dist = num::softmax(out.logits);
  out.action = static_cast<int>(num::argmax(out.dist.value().values()));
  out.progress = num::sigmoid(num::apply(progress_head_, out.h_action));
  return out;
}

StepOutput Forward::step(EpisodeState& state, const Observation& obs,
                         const PreparedInstruction& instr) {
  MemoryOutput mem = memory_step(state, obs);
  StepOutput out;
  out.fusion = mla_fuse(mem.h_high, mem.h_low, instr);
  out.spatial = spatial_attend(out.fusion.f_i, obs);
  out.decode = decode_action(state, mem.h_high, mem.h_low, out.fusion.f_i,
                             out.spatial.output);
  state.h_high = mem.h_high;
  state.h_low = mem.h_low;
  state.h_action = out.decode.h_action;
  ++state.step;
  return out;
}

void Forward::set_previous_action(EpisodeState& state, int action) {
  state.prev_action_embed = action_embedding(action);
  state.prev_action = action;
}

}  // namespace subnav::model
