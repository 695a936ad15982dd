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

#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "subnav/checkpoint.h"
#include "subnav/gradcheck.h"
#include "subnav/model.h"
#include "test_util.h"

namespace subnav::model {
namespace {

using num::Tensor;

ModelConfig mid_config() {
  ModelConfig c;
  c.feature_dim = 12;
  c.hidden_dim = 16;
  c.heads = 4;
  c.action_embed_dim = 5;
  c.grid_cells = 3;
  c.vocab_size = 40;
  return c;
}

Tensor random_tensor(num::Rng& rng, num::Shape shape) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Observation random_obs(num::Rng& rng, const ModelConfig& c) {
  Observation o;
  o.rgb_pooled = random_tensor(rng, {c.feature_dim});
  o.depth_pooled = random_tensor(rng, {c.feature_dim});
  o.rgb_spatial = random_tensor(rng, {c.grid_cells, c.feature_dim});
  o.depth_spatial = random_tensor(rng, {c.grid_cells, c.feature_dim});
  return o;
}

double sum_of(const Tensor& t) {
  return std::accumulate(t.values().begin(), t.values().end(), 0.0);
}

const std::vector<int> kTokens = {3, 7, 1, 9, 2, 5};
const std::vector<std::vector<int>> kSubs = {{3, 7}, {1, 9, 2}, {5}};

TEST_CASE("config validation and JSON") {
  ModelConfig c;
  CHECK(c.feature_dim == 256);
  CHECK(c.hidden_dim == 512);
  CHECK(c.heads == 8);
  CHECK(c.action_embed_dim == 32);
  CHECK(c.dropout == 0.25);
  CHECK(c.action_count == 4);
  CHECK_NOTHROW(c.validate());

  CHECK(config_from_json(config_to_json(mid_config())) == mid_config());
  CHECK_THROWS_AS(config_from_json(R"({"hidden_dim": 16, "colour": 3})"),
                  instr::FormatError);
  CHECK_THROWS_AS(config_from_json("[1, 2]"), instr::FormatError);
  CHECK_THROWS_AS(config_from_json("{"), instr::FormatError);
  CHECK_THROWS_AS(config_from_json(R"({"heads": -2})"), instr::FormatError);
  // Missing fields keep their defaults.
  CHECK(config_from_json(R"({"heads": 4})").hidden_dim == 512);

  ModelConfig bad = mid_config();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mid_config();
  bad.feature_dim = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = mid_config();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(Model{bad}, std::invalid_argument);

  test::TempDir dir;
  save_config(mid_config(), dir.path("c.json"));
  CHECK(load_config(dir.path("c.json")) == mid_config());
  CHECK_THROWS_AS(load_config(dir.path("missing.json")), instr::IoError);
}

TEST_CASE("paper-size model parameter count") {
  Model m{ModelConfig{}};
  CHECK(m.params().element_count() > 10'000'000);
  CHECK(m.params().contains("decoder.wx"));
  CHECK(m.params().get("decoder.wx").value.shape() ==
        num::Shape{4 * 512 + 32, 3 * 512});
  CHECK(m.params().get("mem_high.wx").value.shape() ==
        num::Shape{2 * 256 + 32, 3 * 512});
}

TEST_CASE("instruction encoders") {
  const ModelConfig c = mid_config();
  Model m(c);
  m.init(11);
  num::Tape tape(false);
  Forward f(m, tape);

  CHECK(f.encode_low({4}).value().shape() == num::Shape{1, c.feature_dim});
  CHECK(f.encode_low(kTokens).value().shape() ==
        num::Shape{kTokens.size(), c.feature_dim});
  CHECK(f.encode_high({{4}}).value().shape() == num::Shape{1, c.feature_dim});
  CHECK_THROWS_AS(f.encode_low({}), std::invalid_argument);
  CHECK_THROWS_AS(f.encode_high({}), std::invalid_argument);
  CHECK_THROWS_AS(f.encode_low({40}), std::out_of_range);

  SUBCASE("order sensitive") {
    std::vector<int> rev(kTokens.rbegin(), kTokens.rend());
    const Tensor a = f.encode_low(kTokens).value();
    const Tensor b = f.encode_low(rev).value();
    // Same multiset of tokens, but the first row must still differ.
    double diff = 0;
    for (std::size_t k = 0; k < c.feature_dim; ++k) {
      diff += std::abs(a.values()[k] - b.values()[(kTokens.size() - 1) * c.feature_dim + k]);
    }
    CHECK(diff > 1e-6);
  }
  SUBCASE("deterministic across models") {
    Model m2(c);
    m2.init(11);
    num::Tape t2(false);
    Forward f2(m2, t2);
    CHECK(f.encode_low(kTokens).value() == f2.encode_low(kTokens).value());
    CHECK(f.encode_high(kSubs).value() == f2.encode_high(kSubs).value());
  }
  SUBCASE("duplicate subs give identical rows") {
    const Tensor h = f.encode_high({{1, 2, 3}, {8}, {1, 2, 3}}).value();
    double norm = 0;
    for (std::size_t k = 0; k < c.feature_dim; ++k) {
      CHECK(h.values()[k] == h.values()[2 * c.feature_dim + k]);
      norm += h.values()[k] * h.values()[k];
    }
    CHECK(std::isfinite(norm));
    CHECK(norm > 0.0);
  }
}

TEST_CASE("zero parameters are a fixed point") {
  const ModelConfig c = mid_config();
  Model m(c);
  num::Tape tape(false);
  Forward f(m, tape);
  num::Rng rng(1);
  const PreparedInstruction instr = f.prepare(kTokens, kSubs);
  EpisodeState s = f.initial_state();
  for (int t = 0; t < 3; ++t) {
    const StepOutput out = f.step(s, random_obs(rng, c), instr);
    for (double v : s.h_high.value().values()) CHECK(v == 0.0);
    for (double v : s.h_low.value().values()) CHECK(v == 0.0);
    for (double v : out.decode.dist.value().values()) CHECK(v == doctest::Approx(0.25));
    CHECK(out.decode.action == kStop);
    CHECK(out.decode.progress.value()[0] == doctest::Approx(0.5));
    for (double v : out.fusion.alpha.value().values()) {
      CHECK(v == doctest::Approx(1.0 / 3.0));
    }
    f.set_previous_action(s, kForward);
  }
}

TEST_CASE("memory step") {
  const ModelConfig c = mid_config();
  Model m(c);
  m.init(3);
  num::Tape tape(false);
  Forward f(m, tape);
  num::Rng rng(2);
  EpisodeState s = f.initial_state();
  Observation obs = random_obs(rng, c);
  for (double& v : obs.rgb_pooled.values()) v *= 50.0;
  const MemoryOutput mem = f.memory_step(s, obs);
  CHECK(mem.h_high.value().shape() == num::Shape{c.hidden_dim});
  for (double v : mem.h_high.value().values()) CHECK(std::abs(v) < 1.0);
  for (double v : mem.h_low.value().values()) CHECK(std::abs(v) < 1.0);
  // Same input, different parameters.
  CHECK_FALSE(mem.h_high.value() == mem.h_low.value());

  Observation wrong = obs;
  wrong.rgb_pooled = Tensor(num::Shape{c.feature_dim + 1});
  CHECK_THROWS_AS(f.memory_step(s, wrong), num::ShapeError);
  Observation nan = obs;
  nan.depth_pooled.values()[0] = std::nan("");
  CHECK_THROWS_AS(nan.validate(c), num::NonFiniteError);
}

TEST_CASE("sub-instruction attention") {
  const ModelConfig c = mid_config();
  Model m(c);
  m.init(5);
  num::Rng rng(8);
  SUBCASE("rows sum to one for any N") {
    for (std::size_t n = 1; n <= 7; ++n) {
      std::vector<std::vector<int>> subs;
      for (std::size_t k = 0; k < n; ++k) subs.push_back({static_cast<int>(k + 1)});
      num::Tape tape(false);
      Forward f(m, tape);
      const PreparedInstruction instr = f.prepare(kTokens, subs);
      EpisodeState s = f.initial_state();
      for (int t = 0; t < 4; ++t) {
        const StepOutput out = f.step(s, random_obs(rng, c), instr);
        const Tensor& a = out.fusion.alpha.value();
        CHECK(a.size() == n);
        CHECK(std::abs(sum_of(a) - 1.0) <= 1e-9);
        for (double v : a.values()) CHECK(v >= 0.0);
        CHECK(std::abs(sum_of(out.fusion.alpha_low.value()) - 1.0) <= 1e-9);
        CHECK(out.fusion.f_i.value().shape() == num::Shape{c.hidden_dim});
        if (n == 1) CHECK(a.values()[0] == 1.0);
        f.set_previous_action(s, out.decode.action);
      }
    }
  }
  SUBCASE("identical sub features give uniform attention") {
    num::Tape tape(false);
    Forward f(m, tape);
    const PreparedInstruction instr = f.prepare(kTokens, {{4, 6}, {4, 6}, {4, 6}, {4, 6}});
    EpisodeState s = f.initial_state();
    const StepOutput out = f.step(s, random_obs(rng, c), instr);
    for (double v : out.fusion.alpha.value().values()) {
      CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("spatial attention and decoding") {
  const ModelConfig c = mid_config();
  Model m(c);
  m.init(9);
  num::Tape tape(false);
  Forward f(m, tape);
  num::Rng rng(4);
  const PreparedInstruction instr = f.prepare(kTokens, kSubs);
  EpisodeState s = f.initial_state();
  const Observation obs = random_obs(rng, c);
  const StepOutput out = f.step(s, obs, instr);

  const Tensor& scores = out.spatial.scores.value();
  CHECK(scores.size() == 2 * c.grid_cells);
  CHECK(std::abs(sum_of(scores) - 1.0) <= 1e-12);
  CHECK(out.spatial.output.value().shape() == num::Shape{c.hidden_dim});
  const num::Attention again = f.spatial_attend(out.fusion.f_i, obs);
  CHECK(again.output.value() == out.spatial.output.value());

  const Tensor& dist = out.decode.dist.value();
  CHECK(std::abs(sum_of(dist) - 1.0) <= 1e-12);
  for (double v : dist.values()) CHECK(v > 0.0);
  CHECK(out.decode.action == static_cast<int>(num::argmax(dist.values())));
  const double p = out.decode.progress.value()[0];
  CHECK(p > 0.0);
  CHECK(p < 1.0);
  CHECK(s.step == 1);

  SUBCASE("argmax is invariant to a logit shift") {
    for (double shift : {-50.0, -1.0, 3.0, 400.0}) {
      num::Var shifted = num::softmax(num::shift(out.decode.logits, shift));
      CHECK(num::argmax(shifted.value().values()) ==
            static_cast<std::size_t>(out.decode.action));
    }
  }
  SUBCASE("one-cell grids") {
    ModelConfig c1 = c;
    c1.grid_cells = 1;
    Model m1(c1);
    m1.init(9);
    num::Tape t1(false);
    Forward f1(m1, t1);
    Observation o1 = random_obs(rng, c1);
    o1.depth_spatial = o1.rgb_spatial;
    const num::Attention a = f1.spatial_attend(t1.constant(out.fusion.f_i.value()), o1);
    CHECK(a.scores.value().size() == 2);
    CHECK(std::abs(sum_of(a.scores.value()) - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(f.set_previous_action(s, 4), std::out_of_range);
}

TEST_CASE("evaluation passes are identical, dropout passes are not") {
  const ModelConfig c = mid_config();
  Model m(c);
  m.init(21);
  num::Rng obs_rng(6);
  std::vector<Observation> obs;
  for (int t = 0; t < 5; ++t) obs.push_back(random_obs(obs_rng, c));

  auto run = [&](num::Rng* drop) {
    num::Tape tape(false);
    Forward f(m, tape, drop);
    const PreparedInstruction instr = f.prepare(kTokens, kSubs);
    EpisodeState s = f.initial_state();
    std::vector<double> out;
    std::vector<int> actions;
    for (const Observation& o : obs) {
      const StepOutput st = f.step(s, o, instr);
      const auto& d = st.decode.dist.value().values();
      out.insert(out.end(), d.begin(), d.end());
      f.set_previous_action(s, st.decode.action);
    }
    return out;
  };
  CHECK(run(nullptr) == run(nullptr));
  num::Rng d1(1);
  num::Rng d2(1);
  CHECK(run(&d1) == run(&d2));
  num::Rng d3(1);
  CHECK(run(&d3) != run(nullptr));
}

TEST_CASE("whole-model gradients match finite differences") {
  const gradcheck::ModelCheck r = gradcheck::check_model(123);
  CHECK(r.tensors.size() > 30);
  CHECK(std::isfinite(r.loss));
  for (const auto& t : r.tensors) {
    INFO(t.name);
    CHECK(t.error <= 1e-4);
  }
  MESSAGE("worst tensor relative error " << r.worst);
  const gradcheck::ModelCheck r2 = gradcheck::check_model(123);
  CHECK(r2.worst == r.worst);
}

TEST_CASE("checkpoint round trip") {
  const ModelConfig c = mid_config();
  Model a(c);
  a.init(42);
  test::TempDir dir;
  const auto path = dir.path("m.ckpt");
  a.save(path);

  Model b(c);
  b.load(path);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].name == b.params()[i].name);
    CHECK(a.params()[i].value == b.params()[i].value);
  }

  ModelConfig other = c;
  other.hidden_dim = 8;
  other.heads = 2;
  Model wrong(other);
  CHECK_THROWS_AS(wrong.load(path), instr::FormatError);
  CHECK_THROWS_AS(b.load(dir.path("nope.ckpt")), instr::IoError);

  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(dir.path("short.ckpt"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    std::ofstream tail(dir.path("long.ckpt"), std::ios::binary);
    tail.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    tail.put('x');
  }
  Model c1(c);
  c1.init(1);
  const Tensor before = c1.params()[0].value;
  CHECK_THROWS_AS(c1.load(dir.path("short.ckpt")), instr::FormatError);
  CHECK(c1.params()[0].value == before);
  CHECK_THROWS_AS(c1.load(dir.path("long.ckpt")), instr::FormatError);
  dir.write("bad.ckpt", "NOPE");
  CHECK_THROWS_AS(c1.load(dir.path("bad.ckpt")), instr::FormatError);
}

}  // namespace
}  // namespace subnav::model
