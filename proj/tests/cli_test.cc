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

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "subnav/instr.h"
#include "subnav/model.h"
#include "test_util.h"

namespace subnav {
namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SUBNAV_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string small_config(const test::TempDir& dir) {
  model::ModelConfig c;
  c.feature_dim = 8;
  c.hidden_dim = 16;
  c.heads = 2;
  c.action_embed_dim = 4;
  c.grid_cells = 2;
  c.vocab_size = 256;
  const std::string p = dir.path("small.json");
  model::save_config(c, p);
  return p;
}

TEST_CASE("subcommand and flag handling") {
  CHECK(run("").code != 0);
  CHECK(run("segment stats").code != 0);
  CHECK(run("bench --input x --bogus 1").code != 0);
  CHECK(run("frobnicate").code != 0);
  CHECK(run("--help").code == 0);
}

TEST_CASE("segment") {
  test::TempDir dir;
  SUBCASE("golden instruction") {
    const std::string in = dir.write(
        "one.jsonl",
        R"({"id": "g", "instruction": "Turn to the right, go past the refrigerator. )"
        R"(Turn left and walk to the point where you 're to the hallway by the entry )"
        R"(and dining room area."})"
        "\n");
    const Result r = run("segment --input " + in + " --output " + dir.path("out.jsonl") +
                         " --vocab " + dir.path("vocab.txt"));
    CHECK(r.code == 0);
    CHECK(r.out.find("records 1") != std::string::npos);
    const auto recs = instr::load_corpus(dir.path("out.jsonl"));
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].sub_instructions ==
          std::vector<std::string>{"Turn to the right", "go past the refrigerator",
                                   "Turn left",
                                   "and walk to the point where you 're to the hallway "
                                   "by the entry and dining room area"});
    CHECK(std::filesystem::exists(dir.path("vocab.txt")));

    // A second run loads the vocabulary written by the first.
    const Result again = run("segment --input " + in + " --output " + dir.path("out2.jsonl") +
                             " --vocab " + dir.path("vocab.txt"));
    CHECK(again.code == 0);
    CHECK(slurp(dir.path("out.jsonl")) == slurp(dir.path("out2.jsonl")));
  }
  SUBCASE("empty corpus") {
    const std::string in = dir.write("empty.jsonl", "");
    const Result r = run("segment --input " + in + " --output " + dir.path("out.jsonl"));
    CHECK(r.code == 0);
    CHECK(r.out.find("records 0") != std::string::npos);
    CHECK(slurp(dir.path("out.jsonl")).empty());
  }
  SUBCASE("missing input") {
    const std::string missing = dir.path("missing.jsonl");
    const Result r = run("segment --input " + missing + " --output " + dir.path("o"));
    CHECK(r.code != 0);
    CHECK(r.out.find(missing) != std::string::npos);
  }
  SUBCASE("thread count does not change the output") {
    const std::string in = test::data_path("sample_instructions.jsonl");
    CHECK(run("segment --input " + in + " --output " + dir.path("a")).code == 0);
    CHECK(run("segment --threads 3 --input " + in + " --output " + dir.path("b")).code == 0);
    CHECK(slurp(dir.path("a")) == slurp(dir.path("b")));
  }
}

TEST_CASE("stats") {
  test::TempDir dir;
  const std::string even = dir.write(
      "even.jsonl",
      R"({"id":"a","instruction":"x y","sub_instructions":["x","y"],"tokens":[[4],[5]]})"
      "\n"
      R"({"id":"b","instruction":"x y","sub_instructions":["x","y"],"tokens":[[4],[5]]})"
      "\n");
  Result r = run("stats --input " + even + " --hist-out " + dir.path("h.csv"));
  CHECK(r.code == 0);
  CHECK(r.out.find("segment_ratio 1\n") != std::string::npos);
  CHECK(r.out.find("avg_sub_count 2\n") != std::string::npos);
  CHECK(slurp(dir.path("h.csv")) == "sub_count,frequency\n2,2\n");

  const std::string mixed = dir.write(
      "mixed.jsonl",
      R"({"id":"a","instruction":"x","sub_instructions":["x"],"tokens":[[4]]})"
      "\n"
      R"({"id":"b","instruction":"x y z","sub_instructions":["x","y","z"],"tokens":[[4],[5],[6]]})"
      "\n");
  r = run("stats --input " + mixed);
  CHECK(r.code == 0);
  CHECK(r.out.find("segment_ratio 0.5\n") != std::string::npos);
  CHECK(r.out.find("avg_sub_count 2\n") != std::string::npos);

  CHECK(run("stats --input " + dir.write("e.jsonl", "")).code != 0);
}

TEST_CASE("bench") {
  const Result r =
      run("bench --repeat 3 --input " + test::data_path("sample_instructions.jsonl"));
  CHECK(r.code == 0);
  CHECK(r.out.find("instructions 150\n") != std::string::npos);
  CHECK(r.out.find("instructions_per_second") != std::string::npos);
  CHECK(r.out.find("projected_seconds_for_13425") != std::string::npos);
  CHECK(run("bench --repeat 0 --input " + test::data_path("sample_instructions.jsonl")).code !=
        0);
}

TEST_CASE("gradcheck") {
  const Result a = run("gradcheck --seed 3 --cases 20");
  CHECK(a.code == 0);
  const Result b = run("gradcheck --seed 3 --cases 20");
  CHECK(a.out == b.out);
  CHECK(a.out.find("worst_relative_error") != std::string::npos);
  CHECK(run("gradcheck --cases 0").code != 0);
}

TEST_CASE("run") {
  test::TempDir dir;
  const std::string cfg = small_config(dir);
  const Result a = run("run --config " + cfg + " --seed 4 --trace-out " + dir.path("a.csv"));
  CHECK(a.code == 0);
  CHECK(a.out.find("spl ") != std::string::npos);
  const Result b = run("run --config " + cfg + " --seed 4 --trace-out " + dir.path("b.csv"));
  CHECK(a.out == b.out);
  CHECK(slurp(dir.path("a.csv")) == slurp(dir.path("b.csv")));
  CHECK(slurp(dir.path("a.csv")).rfind("step,action,x,y,heading,alpha_0,alpha_1,alpha_2\n", 0) ==
        0);
  CHECK(run("run --config " + dir.path("nope.json")).code != 0);
}

TEST_CASE("train-smoke") {
  test::TempDir dir;
  const std::string cfg = small_config(dir);
  const std::string common = " --quiet --config " + cfg + " --lr 0.01 --updates 80";
  SUBCASE("learns and writes the curve") {
    const Result r = run("train-smoke --seed 1 --out " + dir.path("c.csv") + common);
    CHECK(r.code == 0);
    const std::string csv = slurp(dir.path("c.csv"));
    CHECK(csv.rfind("update,loss_total,loss_action,loss_peak,loss_progress,lambda\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 81);
    const Result again = run("train-smoke --seed 1 --out " + dir.path("d.csv") + common);
    CHECK(csv == slurp(dir.path("d.csv")));
  }
  SUBCASE("every curve kind is accepted") {
    for (const char* kind : {"gaussian", "constant", "linear", "quadratic", "cubic"}) {
      const Result r = run(std::string("train-smoke --updates 2 --quiet --config ") + cfg +
                           " --curve " + kind);
      CHECK(r.out.find("initial_action_loss") != std::string::npos);
    }
  }
  SUBCASE("rejections") {
    CHECK(run("train-smoke --sigma 0" + common).code != 0);
    CHECK(run("train-smoke --curve quartic" + common).code != 0);
    // Too few updates to learn anything: the drop criterion fails.
    CHECK(run("train-smoke --updates 1 --quiet --config " + cfg).code != 0);
  }
}

}  // namespace
}  // namespace subnav
