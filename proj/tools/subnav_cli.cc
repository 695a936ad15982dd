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

// subnav: segment corpora, inspect them, and drive the navigation model.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "subnav/fsa.h"
#include "subnav/gradcheck.h"
#include "subnav/harness.h"
#include "subnav/instr.h"
#include "subnav/losses.h"
#include "subnav/model.h"

namespace {

using namespace subnav;

constexpr double kPalTolerance = 1e-8;
constexpr double kModelTolerance = 1e-4;
constexpr double kRequiredDrop = 0.8;

struct SegmentArgs {
  std::string input;
  std::string output;
  std::string vocab;
  std::size_t min_freq = 1;
  unsigned threads = 1;
};

struct StatsArgs {
  std::string input;
  std::string hist_out;
};

struct BenchArgs {
  std::string input;
  std::size_t repeat = 1;
  std::size_t corpus_size = 13425;
};

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t cases = 100;
};

struct RunArgs {
  std::string config;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::string trace_out;
  std::size_t subs = 3;
  std::size_t steps = 8;
};

struct TrainArgs {
  std::uint64_t seed = 0;
  std::size_t updates = 300;
  std::string curve = "gaussian";
  double sigma = 0.6;
  std::string out;
  std::string config;
  std::string save;
  std::size_t episodes = 1;
  std::size_t subs = 3;
  std::size_t steps = 8;
  double lambda_max = 0.4;
  double theta = 1.0;
  double inflection_weight = 3.2;
  double learning_rate = 2.5e-4;
  bool quiet = false;
};

int cmd_segment(const SegmentArgs& a) {
  std::vector<instr::InstructionRecord> records = instr::load_corpus(a.input);
  const fsa::RefineRuleSet rules = fsa::RefineRuleSet::defaults();
  instr::Vocab vocab;
  if (!a.vocab.empty() && std::filesystem::exists(a.vocab)) {
    vocab = instr::Vocab::load(a.vocab);
    fsa::segment_corpus(records, rules, vocab, a.threads);
  } else {
    fsa::split_corpus(records, rules, a.threads);
    vocab = instr::build_vocab(records, a.min_freq);
    fsa::tokenize_corpus(records, vocab);
    if (!a.vocab.empty()) vocab.save(a.vocab);
  }
  instr::write_fsasub(records, a.output);
  std::size_t subs = 0;
  for (const auto& r : records) subs += r.sub_instructions.size();
  std::cout << "records " << records.size() << "\n"
            << "sub_instructions " << subs << "\n"
            << "vocab_size " << vocab.size() << "\n";
  return 0;
}

int cmd_stats(const StatsArgs& a) {
  std::vector<instr::InstructionRecord> records = instr::load_corpus(a.input);
  std::vector<instr::InstructionRecord> raw;
  for (auto& r : records) {
    if (!r.segmented()) raw.push_back(r);
  }
  if (!raw.empty()) {
    // Unsegmented lines are split on the fly.
    fsa::split_corpus(records, fsa::RefineRuleSet::defaults());
  }
  const fsa::CorpusStats s = fsa::corpus_stats(records);
  std::cout << std::setprecision(6) << "records " << s.record_count << "\n"
            << "segmented_on_the_fly " << raw.size() << "\n"
            << "segment_ratio " << s.segment_ratio << "\n"
            << "avg_sub_count " << s.avg_sub_count << "\n";
  if (!a.hist_out.empty()) fsa::write_histogram_csv(s, a.hist_out);
  return 0;
}

int cmd_bench(const BenchArgs& a) {
  const auto records = instr::load_corpus(a.input);
  fsa::RefineRuleSet rules = fsa::RefineRuleSet::defaults();
  std::vector<instr::InstructionRecord> split = records;
  fsa::split_corpus(split, rules);
  const instr::Vocab vocab = instr::build_vocab(split, 1);
  const fsa::ThroughputReport r =
      fsa::bench_throughput(records, a.repeat, rules, vocab);
  const double projected = static_cast<double>(a.corpus_size) / r.instructions_per_second;
  std::cout << std::setprecision(6) << "instructions " << r.instructions << "\n"
            << "seconds " << r.total_seconds << "\n"
            << "instructions_per_second " << r.instructions_per_second << "\n"
            << "projected_seconds_for_" << a.corpus_size << " " << projected << "\n";
  return 0;
}

int cmd_gradcheck(const GradcheckArgs& a) {
  const gradcheck::PalCheck pal = gradcheck::check_pal(a.seed, a.cases);
  const gradcheck::ModelCheck model = gradcheck::check_model(a.seed);
  std::cout << std::setprecision(6) << "pal_cases " << pal.cases << "\n"
            << "pal_worst_relative_error " << pal.worst << "\n"
            << "model_tensors " << model.tensors.size() << "\n"
            << "model_worst_relative_error " << model.worst << "\n";
  bool ok = pal.worst <= kPalTolerance;
  for (const auto& t : model.tensors) {
    if (!(t.error <= kModelTolerance)) {
      std::cout << "mismatch " << t.name << " " << t.error << "\n";
      ok = false;
    }
  }
  if (!ok) {
    std::cerr << "error: gradient check exceeded tolerance\n";
    return 1;
  }
  std::cout << "worst_relative_error " << std::max(pal.worst, model.worst) << "\n";
  return 0;
}

model::ModelConfig config_or_default(const std::string& path) {
  return path.empty() ? model::ModelConfig{} : model::load_config(path);
}

int cmd_run(const RunArgs& a) {
  const model::ModelConfig cfg = config_or_default(a.config);
  model::Model m(cfg);
  if (a.checkpoint.empty()) {
    m.init(a.seed);
  } else {
    m.load(a.checkpoint);
  }
  const harness::SyntheticEpisode ep =
      harness::make_synthetic_episode(a.seed, a.subs, a.steps, cfg);
  const harness::EpisodeResult r = harness::run_episode(m, ep, harness::Mode::kPolicy);
  if (!a.trace_out.empty()) harness::export_trace(r.trace, a.trace_out);
  std::cout << std::setprecision(6) << "instruction " << ep.record.instruction << "\n"
            << "steps " << r.trace.size() << "\n"
            << "trajectory_length " << r.metrics.trajectory_length << "\n"
            << "navigation_error " << r.metrics.navigation_error << "\n"
            << "success " << r.metrics.success << "\n"
            << "spl " << r.metrics.spl << "\n";
  return 0;
}

int cmd_train_smoke(const TrainArgs& a) {
  harness::TrainConfig cfg;
  cfg.seed = a.seed;
  cfg.updates = a.updates;
  cfg.episodes = a.episodes;
  cfg.n_subs = a.subs;
  cfg.steps = a.steps;
  cfg.model = config_or_default(a.config);
  cfg.curve.kind = *losses::parse_curve(a.curve);
  cfg.curve.sigma = a.sigma;
  cfg.loss.lambda_max = a.lambda_max;
  cfg.loss.theta = a.theta;
  cfg.loss.inflection_weight = a.inflection_weight;
  cfg.adam.learning_rate = a.learning_rate;
  cfg.curve.validate();
  cfg.loss.validate();
  cfg.validate();

  model::Model m(cfg.model);
  const harness::TrainResult r =
      harness::train_smoke(m, cfg, [&](const harness::CurvePoint& p) {
        if (!a.quiet && (p.update % 25 == 0 || p.update + 1 == a.updates)) {
          std::cout << "update " << p.update << " loss " << p.total << " action "
                    << p.action << " peak " << p.peak << " lambda " << p.lambda
                    << std::endl;
        }
      });
  if (!a.out.empty()) harness::export_learning_curve(r.curve, a.out);
  if (!a.save.empty()) m.save(a.save);
  std::cout << std::setprecision(6) << "initial_action_loss " << r.initial_action_loss
            << "\n"
            << "final_action_loss " << r.final_action_loss << "\n"
            << "action_loss_drop " << r.action_loss_drop() << "\n"
            << "teacher_agreement " << r.final_agreement << "\n";
  if (!(r.action_loss_drop() >= kRequiredDrop)) {
    std::cerr << "error: action loss dropped by " << r.action_loss_drop()
              << ", below " << kRequiredDrop << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sub-instruction segmentation and attention navigation tools"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  SegmentArgs seg;
  auto* c_seg = app.add_subcommand("segment", "Segment a JSON-lines corpus into sub-instructions");
  c_seg->add_option("--input", seg.input, "Input JSON-lines corpus")->required();
  c_seg->add_option("--output", seg.output, "Output sub-instruction JSON-lines file")->required();
  c_seg->add_option("--vocab", seg.vocab,
                    "Vocabulary file; loaded if it exists, otherwise built and written");
  c_seg->add_option("--min-freq", seg.min_freq, "Minimum count for built vocabularies")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_seg->add_option("--threads", seg.threads, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Segment ratio and sub-instruction counts");
  c_stats->add_option("--input", stats.input, "JSON-lines corpus")->required();
  c_stats->add_option("--hist-out", stats.hist_out, "Histogram CSV output");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Single-threaded segmentation throughput");
  c_bench->add_option("--input", bench.input, "JSON-lines corpus")->required();
  c_bench->add_option("--repeat", bench.repeat, "Passes over the corpus")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_bench->add_option("--corpus-size", bench.corpus_size,
                      "Instruction count used for the projected time")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Analytic versus finite-difference gradients");
  c_gc->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  c_gc->add_option("--cases", gc.cases, "Random peak-loss cases")->capture_default_str();

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Run one synthetic episode in policy mode");
  c_run->add_option("--config", run.config, "Model config JSON");
  c_run->add_option("--checkpoint", run.checkpoint, "Parameter checkpoint");
  c_run->add_option("--seed", run.seed, "Random seed")->capture_default_str();
  c_run->add_option("--trace-out", run.trace_out, "Attention trace CSV output");
  c_run->add_option("--subs", run.subs, "Sub-instructions in the episode")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_run->add_option("--steps", run.steps, "Teacher steps in the episode")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train-smoke", "Overfit synthetic episodes");
  c_tr->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  c_tr->add_option("--updates", tr.updates, "Optimizer updates")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_tr->add_option("--curve", tr.curve, "Peak loss target curve")
      ->capture_default_str()
      ->check(CLI::IsMember({"gaussian", "constant", "linear", "quadratic", "cubic"}));
  c_tr->add_option("--sigma", tr.sigma, "Gaussian focusing ratio")->capture_default_str();
  c_tr->add_option("--out", tr.out, "Learning curve CSV output");
  c_tr->add_option("--config", tr.config, "Model config JSON");
  c_tr->add_option("--save", tr.save, "Write the trained checkpoint here");
  c_tr->add_option("--episodes", tr.episodes, "Synthetic training episodes")
      ->capture_default_str();
  c_tr->add_option("--subs", tr.subs, "Sub-instructions per episode")->capture_default_str();
  c_tr->add_option("--steps", tr.steps, "Teacher steps per episode")->capture_default_str();
  c_tr->add_option("--lambda-max", tr.lambda_max, "Final peak loss weight")
      ->capture_default_str();
  c_tr->add_option("--theta", tr.theta, "Progress loss weight")->capture_default_str();
  c_tr->add_option("--inflection-weight", tr.inflection_weight,
                   "Action loss weight at teacher action changes")
      ->capture_default_str();
  c_tr->add_option("--lr", tr.learning_rate, "Adam step size")->capture_default_str();
  c_tr->add_flag("--quiet", tr.quiet, "Only print the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_seg) return cmd_segment(seg);
    if (*c_stats) return cmd_stats(stats);
    if (*c_bench) return cmd_bench(bench);
    if (*c_gc) return cmd_gradcheck(gc);
    if (*c_run) return cmd_run(run);
    if (*c_tr) return cmd_train_smoke(tr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
