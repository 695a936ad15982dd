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

// Rule-based sub-instruction segmentation.
//
// An instruction is cleaned, cut into sentences, part-of-speech tagged and
// then scanned word by word. A small set of refining rules decides where a
// new sub-instruction starts inside a sentence:
//
//   R1  boundary punctuation (, ; : . ! ?) closes the current sub when it
//       already holds at least `min_sub_words` words and a navigation verb;
//       the punctuation itself is dropped.
//   R2  a conjunction followed within two tokens by a navigation verb opens
//       a new sub that keeps the conjunction ("and walk to ...").
//   R3  a navigation verb directly after clause punctuation that did not
//       close the sub under R1 opens a new sub.
//
// Fragments shorter than `min_sub_words` merge backward into the previous
// fragment of the same sentence. Sentences are never merged with each
// other, so a single-sentence instruction is never merged away.

#ifndef SUBNAV_FSA_H_
#define SUBNAV_FSA_H_

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "subnav/instr.h"

namespace subnav::fsa {

enum class Tag {
  kVerb,
  kNoun,
  kAdj,
  kAdv,
  kConj,
  kPrep,
  kDet,
  kPron,
  kNum,
  kPunct,
  kOther,
};

// "VERB", "NOUN", ...
std::string_view tag_name(Tag tag);

struct TaggedToken {
  std::string word;
  Tag tag;
};

struct RefineRuleSet {
  std::unordered_set<std::string> navigation_verbs;
  std::unordered_set<std::string> conjunctions;
  std::size_t min_sub_words = 3;

  static RefineRuleSet defaults();

  // Throws std::invalid_argument on an empty lexicon or min_sub_words == 0.
  void validate() const;

  bool is_navigation_verb(std::string_view word) const;
  bool is_conjunction(std::string_view word) const;
};

// Escape characters and their literal spellings (\r, \n, \t) become spaces,
// <...> markup is removed, whitespace runs collapse, ends are trimmed.
std::string clean_instruction(std::string_view raw);

// Sentence split at . ! ? (punctuation stays with its sentence). Decimals
// and known abbreviations never end a sentence.
std::vector<std::string> coarse_split(std::string_view cleaned);

// Tag of a single word from the built-in lexicon and suffix rules.
// `extra_verbs` (lower-case) are tagged VERB before anything else.
Tag tag_word(std::string_view word,
             const std::unordered_set<std::string>* extra_verbs = nullptr);

std::vector<TaggedToken> pos_tag(std::string_view sentence);
std::vector<TaggedToken> pos_tag(std::string_view sentence,
                                 const RefineRuleSet& rules);

// True iff a new sub-instruction starts at word `i` of a sentence. The
// decisions for words 0..i-1 are replayed to recover the sub accumulated so
// far. Throws std::out_of_range if `i` is not a valid index and
// std::invalid_argument if `tags` and `words` differ in length.
bool need_refine(std::size_t i, const std::vector<Tag>& tags,
                 const std::vector<std::string>& words,
                 const RefineRuleSet& rules);

struct Segmentation {
  std::vector<std::string> sub_instructions;
  std::vector<std::vector<int>> tokens;
};

// Sub-instruction texts only; no vocabulary needed.
std::vector<std::string> split_instruction(std::string_view raw,
                                           const RefineRuleSet& rules);

// Full pipeline: split_instruction, then vocab_tokenize every sub.
Segmentation segment_instruction(std::string_view raw,
                                 const RefineRuleSet& rules,
                                 const instr::Vocab& vocab);

// Segments every record in place. `threads` > 1 fans out over contiguous
// record ranges; the result equals the sequential run.
void segment_corpus(std::vector<instr::InstructionRecord>& records,
                    const RefineRuleSet& rules, const instr::Vocab& vocab,
                    unsigned threads = 1);

// Fills only the sub-instruction texts (tokens cleared).
void split_corpus(std::vector<instr::InstructionRecord>& records,
                  const RefineRuleSet& rules, unsigned threads = 1);

// Re-tokenizes the sub-instructions of every record with `vocab`.
void tokenize_corpus(std::vector<instr::InstructionRecord>& records,
                     const instr::Vocab& vocab);

struct CorpusStats {
  std::size_t record_count = 0;
  // Fraction of records with at least two sub-instructions.
  double segment_ratio = 0.0;
  double avg_sub_count = 0.0;
  // sub count -> number of records
  std::map<std::size_t, std::size_t> count_histogram;
};

// Throws std::invalid_argument on an empty corpus.
CorpusStats corpus_stats(const std::vector<instr::InstructionRecord>& records);

// CSV with header `sub_count,frequency`, ascending sub count.
void write_histogram_csv(const CorpusStats& stats, const std::string& path);

struct ThroughputReport {
  std::size_t instructions = 0;
  std::size_t sub_instructions = 0;
  double total_seconds = 0.0;
  double instructions_per_second = 0.0;
};

// Times segment_instruction over `records`, `repeat` times, on the calling
// thread. Throws std::invalid_argument for an empty corpus or repeat == 0.
ThroughputReport bench_throughput(
    const std::vector<instr::InstructionRecord>& records, std::size_t repeat,
    const RefineRuleSet& rules, const instr::Vocab& vocab);

}  // namespace subnav::fsa

#endif  // SUBNAV_FSA_H_
