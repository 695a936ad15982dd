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

#include "subnav/fsa.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace subnav::fsa {
namespace {

using instr::is_punctuation;
using instr::to_lower;

const std::unordered_set<std::string>& default_navigation_verbs() {
  static const std::unordered_set<std::string> verbs = {
      "walk",   "turn",     "go",      "stop",    "exit",   "enter",
      "continue", "pass",   "climb",   "wait",    "take",   "head",
      "proceed", "move",    "make",    "keep",    "follow", "cross",
      "veer",   "leave",    "step",    "descend", "ascend", "travel",
      "approach", "bear",   "face",    "reach",   "stand",  "circle"};
  return verbs;
}

const std::unordered_set<std::string>& default_conjunctions() {
  static const std::unordered_set<std::string> conj = {"and", "then", "after",
                                                       "once", "until"};
  return conj;
}

// Closed-class words and a handful of frequent open-class entries. Checked
// before any suffix rule.
const std::unordered_map<std::string, Tag>& lexicon() {
  static const std::unordered_map<std::string, Tag> table = [] {
    std::unordered_map<std::string, Tag> t;
    auto put = [&t](Tag tag, std::initializer_list<const char*> words) {
      for (const char* w : words) t.emplace(w, tag);
    };
    put(Tag::kVerb,
        {"is", "are", "was", "were", "be", "been", "being", "am", "'re",
         "'s", "'m", "'ve", "'ll", "'d", "see", "will", "should", "can",
         "could", "would", "may", "might", "must", "shall", "find", "get",
         "do", "does", "did", "have", "has", "had", "come", "look", "end",
         "arrive", "want", "need", "let", "put", "sit", "start", "begin",
         "notice", "remain", "stay", "hit", "use", "run", "pause"});
    put(Tag::kConj, {"and", "or", "but", "then", "after", "once", "until",
                     "before", "while", "so", "when", "as", "because", "if",
                     "nor", "unless", "whereas", "whilst"});
    put(Tag::kDet, {"the", "a", "an", "this", "that", "these", "those",
                    "your", "each", "every", "another", "any", "some", "all",
                    "both", "either", "neither", "no", "its", "their", "his",
                    "her", "my", "our"});
    put(Tag::kPron, {"you", "it", "i", "me", "we", "us", "they", "them", "he",
                     "him", "she", "yourself", "which", "who", "whom",
                     "what", "one's", "itself"});
    put(Tag::kPrep,
        {"to", "of", "in", "on", "at", "by", "with", "from", "into", "onto",
         "through", "past", "toward", "towards", "across", "along", "around",
         "behind", "beside", "besides", "between", "near", "under", "over",
         "up", "down", "out", "inside", "outside", "beyond", "via", "for",
         "off", "against", "about", "above", "below", "beneath", "within",
         "without", "like", "than", "till", "throughout", "underneath",
         "alongside", "opposite", "among", "upon", "thru"});
    put(Tag::kAdv,
        {"left", "right", "straight", "forward", "forwards", "ahead", "back",
         "backward", "backwards", "again", "here", "there", "immediately",
         "just", "now", "away", "upstairs", "downstairs", "halfway", "not",
         "n't", "very", "also", "too", "almost", "where", "slightly",
         "sharply", "quickly", "carefully", "directly", "further",
         "twice", "outdoors", "indoors", "diagonally", "soon"});
    put(Tag::kAdj,
        {"first", "second", "third", "fourth", "fifth", "next", "last",
         "final", "other", "same", "open", "closed", "large", "small", "big",
         "little", "long", "short", "wooden", "white", "black", "red",
         "blue", "green", "brown", "gray", "grey", "yellow", "glass",
         "double", "front", "main", "narrow", "wide", "middle", "far",
         "nearest", "top", "bottom", "sliding", "entire", "whole", "few",
         "several", "many", "round", "square", "tall", "dark", "light"});
    put(Tag::kNum,
        {"zero", "one", "two", "three", "four", "five", "six", "seven",
         "eight", "nine", "ten", "eleven", "twelve", "fifteen", "twenty",
         "hundred", "half"});
    put(Tag::kOther, {"please", "okay", "ok", "yes", "oh"});
    return t;
  }();
  return table;
}

bool is_known_verb(const std::string& lower,
                   const std::unordered_set<std::string>* extra_verbs) {
  if (extra_verbs != nullptr && extra_verbs->count(lower)) return true;
  if (default_navigation_verbs().count(lower)) return true;
  auto it = lexicon().find(lower);
  return it != lexicon().end() && it->second == Tag::kVerb;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

bool is_boundary_punctuation(std::string_view word) {
  return is_punctuation(word) &&
         word.find_first_of(",;:.!?") != std::string_view::npos;
}

bool is_clause_punctuation(std::string_view word) {
  return is_punctuation(word) &&
         word.find_first_of(",;:") != std::string_view::npos &&
         word.find_first_of(".!?") == std::string_view::npos;
}

// A closed run of token indices. `closer` is the boundary punctuation that
// closed it under R1; it is not rendered but is restored when a later
// fragment merges back into this one.
struct Fragment {
  std::vector<std::size_t> indices;
  std::optional<std::size_t> closer;
};

// Mutable scan state for one sentence: the token indices accumulated into
// the current sub-instruction.
class RefineScanner {
 public:
  RefineScanner(const std::vector<Tag>& tags,
                const std::vector<std::string>& words,
                const RefineRuleSet& rules)
      : tags_(tags), words_(words), rules_(rules) {
    lower_.reserve(words.size());
    for (const std::string& w : words) lower_.push_back(to_lower(w));
  }

  bool decide(std::size_t i) const {
    if (i == 0) return false;
    const bool has_content = content_words_ > 0;
    if (is_boundary_punctuation(words_[i])) {
      // R1
      return word_count_ >= rules_.min_sub_words && has_nav_verb_;
    }
    if (!has_content) return false;
    if (tags_[i] == Tag::kConj && rules_.is_conjunction(lower_[i])) {
      // R2
      for (std::size_t k = i + 1; k <= i + 2 && k < words_.size(); ++k) {
        if (tags_[k] == Tag::kPunct) break;
        if (nav_verb_at(k)) return true;
      }
      return false;
    }
    // R3
    return nav_verb_at(i) && is_clause_punctuation(words_[i - 1]);
  }

  // Applies the outcome of decide(i); a closed sub is appended to
  // `fragments`.
  void step(std::size_t i, bool refine, std::vector<Fragment>& fragments) {
    if (refine) {
      if (word_count_ > 0) {
        fragments.push_back({current_, std::nullopt});
        if (tags_[i] == Tag::kPunct) fragments.back().closer = i;
      }
      reset();
      if (tags_[i] != Tag::kPunct) push(i);
      return;
    }
    // A bare punctuation token never starts a sub.
    if (tags_[i] == Tag::kPunct && current_.empty()) return;
    push(i);
  }

  void finish(std::vector<Fragment>& fragments) {
    if (word_count_ > 0) fragments.push_back({current_, std::nullopt});
    reset();
  }

 private:
  bool nav_verb_at(std::size_t k) const {
    return tags_[k] == Tag::kVerb && rules_.is_navigation_verb(lower_[k]);
  }

  void push(std::size_t i) {
    current_.push_back(i);
    if (tags_[i] == Tag::kPunct) return;
    ++word_count_;
    if (tags_[i] != Tag::kConj) ++content_words_;
    if (nav_verb_at(i)) has_nav_verb_ = true;
  }

  void reset() {
    current_.clear();
    word_count_ = 0;
    content_words_ = 0;
    has_nav_verb_ = false;
  }

  const std::vector<Tag>& tags_;
  const std::vector<std::string>& words_;
  const RefineRuleSet& rules_;
  std::vector<std::string> lower_;
  std::vector<std::size_t> current_;
  std::size_t word_count_ = 0;
  std::size_t content_words_ = 0;
  bool has_nav_verb_ = false;
};

bool attaches_left(std::string_view token) {
  return is_punctuation(token) && token != "(" && token != "[" &&
         token != "{";
}

std::string render(const std::vector<std::string>& words,
                   const std::vector<std::size_t>& indices) {
  std::size_t end = indices.size();
  while (end > 0 && is_clause_punctuation(words[indices[end - 1]])) --end;
  std::string out;
  bool glue_next = false;
  for (std::size_t k = 0; k < end; ++k) {
    const std::string& w = words[indices[k]];
    if (!out.empty() && !glue_next && !attaches_left(w)) out.push_back(' ');
    out += w;
    glue_next = (w == "(" || w == "[" || w == "{");
  }
  return out;
}

std::size_t fragment_words(const std::vector<std::string>& words,
                           const std::vector<std::size_t>& indices) {
  return static_cast<std::size_t>(
      std::count_if(indices.begin(), indices.end(),
                    [&](std::size_t i) { return !is_punctuation(words[i]); }));
}

void split_sentence(std::string_view sentence, const RefineRuleSet& rules,
                    std::vector<std::string>& out) {
  const std::vector<TaggedToken> tagged = pos_tag(sentence, rules);
  if (tagged.empty()) return;
  std::vector<std::string> words;
  std::vector<Tag> tags;
  words.reserve(tagged.size());
  tags.reserve(tagged.size());
  for (const TaggedToken& t : tagged) {
    words.push_back(t.word);
    tags.push_back(t.tag);
  }

  RefineScanner scanner(tags, words, rules);
  std::vector<Fragment> fragments;
  for (std::size_t i = 0; i < words.size(); ++i) {
    scanner.step(i, scanner.decide(i), fragments);
  }
  scanner.finish(fragments);

  std::vector<Fragment> merged;
  for (Fragment& f : fragments) {
    if (!merged.empty() &&
        fragment_words(words, f.indices) < rules.min_sub_words) {
      Fragment& prev = merged.back();
      if (prev.closer) prev.indices.push_back(*prev.closer);
      prev.indices.insert(prev.indices.end(), f.indices.begin(),
                          f.indices.end());
      prev.closer = f.closer;
    } else {
      merged.push_back(std::move(f));
    }
  }
  for (const Fragment& f : merged) out.push_back(render(words, f.indices));
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::string_view tag_name(Tag tag) {
  switch (tag) {
    case Tag::kVerb: return "VERB";
    case Tag::kNoun: return "NOUN";
    case Tag::kAdj: return "ADJ";
    case Tag::kAdv: return "ADV";
    case Tag::kConj: return "CONJ";
    case Tag::kPrep: return "PREP";
    case Tag::kDet: return "DET";
    case Tag::kPron: return "PRON";
    case Tag::kNum: return "NUM";
    case Tag::kPunct: return "PUNCT";
    case Tag::kOther: return "OTHER";
  }
  return "OTHER";
}

RefineRuleSet RefineRuleSet::defaults() {
  RefineRuleSet rules;
  rules.navigation_verbs = default_navigation_verbs();
  rules.conjunctions = default_conjunctions();
  rules.min_sub_words = 3;
  return rules;
}

void RefineRuleSet::validate() const {
  if (navigation_verbs.empty()) {
    throw std::invalid_argument("navigation-verb lexicon is empty");
  }
  if (conjunctions.empty()) {
    throw std::invalid_argument("conjunction lexicon is empty");
  }
  if (min_sub_words < 1) {
    throw std::invalid_argument("minimum sub-instruction word count must be >= 1");
  }
}

bool RefineRuleSet::is_navigation_verb(std::string_view word) const {
  return navigation_verbs.count(std::string(word)) > 0;
}

bool RefineRuleSet::is_conjunction(std::string_view word) const {
  return conjunctions.count(std::string(word)) > 0;
}

std::string clean_instruction(std::string_view raw) {
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const unsigned char c = raw[i];
    if (c == '\\' && i + 1 < raw.size() &&
        (raw[i + 1] == 'r' || raw[i + 1] == 'n' || raw[i + 1] == 't')) {
      text.push_back(' ');
      ++i;
    } else if (c < 0x20 || c == 0x7f) {
      text.push_back(' ');
    } else {
      text.push_back(static_cast<char>(c));
    }
  }

  // Markup: drop every <...> span that closes before the next '<'.
  std::string stripped;
  stripped.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '<') {
      const std::size_t close = text.find_first_of("<>", i + 1);
      if (close != std::string::npos && text[close] == '>') {
        stripped.push_back(' ');
        i = close;
        continue;
      }
    }
    stripped.push_back(text[i]);
  }

  std::string out;
  out.reserve(stripped.size());
  bool pending_space = false;
  for (char c : stripped) {
    if (c == ' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> coarse_split(std::string_view cleaned) {
  std::vector<std::string> sentences;
  auto emit = [&](std::size_t begin, std::size_t end) {
    while (begin < end && cleaned[begin] == ' ') ++begin;
    while (end > begin && cleaned[end - 1] == ' ') --end;
    if (end > begin) sentences.emplace_back(cleaned.substr(begin, end - begin));
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    const char c = cleaned[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < cleaned.size() &&
           (cleaned[end] == '.' || cleaned[end] == '!' || cleaned[end] == '?')) {
      ++end;
    }
    while (end < cleaned.size() &&
           (cleaned[end] == '"' || cleaned[end] == '\'' || cleaned[end] == ')')) {
      ++end;
    }
    const bool at_break = end == cleaned.size() || cleaned[end] == ' ';
    bool protected_period = false;
    if (c == '.' && end == i + 1) {
      std::size_t w = i;
      while (w > start && cleaned[w - 1] != ' ') --w;
      while (w < i && (cleaned[w] == '"' || cleaned[w] == '\'' ||
                       cleaned[w] == '(')) {
        ++w;
      }
      protected_period = instr::is_abbreviation(cleaned.substr(w, i + 1 - w));
    }
    if (at_break && !protected_period) {
      emit(start, end);
      start = end;
    }
    i = end;
  }
  emit(start, cleaned.size());
  return sentences;
}

Tag tag_word(std::string_view word,
             const std::unordered_set<std::string>* extra_verbs) {
  if (is_punctuation(word)) return Tag::kPunct;
  const std::string lower = to_lower(word);
  if (extra_verbs != nullptr && extra_verbs->count(lower)) return Tag::kVerb;
  if (default_navigation_verbs().count(lower)) return Tag::kVerb;
  if (auto it = lexicon().find(lower); it != lexicon().end()) return it->second;

  if (std::any_of(lower.begin(), lower.end(),
                  [](unsigned char c) { return std::isdigit(c); })) {
    return Tag::kNum;
  }
  if (lower.size() > 3 && ends_with(lower, "ly")) return Tag::kAdv;
  if (lower.size() > 4 && ends_with(lower, "ing")) return Tag::kVerb;
  if (lower.size() > 3 && ends_with(lower, "ed")) return Tag::kVerb;
  if (lower.size() > 2 && ends_with(lower, "s")) {
    if (is_known_verb(lower.substr(0, lower.size() - 1), extra_verbs)) {
      return Tag::kVerb;
    }
    if (ends_with(lower, "es") &&
        is_known_verb(lower.substr(0, lower.size() - 2), extra_verbs)) {
      return Tag::kVerb;
    }
  }
  return Tag::kNoun;
}

std::vector<TaggedToken> pos_tag(std::string_view sentence) {
  std::vector<TaggedToken> out;
  for (std::string& w : instr::split_words(sentence)) {
    const Tag tag = tag_word(w);
    out.push_back({std::move(w), tag});
  }
  return out;
}

std::vector<TaggedToken> pos_tag(std::string_view sentence,
                                 const RefineRuleSet& rules) {
  std::vector<TaggedToken> out;
  for (std::string& w : instr::split_words(sentence)) {
    const Tag tag = tag_word(w, &rules.navigation_verbs);
    out.push_back({std::move(w), tag});
  }
  return out;
}

bool need_refine(std::size_t i, const std::vector<Tag>& tags,
                 const std::vector<std::string>& words,
                 const RefineRuleSet& rules) {
  if (tags.size() != words.size()) {
    throw std::invalid_argument("need_refine: tags and words differ in length");
  }
  if (i >= words.size()) {
    throw std::out_of_range("need_refine: index " + std::to_string(i) +
                            " out of range for " +
                            std::to_string(words.size()) + " words");
  }
  RefineScanner scanner(tags, words, rules);
  std::vector<Fragment> scratch;
  for (std::size_t k = 0; k < i; ++k) scanner.step(k, scanner.decide(k), scratch);
  return scanner.decide(i);
}

std::vector<std::string> split_instruction(std::string_view raw,
                                           const RefineRuleSet& rules) {
  std::vector<std::string> subs;
  for (const std::string& sentence : coarse_split(clean_instruction(raw))) {
    split_sentence(sentence, rules, subs);
  }
  return subs;
}

Segmentation segment_instruction(std::string_view raw,
                                 const RefineRuleSet& rules,
                                 const instr::Vocab& vocab) {
  Segmentation seg;
  seg.sub_instructions = split_instruction(raw, rules);
  seg.tokens.reserve(seg.sub_instructions.size());
  for (const std::string& sub : seg.sub_instructions) {
    seg.tokens.push_back(instr::vocab_tokenize(sub, vocab));
  }
  return seg;
}

void segment_corpus(std::vector<instr::InstructionRecord>& records,
                    const RefineRuleSet& rules, const instr::Vocab& vocab,
                    unsigned threads) {
  parallel_for(records.size(), threads, [&](std::size_t i) {
    Segmentation seg = segment_instruction(records[i].instruction, rules, vocab);
    records[i].sub_instructions = std::move(seg.sub_instructions);
    records[i].tokens = std::move(seg.tokens);
  });
}

void split_corpus(std::vector<instr::InstructionRecord>& records,
                  const RefineRuleSet& rules, unsigned threads) {
  parallel_for(records.size(), threads, [&](std::size_t i) {
    records[i].sub_instructions = split_instruction(records[i].instruction, rules);
    records[i].tokens.clear();
  });
}

void tokenize_corpus(std::vector<instr::InstructionRecord>& records,
                     const instr::Vocab& vocab) {
  for (instr::InstructionRecord& r : records) {
    r.tokens.clear();
    for (const std::string& sub : r.sub_instructions) {
      r.tokens.push_back(instr::vocab_tokenize(sub, vocab));
    }
  }
}

CorpusStats corpus_stats(const std::vector<instr::InstructionRecord>& records) {
  if (records.empty()) {
    throw std::invalid_argument("corpus_stats: empty corpus");
  }
  CorpusStats stats;
  stats.record_count = records.size();
  std::size_t segmented = 0;
  std::size_t total_subs = 0;
  for (const instr::InstructionRecord& r : records) {
    const std::size_t n = r.sub_instructions.size();
    if (n >= 2) ++segmented;
    total_subs += n;
    ++stats.count_histogram[n];
  }
  stats.segment_ratio =
      static_cast<double>(segmented) / static_cast<double>(records.size());
  stats.avg_sub_count =
      static_cast<double>(total_subs) / static_cast<double>(records.size());
  return stats;
}

void write_histogram_csv(const CorpusStats& stats, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw instr::IoError("cannot write " + path);
  out << "sub_count,frequency\n";
  for (const auto& [count, freq] : stats.count_histogram) {
    out << count << ',' << freq << '\n';
  }
  if (!out) throw instr::IoError("write failed: " + path);
}

ThroughputReport bench_throughput(
    const std::vector<instr::InstructionRecord>& records, std::size_t repeat,
    const RefineRuleSet& rules, const instr::Vocab& vocab) {
  if (records.empty()) {
    throw std::invalid_argument("bench_throughput: empty corpus");
  }
  if (repeat == 0) throw std::invalid_argument("bench_throughput: repeat == 0");

  using Clock = std::chrono::steady_clock;
  std::size_t subs = 0;
  const auto t0 = Clock::now();
  for (std::size_t r = 0; r < repeat; ++r) {
    for (const instr::InstructionRecord& rec : records) {
      subs += segment_instruction(rec.instruction, rules, vocab)
                  .sub_instructions.size();
    }
  }
  const auto t1 = Clock::now();

  ThroughputReport report;
  report.instructions = records.size() * repeat;
  report.total_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.sub_instructions = subs;
  const double seconds = std::max(report.total_seconds, 1e-9);
  report.instructions_per_second =
      static_cast<double>(report.instructions) / seconds;
  return report;
}

}  // namespace subnav::fsa
