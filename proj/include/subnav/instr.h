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

// Instruction records, the sub-instruction JSON-lines format and the
// vocabulary used to turn words into integer ids.

#ifndef SUBNAV_INSTR_H_
#define SUBNAV_INSTR_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace subnav::instr {

// One navigation instruction and, once segmented, its sub-instructions.
// `tokens[n]` holds the vocabulary ids of `sub_instructions[n]`.
struct InstructionRecord {
  std::string id;
  std::string instruction;
  std::vector<std::string> sub_instructions;
  std::vector<std::vector<int>> tokens;

  bool segmented() const { return !sub_instructions.empty(); }

  friend bool operator==(const InstructionRecord&,
                         const InstructionRecord&) = default;
};

// Raised for malformed corpus lines and records that break the FSASub
// invariants.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a file cannot be opened or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Splits text into word tokens: whitespace separates words, punctuation is
// split off into its own tokens (runs such as "..." or "?!" stay together),
// apostrophe clitics become separate tokens ("you're" -> "you", "'re";
// "don't" -> "do", "n't"), and decimals ("2.5") and known abbreviations
// ("mr.") are kept whole. Case is preserved.
std::vector<std::string> split_words(std::string_view text);

// True iff every byte of `word` is ASCII punctuation (and `word` is
// non-empty).
bool is_punctuation(std::string_view word);

// ASCII lower-casing; bytes >= 0x80 pass through untouched.
std::string to_lower(std::string_view text);

// Known abbreviations that keep their trailing period.
bool is_abbreviation(std::string_view word_with_period);

// Token -> id map. Ids 0..3 are reserved; lookups are case-insensitive.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kStart = 2;
  static constexpr int kEnd = 3;
  static constexpr int kReservedCount = 4;

  Vocab();

  // Adds `token` (lower-cased) if absent and returns its id.
  int add(std::string_view token);
  // Id of `token`, or kUnk.
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, line index = id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Reads a JSON-lines corpus. `sub_instructions` and `tokens` are optional
// per line. Throws FormatError("line N: ...") on a malformed line and
// IoError when the file cannot be opened.
std::vector<InstructionRecord> load_corpus(const std::string& path);

// Parses one JSON-lines record; `line_number` is used in error messages.
InstructionRecord parse_record(std::string_view line, std::size_t line_number);

// Serializes one record as a single JSON line (no trailing newline).
std::string format_record(const InstructionRecord& record);

// Writes segmented records as JSON lines. Every record must carry
// sub-instructions and one token list per sub-instruction.
void write_fsasub(const std::vector<InstructionRecord>& records,
                  const std::string& path);

// Checks the FSASub invariants on a single record; throws FormatError.
void validate_segmented(const InstructionRecord& record);

// One id per word (see split_words); unknown words map to Vocab::kUnk.
std::vector<int> vocab_tokenize(std::string_view text, const Vocab& vocab);

// Words with frequency >= min_freq get ids >= 4 in first-occurrence order.
// Counts come from the sub-instructions of segmented records and from the
// instruction text of unsegmented ones.
Vocab build_vocab(const std::vector<InstructionRecord>& corpus,
                  std::size_t min_freq);

}  // namespace subnav::instr

#endif  // SUBNAV_INSTR_H_
