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

#include "subnav/instr.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace subnav::instr {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 4> kReservedTokens = {
    "<pad>", "<unk>", "<start>", "<end>"};

constexpr std::array<std::string_view, 20> kAbbreviations = {
    "mr.",  "mrs.", "ms.", "dr.",  "st.",  "vs.",  "etc.",
    "e.g.", "i.e.", "ft.", "no.",  "jr.",  "sr.",  "ave.",
    "rd.",  "mt.",  "approx.", "prof.", "blvd.", "apt."};

bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c);
}

bool is_word_byte(unsigned char c) {
  return c >= 0x80 || std::isalnum(c);
}

bool is_space(unsigned char c) { return c < 0x80 && std::isspace(c); }

// Length of a known abbreviation starting at `start`, or 0.
std::size_t abbreviation_at(std::string_view s, std::size_t start) {
  for (std::string_view abbr : kAbbreviations) {
    if (start + abbr.size() > s.size()) continue;
    if (to_lower(s.substr(start, abbr.size())) != abbr) continue;
    const std::size_t end = start + abbr.size();
    if (end < s.size() && is_word_byte(s[end])) continue;
    return abbr.size();
  }
  return 0;
}

void split_chunk(std::string_view s, std::vector<std::string>& out) {
  std::string word;
  std::size_t word_start = 0;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  auto at = [&](std::size_t k) -> unsigned char {
    return k < s.size() ? static_cast<unsigned char>(s[k]) : '\0';
  };

  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = s[i];
    if (is_word_byte(c)) {
      if (word.empty()) word_start = i;
      word.push_back(static_cast<char>(c));
      ++i;
      continue;
    }
    // Decimal and thousands separators: "2.5", "1,000".
    if ((c == '.' || c == ',') && !word.empty() &&
        std::isdigit(static_cast<unsigned char>(word.back())) &&
        std::isdigit(at(i + 1))) {
      word.push_back(static_cast<char>(c));
      ++i;
      continue;
    }
    // Hyphenated compounds: "left-hand".
    if (c == '-' && !word.empty() && std::isalnum(at(i + 1))) {
      word.push_back('-');
      ++i;
      continue;
    }
    if (c == '.' && !word.empty()) {
      const std::size_t len = abbreviation_at(s, word_start);
      if (len > 0 && i < word_start + len) {
        word.append(s.substr(i, word_start + len - i));
        i = word_start + len;
        flush();
        continue;
      }
    }
    if (c == '\'' && std::isalpha(at(i + 1))) {
      // "n't" splits before the n: "don't" -> "do" "n't".
      if (!word.empty() && (word.back() == 'n' || word.back() == 'N') &&
          (at(i + 1) == 't' || at(i + 1) == 'T') && !is_word_byte(at(i + 2))) {
        const char n = word.back();
        word.pop_back();
        flush();
        word.push_back(n);
        word.push_back('\'');
        word_start = i - 1;
        ++i;
        continue;
      }
      flush();
      word.push_back('\'');
      word_start = i;
      ++i;
      continue;
    }
    flush();
    std::string run;
    while (i < s.size() && is_ascii_punct(static_cast<unsigned char>(s[i]))) {
      if (s[i] == '\'' && std::isalpha(at(i + 1))) break;
      run.push_back(s[i]);
      ++i;
    }
    if (run.empty()) {
      // Control characters that survived cleaning act as separators.
      ++i;
    } else {
      out.push_back(std::move(run));
    }
  }
  flush();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) split_chunk(text.substr(i, j - i), out);
    i = j;
  }
  return out;
}

bool is_punctuation(std::string_view word) {
  if (word.empty()) return false;
  return std::all_of(word.begin(), word.end(), [](char c) {
    return is_ascii_punct(static_cast<unsigned char>(c));
  });
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) {
      c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  return out;
}

bool is_abbreviation(std::string_view word_with_period) {
  const std::string lower = to_lower(word_with_period);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) !=
         kAbbreviations.end();
}

Vocab::Vocab() {
  for (std::string_view t : kReservedTokens) add(t);
}

int Vocab::add(std::string_view token) {
  std::string key = to_lower(token);
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(to_lower(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocab id " + std::to_string(id) +
                            " out of range");
  }
  return tokens_[id];
}

bool Vocab::contains(std::string_view token) const {
  return ids_.count(to_lower(token)) > 0;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const std::string& t : tokens_) out << t << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (lines.size() < kReservedTokens.size()) {
    throw FormatError(path + ": vocabulary is missing reserved tokens");
  }
  Vocab vocab;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i < kReservedTokens.size()) {
      if (lines[i] != kReservedTokens[i]) {
        throw FormatError(path + ": line " + std::to_string(i + 1) +
                          ": expected reserved token " +
                          std::string(kReservedTokens[i]));
      }
      continue;
    }
    if (lines[i].empty() || vocab.contains(lines[i])) {
      throw FormatError(path + ": line " + std::to_string(i + 1) +
                        ": empty or duplicate token");
    }
    vocab.add(lines[i]);
  }
  return vocab;
}

InstructionRecord parse_record(std::string_view line,
                               std::size_t line_number) {
  const std::string where = "line " + std::to_string(line_number) + ": ";
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(where + "parse failure: " + e.what());
  }
  if (!j.is_object()) throw FormatError(where + "expected a JSON object");

  InstructionRecord rec;
  try {
    if (!j.contains("id") || !j["id"].is_string()) {
      throw FormatError(where + "missing string field 'id'");
    }
    if (!j.contains("instruction") || !j["instruction"].is_string()) {
      throw FormatError(where + "missing string field 'instruction'");
    }
    rec.id = j["id"].get<std::string>();
    rec.instruction = j["instruction"].get<std::string>();
    if (j.contains("sub_instructions")) {
      rec.sub_instructions =
          j["sub_instructions"].get<std::vector<std::string>>();
    }
    if (j.contains("tokens")) {
      for (const json& row : j["tokens"]) {
        std::vector<int> ids;
        for (const json& v : row) {
          if (!v.is_number_integer() || v.get<long long>() < 0 ||
              v.get<long long>() > INT32_MAX) {
            throw FormatError(where + "token ids must be non-negative integers");
          }
          ids.push_back(v.get<int>());
        }
        rec.tokens.push_back(std::move(ids));
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(where + "bad field type: " + e.what());
  }
  return rec;
}

std::vector<InstructionRecord> load_corpus(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<InstructionRecord> records;
  std::size_t line_number = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_number;
    if (trim(line).empty()) continue;
    records.push_back(parse_record(line, line_number));
  }
  return records;
}

std::string format_record(const InstructionRecord& record) {
  json j;
  j["id"] = record.id;
  j["instruction"] = record.instruction;
  j["sub_instructions"] = record.sub_instructions;
  j["tokens"] = record.tokens;
  return j.dump(-1, ' ', false, json::error_handler_t::strict);
}

void validate_segmented(const InstructionRecord& record) {
  const std::string where = "record '" + record.id + "': ";
  if (record.sub_instructions.empty()) {
    throw FormatError(where + "no sub-instructions");
  }
  if (record.tokens.size() != record.sub_instructions.size()) {
    throw FormatError(where + "tokens has " +
                      std::to_string(record.tokens.size()) +
                      " entries for " +
                      std::to_string(record.sub_instructions.size()) +
                      " sub-instructions");
  }
  for (const std::string& sub : record.sub_instructions) {
    if (trim(sub).empty()) throw FormatError(where + "empty sub-instruction");
  }
}

void write_fsasub(const std::vector<InstructionRecord>& records,
                  const std::string& path) {
  for (const InstructionRecord& r : records) validate_segmented(r);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  for (const InstructionRecord& r : records) out << format_record(r) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<int> vocab_tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<int> ids;
  for (const std::string& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

Vocab build_vocab(const std::vector<InstructionRecord>& corpus,
                  std::size_t min_freq) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  auto count_text = [&](std::string_view text) {
    for (const std::string& w : split_words(text)) {
      std::string key = to_lower(w);
      if (counts[key]++ == 0) order.push_back(std::move(key));
    }
  };
  for (const InstructionRecord& r : corpus) {
    if (r.segmented()) {
      for (const std::string& sub : r.sub_instructions) count_text(sub);
    } else {
      count_text(r.instruction);
    }
  }
  Vocab vocab;
  for (const std::string& w : order) {
    if (counts[w] >= min_freq) vocab.add(w);
  }
  return vocab;
}

}  // namespace subnav::instr
