#pragma once

// Sign understanding: assemble the in-context parse request, extract cue
// sets from VLM replies (tolerant of fences and quote styles, strict on
// keys), and merge cues over a sign's parse history by per-location
// majority vote.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "atomnav/errors.hpp"
#include "atomnav/ports.hpp"
#include "atomnav/prompts.hpp"
#include "atomnav/scene.hpp"

namespace atomnav {

// ---------------------------------------------------------------------------
// Symbol dictionary
// ---------------------------------------------------------------------------

struct SymbolDictionary {
  std::string image_ref;
  std::string image_bytes;
  std::vector<std::pair<int, std::string>> labels;  // index -> token

  /// Canonical JSON of the labels, insertion order preserved.
  std::string labels_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [idx, label] : labels) j[std::to_string(idx)] = label;
    return j.dump();
  }

  void validate() const {
    for (const auto& [idx, label] : labels)
      if (!instruction_from_token(label))
        throw Error("symbol dictionary label is not an instruction token: " +
                    label);
  }

  /// Default dictionary: the 17 tokens in vocabulary order with a tiny
  /// placeholder sheet. Shipping assets override both.
  static SymbolDictionary builtin();

  static SymbolDictionary load(const std::filesystem::path& labels_path,
                               const std::filesystem::path& image_path) {
    SymbolDictionary d;
    const nlohmann::ordered_json j =
        nlohmann::ordered_json::parse(read_file(labels_path));
    for (const auto& [key, value] : j.items())
      d.labels.emplace_back(std::stoi(key), value.get<std::string>());
    d.image_ref = image_path.string();
    d.image_bytes = read_file(image_path);
    d.validate();
    return d;
  }
};

inline SymbolDictionary SymbolDictionary::builtin() {
  SymbolDictionary d;
  for (int i = 0; i < kInstructionCount; ++i)
    d.labels.emplace_back(i, instruction_tokens()[std::size_t(i)]);
  d.image_ref = "<builtin>";
  const std::uint8_t white = 255;
  d.image_bytes = encode_png_gray8(1, 1, &white);
  return d;
}

// ---------------------------------------------------------------------------
// Parse request
// ---------------------------------------------------------------------------

inline std::string replace_all(std::string text, std::string_view needle,
                               std::string_view replacement) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), replacement);
    pos += replacement.size();
  }
  return text;
}

inline VlmRequest build_parse_request(const std::string& sign_image,
                                      const SymbolDictionary& dict) {
  VlmRequest r;
  r.add_image(dict.image_bytes);
  r.add_text(replace_all(kInContextPromptTemplate, "{symbolDictionary}",
                         dict.labels_json()));
  r.add_image(sign_image);
  r.add_text(kParsePrompt);
  return r;
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

namespace detail {

// Hand-rolled parser for the dict literals VLMs actually produce: single or
// double quotes, trailing commas, scalar-for-list, stray whitespace.
class ReplyDictParser {
 public:
  explicit ReplyDictParser(std::string_view s) : s_(s) {}

  std::optional<std::vector<std::pair<std::string, std::vector<std::string>>>>
  parse() {
    skip_ws();
    if (!eat('{')) return std::nullopt;
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    skip_ws();
    if (eat('}')) return entries;
    for (;;) {
      skip_ws();
      auto key = parse_scalar();
      if (!key) return std::nullopt;
      skip_ws();
      if (!eat(':')) return std::nullopt;
      skip_ws();
      std::vector<std::string> values;
      if (peek() == '[') {
        if (!parse_list(values)) return std::nullopt;
      } else {
        auto v = parse_scalar();
        if (!v) return std::nullopt;
        if (!v->empty()) values.push_back(*v);
      }
      entries.emplace_back(std::move(*key), std::move(values));
      skip_ws();
      if (eat(',')) {
        skip_ws();
        if (eat('}')) return entries;  // trailing comma
        continue;
      }
      if (eat('}')) return entries;
      return std::nullopt;
    }
  }

 private:
  bool parse_list(std::vector<std::string>& out) {
    if (!eat('[')) return false;
    skip_ws();
    if (eat(']')) return true;
    for (;;) {
      skip_ws();
      auto v = parse_scalar();
      if (!v) return false;
      if (!v->empty()) out.push_back(*v);
      skip_ws();
      if (eat(',')) {
        skip_ws();
        if (eat(']')) return true;
        continue;
      }
      if (eat(']')) return true;
      return false;
    }
  }

  // quoted string (either quote, backslash escapes) or bare word
  std::optional<std::string> parse_scalar() {
    const char q = peek();
    std::string out;
    if (q == '\'' || q == '"') {
      ++pos_;
      while (pos_ < s_.size()) {
        const char c = s_[pos_++];
        if (c == '\\' && pos_ < s_.size()) {
          out.push_back(s_[pos_++]);
          continue;
        }
        if (c == q) return out;
        out.push_back(c);
      }
      return std::nullopt;  // unterminated
    }
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == ',' || c == ':' || c == '}' || c == ']' || c == '[' ||
          c == '\n')
        break;
      out.push_back(c);
      ++pos_;
    }
    while (!out.empty() && (out.back() == ' ' || out.back() == '\t'))
      out.pop_back();
    if (out.empty()) return std::nullopt;
    return out;
  }

  void skip_ws() {
    while (pos_ < s_.size() &&
           (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' ||
            s_[pos_] == '\r'))
      ++pos_;
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  bool eat(char c) {
    if (peek() != c) return false;
    ++pos_;
    return true;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::optional<std::string_view> extract_dict_literal(
    std::string_view text) {
  const std::size_t open = text.find('{');
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  char quote = '\0';
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (quote != '\0') {
      if (c == '\\') {
        ++i;
      } else if (c == quote) {
        quote = '\0';
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) return text.substr(open, i - open + 1);
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Extract a NavCueSet from a raw VLM reply. Keys outside the vocabulary are
/// dropped with a warning; phrases are normalized and deduplicated.
inline NavCueSet parse_vlm_reply(std::string_view text,
                                 std::vector<std::string>* warnings = nullptr) {
  auto warn = [warnings](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  const auto literal = detail::extract_dict_literal(text);
  if (!literal) throw UnparseableReply(std::string(text));
  auto entries = detail::ReplyDictParser(*literal).parse();
  if (!entries) throw UnparseableReply(std::string(text));

  NavCueSet out;
  for (auto& [raw_key, values] : *entries) {
    const std::string key = normalize_phrase(raw_key);
    const auto token = instruction_from_token(key);
    if (!token) {
      warn("dropped unknown key '" + key + "'");
      continue;
    }
    for (const auto& raw_phrase : values) {
      const std::string phrase = normalize_phrase(raw_phrase);
      if (phrase.empty()) {
        warn("dropped empty phrase under '" + key + "'");
        continue;
      }
      if (*token == Instruction::kLocational)
        out.add_locational(phrase);
      else
        out.add_cue(phrase, *token);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal merging
// ---------------------------------------------------------------------------

/// Union locations across the history; per location the instruction is the
/// mode over all sets mentioning it, ties to the earliest-observed
/// instruction. Locational phrases are unioned. Idempotent.
inline NavCueSet merge_cues(const std::vector<NavCueSet>& history) {
  struct Vote {
    int count = 0;
    std::size_t first_seen = std::size_t(-1);
  };
  std::vector<std::string> location_order;
  std::map<std::string, std::map<Instruction, Vote>> votes;
  NavCueSet out;

  std::size_t seq = 0;
  for (const auto& set : history) {
    for (const auto& cue : set.cues) {
      auto it = votes.find(cue.location);
      if (it == votes.end()) {
        location_order.push_back(cue.location);
        it = votes.emplace(cue.location,
                           std::map<Instruction, Vote>{}).first;
      }
      Vote& v = it->second[cue.instruction];
      v.count += 1;
      v.first_seen = std::min(v.first_seen, seq);
      ++seq;
    }
    for (const auto& loc : set.locational) out.add_locational(loc);
  }

  for (const auto& loc : location_order) {
    const auto& candidates = votes.at(loc);
    Instruction best = candidates.begin()->first;
    Vote best_vote = candidates.begin()->second;
    for (const auto& [instr, vote] : candidates) {
      if (vote.count > best_vote.count ||
          (vote.count == best_vote.count &&
           vote.first_seen < best_vote.first_seen)) {
        best = instr;
        best_vote = vote;
      }
    }
    out.add_cue(loc, best);
  }
  return out;
}

}  // namespace atomnav
