#pragma once

// Word-level tokenizer and vocabulary. Lowercases, splits on whitespace and
// breaks punctuation marks out as single-character tokens, so lexicon lookup
// sees whole surface words. [CLS] heads every sequence; [SEP] separates the
// utterances of a conversation.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "kea/error.hpp"
#include "kea/lexicon.hpp"

namespace kea {

namespace tok {
inline constexpr const char* kPad = "[PAD]";
inline constexpr const char* kCls = "[CLS]";
inline constexpr const char* kSep = "[SEP]";
inline constexpr const char* kUnk = "[UNK]";
}  // namespace tok

namespace detail {

// <user> and <url> are the tweet-preprocessing sentinels; keep them atomic.
inline bool is_sentinel_word(const std::string& w) { return w == "<user>" || w == "<url>"; }

inline void append_word_tokens(const std::string& word, std::vector<std::string>& out) {
  if (is_sentinel_word(word)) {
    out.push_back(word);
    return;
  }
  std::string run;
  for (char ch : word) {
    if (std::ispunct(static_cast<unsigned char>(ch))) {
      if (!run.empty()) {
        out.push_back(run);
        run.clear();
      }
      out.push_back(std::string(1, ch));
    } else {
      run.push_back(ch);
    }
  }
  if (!run.empty()) out.push_back(run);
}

inline void tokenize_into(const std::string& text, std::vector<std::string>& out) {
  std::string word;
  for (char ch : lowercase(text)) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!word.empty()) {
        append_word_tokens(word, out);
        word.clear();
      }
    } else {
      word.push_back(ch);
    }
  }
  if (!word.empty()) append_word_tokens(word, out);
}

}  // namespace detail

// [CLS] + lowercased word/punctuation tokens, truncated to max_len.
inline std::vector<std::string> tokenize(const std::string& text, std::size_t max_len = 64) {
  std::vector<std::string> tokens = {tok::kCls};
  detail::tokenize_into(text, tokens);
  if (tokens.size() > max_len) tokens.resize(max_len);
  return tokens;
}

// Conversation form: utterances joined with [SEP] between them.
inline std::vector<std::string> tokenize_conversation(const std::vector<std::string>& utterances,
                                                      std::size_t max_len = 64) {
  std::vector<std::string> tokens = {tok::kCls};
  for (std::size_t u = 0; u < utterances.size(); ++u) {
    if (u > 0) tokens.push_back(tok::kSep);
    detail::tokenize_into(utterances[u], tokens);
  }
  if (tokens.size() > max_len) tokens.resize(max_len);
  return tokens;
}

// --- vocabulary ---------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr std::size_t kPadId = 0;
  static constexpr std::size_t kClsId = 1;
  static constexpr std::size_t kSepId = 2;
  static constexpr std::size_t kUnkId = 3;

  Vocabulary() { reset_reserved(); }

  // Frequency cutoff over the training token sequences; non-reserved tokens
  // enter in (count desc, token asc) order so ids are reproducible.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sequences,
                          std::size_t min_freq) {
    std::map<std::string, std::size_t> counts;
    for (const auto& seq : sequences)
      for (const auto& t : seq)
        if (!is_special_token(t)) ++counts[t];

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [token, count] : ranked) {
      if (count < min_freq) continue;
      v.add(token);
    }
    return v;
  }

  static Vocabulary from_tokens(const std::vector<std::string>& ordered_tokens) {
    Vocabulary v;
    if (ordered_tokens.size() < 4 || ordered_tokens[0] != tok::kPad ||
        ordered_tokens[1] != tok::kCls || ordered_tokens[2] != tok::kSep ||
        ordered_tokens[3] != tok::kUnk) {
      throw ConfigError("Vocabulary::from_tokens: reserved ids 0..3 must be "
                        "[PAD], [CLS], [SEP], [UNK]");
    }
    for (std::size_t i = 4; i < ordered_tokens.size(); ++i) v.add(ordered_tokens[i]);
    return v;
  }

  std::size_t id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
  }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) {
      throw IdError("Vocabulary: id " + std::to_string(id) + " out of range, size " +
                    std::to_string(tokens_.size()));
    }
    return tokens_[id];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& toks) const {
    std::vector<std::size_t> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

 private:
  void reset_reserved() {
    tokens_ = {tok::kPad, tok::kCls, tok::kSep, tok::kUnk};
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_[tokens_[i]] = i;
  }

  void add(const std::string& token) {
    if (ids_.count(token)) return;
    ids_[token] = tokens_.size();
    tokens_.push_back(token);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Tokens paired with vocabulary ids.
struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<std::size_t> ids;
};

inline TokenSequence make_sequence(std::vector<std::string> tokens, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.ids = vocab.encode(tokens);
  seq.tokens = std::move(tokens);
  return seq;
}

}  // namespace kea
