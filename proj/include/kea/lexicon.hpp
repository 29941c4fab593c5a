#pragma once

// Emotion lexicons: word -> real-vector knowledge used to build the emotional
// feature matrix X_e. Ships with profiles for VAD (valence/arousal/dominance,
// values in [0,1], out-of-vocabulary default 0.5) and the eight-channel
// emotion intensity lexicon (default 0.0).

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kea/error.hpp"

namespace kea {

inline std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline const std::vector<std::string>& eil_channel_order() {
  static const std::vector<std::string> order = {"anger", "anticipation", "disgust", "fear",
                                                 "joy",   "sadness",      "surprise", "trust"};
  return order;
}

struct Lexicon {
  std::string name;
  std::vector<std::string> channel_names;
  std::unordered_map<std::string, std::vector<double>> entries;
  std::vector<double> defaults;

  std::size_t channels() const { return channel_names.size(); }

  // Case-insensitive; unknown words (and special tokens) get the defaults.
  const std::vector<double>& lookup(const std::string& token) const {
    auto it = entries.find(lowercase(token));
    return it == entries.end() ? defaults : it->second;
  }

  bool contains(const std::string& token) const {
    return entries.find(lowercase(token)) != entries.end();
  }
};

namespace detail {

inline bool parse_real(const std::string& field, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(field, &used);
    return used == field.size();
  } catch (const std::exception&) {
    return false;
  }
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace detail

// TAB-separated file: word then l_e reals per line. An optional header line
// (second column not numeric) is skipped; duplicate words keep the last row.
inline Lexicon load_lexicon(const std::string& path, std::size_t l_e,
                            std::vector<double> defaults,
                            std::vector<std::string> channel_names = {},
                            std::string name = "") {
  if (l_e == 0) throw ConfigError("load_lexicon: channel count must be positive");
  if (defaults.size() != l_e) {
    throw ConfigError("load_lexicon: " + std::to_string(defaults.size()) + " defaults for " +
                      std::to_string(l_e) + " channels");
  }
  std::ifstream in(path);
  if (!in) throw IoError("load_lexicon: cannot open " + path);

  Lexicon lex;
  lex.name = name.empty() ? path : std::move(name);
  lex.defaults = std::move(defaults);
  if (channel_names.empty()) {
    for (std::size_t c = 0; c < l_e; ++c) channel_names.push_back("ch" + std::to_string(c));
  }
  if (channel_names.size() != l_e) {
    throw ConfigError("load_lexicon: channel name count does not match channel count");
  }
  lex.channel_names = std::move(channel_names);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_tabs(line);
    if (line_no == 1 && fields.size() >= 2) {
      double probe;
      if (!detail::parse_real(fields[1], probe)) continue;  // header
    }
    if (fields.size() != 1 + l_e) {
      throw ParseError("load_lexicon: line " + std::to_string(line_no) + " of " + path + " has " +
                       std::to_string(fields.size()) + " columns, expected " +
                       std::to_string(1 + l_e));
    }
    std::vector<double> values(l_e);
    for (std::size_t c = 0; c < l_e; ++c) {
      if (!detail::parse_real(fields[1 + c], values[c])) {
        throw ParseError("load_lexicon: line " + std::to_string(line_no) + " of " + path +
                         ": cannot parse '" + fields[1 + c] + "'");
      }
    }
    lex.entries[lowercase(fields[0])] = std::move(values);
  }
  if (lex.entries.empty()) throw ParseError("load_lexicon: " + path + " holds no entries");
  return lex;
}

inline Lexicon load_vad_lexicon(const std::string& path) {
  return load_lexicon(path, 3, {0.5, 0.5, 0.5}, {"valence", "arousal", "dominance"}, "vad");
}

inline Lexicon load_eil_lexicon(const std::string& path) {
  return load_lexicon(path, 8, std::vector<double>(8, 0.0), eil_channel_order(), "eil");
}

// --- emotional features -----------------------------------------------------

// N x l_e matrix of lexicon values, one row per token. Plain doubles: the
// knowledge channels are inputs, never learned.
struct EmotionFeatures {
  std::size_t tokens = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // row-major tokens x channels

  double at(std::size_t i, std::size_t c) const { return values[i * channels + c]; }
};

inline bool is_special_token(const std::string& tok) {
  return tok == "[CLS]" || tok == "[SEP]" || tok == "[PAD]" || tok == "[UNK]";
}

inline EmotionFeatures featurize(const std::vector<std::string>& tokens, const Lexicon& lex) {
  EmotionFeatures f;
  f.tokens = tokens.size();
  f.channels = lex.channels();
  f.values.reserve(f.tokens * f.channels);
  for (const auto& tok : tokens) {
    const auto& v = is_special_token(tok) ? lex.defaults : lex.lookup(tok);
    f.values.insert(f.values.end(), v.begin(), v.end());
  }
  return f;
}

// Transpose X_e into per-channel vectors, padded (or truncated) to L_pad.
inline std::vector<std::vector<double>> pad_channels(const EmotionFeatures& xe, std::size_t l_pad,
                                                     double pad_value) {
  if (l_pad == 0) throw ConfigError("pad_channels: L_pad must be positive");
  std::vector<std::vector<double>> channels(xe.channels, std::vector<double>(l_pad, pad_value));
  const std::size_t n = std::min(xe.tokens, l_pad);
  for (std::size_t c = 0; c < xe.channels; ++c)
    for (std::size_t i = 0; i < n; ++i) channels[c][i] = xe.at(i, c);
  return channels;
}

// --- EIL long <-> wide conversion --------------------------------------------
//
// The published intensity lexicon is long-form (word, emotion, score). The
// loader wants the wide 8-column layout with the fixed channel order above;
// these convert between the two. Missing (word, emotion) pairs become 0 in
// wide form, and only non-zero scores are emitted back.

inline void eil_long_to_wide(const std::string& long_path, const std::string& wide_path) {
  std::ifstream in(long_path);
  if (!in) throw IoError("eil_long_to_wide: cannot open " + long_path);
  const auto& order = eil_channel_order();
  std::map<std::string, std::vector<double>> rows;  // sorted for stable output
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError("eil_long_to_wide: line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " columns, expected 3");
    }
    double score;
    if (!detail::parse_real(fields[2], score)) {
      if (line_no == 1) continue;  // header
      throw ParseError("eil_long_to_wide: line " + std::to_string(line_no) +
                       ": cannot parse score '" + fields[2] + "'");
    }
    const std::string emotion = lowercase(fields[1]);
    auto it = std::find(order.begin(), order.end(), emotion);
    if (it == order.end()) {
      throw ParseError("eil_long_to_wide: line " + std::to_string(line_no) +
                       ": unknown emotion '" + fields[1] + "'");
    }
    auto& row = rows.emplace(lowercase(fields[0]), std::vector<double>(order.size(), 0.0))
                    .first->second;
    row[static_cast<std::size_t>(it - order.begin())] = score;
  }
  if (rows.empty()) throw ParseError("eil_long_to_wide: " + long_path + " holds no entries");

  std::ofstream out(wide_path);
  if (!out) throw IoError("eil_long_to_wide: cannot write " + wide_path);
  out << "word";
  for (const auto& ch : order) out << '\t' << ch;
  out << '\n';
  out.precision(17);
  for (const auto& [word, row] : rows) {
    out << word;
    for (double v : row) out << '\t' << v;
    out << '\n';
  }
}

inline void eil_wide_to_long(const std::string& wide_path, const std::string& long_path) {
  Lexicon lex = load_eil_lexicon(wide_path);
  std::map<std::string, std::vector<double>> sorted(lex.entries.begin(), lex.entries.end());
  std::ofstream out(long_path);
  if (!out) throw IoError("eil_wide_to_long: cannot write " + long_path);
  out.precision(17);
  for (const auto& [word, row] : sorted) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] != 0.0) out << word << '\t' << eil_channel_order()[c] << '\t' << row[c] << '\n';
    }
  }
}

}  // namespace kea
