#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "kea/lexicon.hpp"
#include "support/tmpfiles.hpp"

using namespace kea;
using kea::testing::TempDir;

static const char* kVadFixture =
    "word\tvalence\tarousal\tdominance\n"
    "calm\t0.82\t0.17\t0.63\n"
    "love\t1.0\t0.519\t0.673\n"
    "panic\t0.13\t0.93\t0.29\n"
    "Grief\t0.06\t0.575\t0.244\n";

TEST_CASE("load_lexicon echoes a row") {
  TempDir tmp("lex");
  auto path = tmp.file("one.tsv", "calm\t0.82\t0.17\t0.63\n");
  Lexicon lex = load_lexicon(path, 3, {0.5, 0.5, 0.5});
  REQUIRE(lex.entries.size() == 1);
  REQUIRE(lex.entries.at("calm") == std::vector<double>{0.82, 0.17, 0.63});
}

TEST_CASE("load_lexicon skips header and lowercases words") {
  TempDir tmp("lex");
  Lexicon lex = load_vad_lexicon(tmp.file("vad.tsv", kVadFixture));
  REQUIRE(lex.entries.size() == 4);
  REQUIRE(lex.contains("GRIEF"));
  REQUIRE(lex.lookup("grief")[0] == 0.06);
  REQUIRE(lex.channel_names == std::vector<std::string>{"valence", "arousal", "dominance"});
}

TEST_CASE("duplicate rows keep the last one") {
  TempDir tmp("lex");
  auto path = tmp.file("dup.tsv", "calm\t0.1\t0.1\t0.1\ncalm\t0.9\t0.8\t0.7\n");
  Lexicon lex = load_lexicon(path, 3, {0.5, 0.5, 0.5});
  REQUIRE(lex.entries.size() == 1);
  REQUIRE(lex.entries.at("calm") == std::vector<double>{0.9, 0.8, 0.7});
}

TEST_CASE("malformed rows name the line, empty files rejected") {
  TempDir tmp("lex");
  REQUIRE_THROWS_MATCHES(
      load_lexicon(tmp.file("bad.tsv", "calm\t0.82\t0.17\t0.63\nwrong\t0.5\n"), 3,
                   {0.5, 0.5, 0.5}),
      ParseError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 2")));
  REQUIRE_THROWS_MATCHES(
      load_lexicon(tmp.file("nan.tsv", "calm\t0.82\tx\t0.63\n"), 3, {0.5, 0.5, 0.5}), ParseError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 1")));
  REQUIRE_THROWS_AS(load_lexicon(tmp.file("empty.tsv", ""), 3, {0.5, 0.5, 0.5}), ParseError);
}

TEST_CASE("crlf lines parse") {
  TempDir tmp("lex");
  Lexicon lex =
      load_lexicon(tmp.file("crlf.tsv", "calm\t0.82\t0.17\t0.63\r\n"), 3, {0.5, 0.5, 0.5});
  REQUIRE(lex.entries.at("calm")[2] == 0.63);
}

TEST_CASE("featurize applies lexicon rows, defaults for OOV and specials") {
  TempDir tmp("lex");
  Lexicon lex = load_vad_lexicon(tmp.file("vad.tsv", kVadFixture));
  EmotionFeatures f = featurize({"[CLS]", "love", "zzzunknown", "[SEP]"}, lex);
  REQUIRE(f.tokens == 4);
  REQUIRE(f.channels == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    REQUIRE(f.at(0, c) == 0.5);  // [CLS]
    REQUIRE(f.at(2, c) == 0.5);  // OOV mid-value
    REQUIRE(f.at(3, c) == 0.5);  // [SEP]
  }
  // read the expected row straight from the fixture text
  std::istringstream fixture(kVadFixture);
  std::string line;
  std::vector<double> love_row;
  while (std::getline(fixture, line)) {
    if (line.rfind("love\t", 0) == 0) {
      std::istringstream fields(line.substr(5));
      double v;
      while (fields >> v) love_row.push_back(v);
    }
  }
  REQUIRE(love_row.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) REQUIRE(f.at(1, c) == love_row[c]);
}

TEST_CASE("featurize of empty token list") {
  TempDir tmp("lex");
  Lexicon lex = load_vad_lexicon(tmp.file("vad.tsv", kVadFixture));
  EmotionFeatures f = featurize({}, lex);
  REQUIRE(f.tokens == 0);
  REQUIRE(f.values.empty());
}

TEST_CASE("featurize is pure and values come from file or default") {
  TempDir tmp("lex");
  Lexicon lex = load_vad_lexicon(tmp.file("vad.tsv", kVadFixture));
  std::vector<std::string> tokens = {"calm", "weird", "panic", "love", "grief"};
  EmotionFeatures a = featurize(tokens, lex);
  EmotionFeatures b = featurize(tokens, lex);
  REQUIRE(a.values == b.values);
  for (std::size_t i = 0; i < a.tokens; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      double v = a.at(i, c);
      bool from_file = lex.contains(tokens[i]) && lex.lookup(tokens[i])[c] == v;
      REQUIRE((from_file || v == lex.defaults[c]));
    }
  }
}

TEST_CASE("pad_channels pads, truncates and round-trips") {
  EmotionFeatures xe;
  xe.tokens = 2;
  xe.channels = 2;
  xe.values = {0.1, 0.3, 0.9, 0.7};  // rows: [0.1,0.3], [0.9,0.7]
  auto padded = pad_channels(xe, 4, 0.5);
  REQUIRE(padded[0] == std::vector<double>{0.1, 0.9, 0.5, 0.5});
  REQUIRE(padded[1] == std::vector<double>{0.3, 0.7, 0.5, 0.5});

  // exact fit: channels are exactly the columns
  auto exact = pad_channels(xe, 2, 0.5);
  REQUIRE(exact[0] == std::vector<double>{0.1, 0.9});

  // truncation keeps the first L_pad positions
  EmotionFeatures six;
  six.tokens = 6;
  six.channels = 1;
  six.values = {1, 2, 3, 4, 5, 6};
  REQUIRE(pad_channels(six, 4, 0.0)[0] == std::vector<double>{1, 2, 3, 4});

  // un-padding recovers X_e when N <= L_pad
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < xe.tokens; ++i) REQUIRE(padded[c][i] == xe.at(i, c));

  REQUIRE_THROWS_AS(pad_channels(xe, 0, 0.5), ConfigError);
}

TEST_CASE("eil long to wide conversion round-trips") {
  TempDir tmp("eil");
  const std::string long_form =
      "word\temotion\tscore\n"
      "outraged\tanger\t0.964\n"
      "outraged\tdisgust\t0.773\n"
      "cheerful\tjoy\t0.906\n"
      "cheerful\ttrust\t0.152\n"
      "wary\tfear\t0.42\n"
      "wary\tanticipation\t0.25\n"
      "wary\tsadness\t0.11\n"
      "aback\tsurprise\t0.41\n";
  auto long_path = tmp.file("eil_long.tsv", long_form);
  auto wide_path = tmp.path("eil_wide.tsv");
  eil_long_to_wide(long_path, wide_path);

  Lexicon lex = load_eil_lexicon(wide_path);
  REQUIRE(lex.entries.size() == 4);
  REQUIRE(lex.lookup("outraged")[0] == 0.964);  // anger is channel 0
  REQUIRE(lex.lookup("outraged")[2] == 0.773);  // disgust channel 2
  REQUIRE(lex.lookup("cheerful")[4] == 0.906);  // joy channel 4
  REQUIRE(lex.lookup("missing") == std::vector<double>(8, 0.0));

  // wide -> long reproduces the original set of (word, emotion, score) rows
  auto back_path = tmp.path("eil_back.tsv");
  eil_wide_to_long(wide_path, back_path);
  auto read_rows = [](const std::string& p) {
    std::ifstream in(p);
    std::set<std::string> rows;
    std::string line;
    std::getline(in, line);  // maybe header
    if (line.rfind("word\t", 0) != 0) rows.insert(line);
    while (std::getline(in, line))
      if (!line.empty()) rows.insert(line);
    return rows;
  };
  auto canon = [](const std::set<std::string>& rows) {
    std::set<std::string> out;
    for (const auto& r : rows) {
      std::istringstream is(r);
      std::string w, e, s;
      std::getline(is, w, '\t');
      std::getline(is, e, '\t');
      std::getline(is, s, '\t');
      out.insert(w + "|" + e + "|" + std::to_string(std::stod(s)));
    }
    return out;
  };
  REQUIRE(canon(read_rows(long_path)) == canon(read_rows(back_path)));
}

TEST_CASE("eil conversion rejects unknown emotions") {
  TempDir tmp("eil");
  auto bad = tmp.file("bad.tsv", "word\temotion\tscore\nhappy\tbliss\t0.9\n");
  REQUIRE_THROWS_AS(eil_long_to_wide(bad, tmp.path("out.tsv")), ParseError);
}
