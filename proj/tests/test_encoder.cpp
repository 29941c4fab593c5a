#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "kea/encoder.hpp"
#include "kea/tokenizer.hpp"
#include "support/gradcheck.hpp"
#include "support/tmpfiles.hpp"

using namespace kea;
using kea::testing::TempDir;

TEST_CASE("tokenize lowercases and splits punctuation off") {
  auto toks = tokenize("I am happy!");
  REQUIRE(toks == std::vector<std::string>{"[CLS]", "i", "am", "happy", "!"});
}

TEST_CASE("tokenize_conversation joins with [SEP]") {
  auto toks = tokenize_conversation({"hi there", "hello"});
  REQUIRE(toks == std::vector<std::string>{"[CLS]", "hi", "there", "[SEP]", "hello"});
}

TEST_CASE("empty text tokenizes to [CLS] only") {
  REQUIRE(tokenize("") == std::vector<std::string>{"[CLS]"});
  REQUIRE(tokenize("   \t  ") == std::vector<std::string>{"[CLS]"});
}

TEST_CASE("tokenize truncates to max_len and keeps sentinels atomic") {
  auto toks = tokenize("a b c d e f", 4);
  REQUIRE(toks.size() == 4);
  REQUIRE(toks[0] == "[CLS]");

  auto tw = tokenize("<user> check <url>");
  REQUIRE(tw == std::vector<std::string>{"[CLS]", "<user>", "check", "<url>"});

  auto punct = tokenize("well... yes-no");
  REQUIRE(punct ==
          std::vector<std::string>{"[CLS]", "well", ".", ".", ".", "yes", "-", "no"});
}

TEST_CASE("vocabulary reserves ids 0..3 and applies the frequency cutoff") {
  std::vector<std::vector<std::string>> seqs = {
      tokenize("the cat sat"), tokenize("the cat ran"), tokenize("a dog ran")};
  Vocabulary v = Vocabulary::build(seqs, 2);
  REQUIRE(v.token(Vocabulary::kPadId) == "[PAD]");
  REQUIRE(v.token(Vocabulary::kClsId) == "[CLS]");
  REQUIRE(v.token(Vocabulary::kSepId) == "[SEP]");
  REQUIRE(v.token(Vocabulary::kUnkId) == "[UNK]");
  // "the", "cat", "ran" appear twice; "sat", "a", "dog" once
  REQUIRE(v.size() == 7);
  REQUIRE(v.id("sat") == Vocabulary::kUnkId);
  REQUIRE(v.id("never-seen") == Vocabulary::kUnkId);
  REQUIRE(v.id("cat") != Vocabulary::kUnkId);

  // round trip through the ordered token list
  Vocabulary w = Vocabulary::from_tokens(v.tokens());
  REQUIRE(w.tokens() == v.tokens());
  REQUIRE(w.id("ran") == v.id("ran"));
}

static EncoderParams tiny_encoder(std::size_t width, std::size_t layers, std::size_t heads,
                                  std::size_t vocab, std::uint64_t seed = 5) {
  EncoderConfig cfg;
  cfg.width = width;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.max_len = 16;
  cfg.vocab_size = vocab;
  cfg.seed = seed;
  return EncoderParams::init(cfg);
}

TEST_CASE("encode produces N x width with attention rows summing to 1") {
  EncoderParams p = tiny_encoder(64, 2, 4, 20);
  std::vector<std::size_t> ids = {1, 5, 9, 12, 4, 7, 3};
  EncodeTrace trace;
  ContextualEncoding enc = encode(ids, p, &trace);
  REQUIRE(enc.hc.rows() == 7);
  REQUIRE(enc.hc.cols() == 64);
  REQUIRE(trace.attention.size() == 2);
  for (const auto& layer : trace.attention) {
    REQUIRE(layer.size() == 4);
    for (const auto& probs : layer) {
      REQUIRE(probs.rows() == 7);
      for (std::size_t i = 0; i < 7; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < 7; ++j) total += probs.data()[i * 7 + j];
        REQUIRE(std::abs(total - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("encode is deterministic and h0 is row zero") {
  EncoderParams p = tiny_encoder(32, 1, 2, 12);
  std::vector<std::size_t> ids = {1, 4, 6, 2};
  ContextualEncoding a = encode(ids, p);
  ContextualEncoding b = encode(ids, p);
  REQUIRE(a.hc.data() == b.hc.data());
  Tensor h0 = a.h0();
  for (std::size_t j = 0; j < 32; ++j) REQUIRE(h0.data()[j] == a.hc.data()[j]);
}

TEST_CASE("positional embeddings make token order matter") {
  EncoderParams p = tiny_encoder(32, 1, 2, 12, 77);
  ContextualEncoding fwd = encode({1, 5, 7, 9}, p);
  ContextualEncoding swapped = encode({1, 7, 5, 9}, p);  // swap two non-[CLS] positions
  REQUIRE(fwd.hc.data() != swapped.hc.data());
}

TEST_CASE("encode rejects out-of-range ids") {
  EncoderParams p = tiny_encoder(16, 1, 2, 8);
  REQUIRE_THROWS_AS(encode({1, 9}, p), IdError);
}

TEST_CASE("gradients flow into encoder parameters") {
  EncoderParams p = tiny_encoder(8, 1, 2, 10, 3);
  std::vector<std::size_t> ids = {1, 4, 7};
  std::vector<Tensor> params;
  for (auto& [name, t] : p.named_params()) params.push_back(t);
  auto rep = kea::testing::check_gradients(params, [&] {
    Tensor hc = encode(ids, p).hc;
    return mean(mul(hc, hc));
  });
  INFO(rep.worst_at << " diff=" << rep.max_abs_diff);
  REQUIRE(rep.ok());
  REQUIRE(rep.checked > 500);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.width = 30;
  cfg.heads = 4;
  cfg.vocab_size = 10;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.width = 32;
  REQUIRE_NOTHROW(cfg.validate());
  cfg.vocab_size = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("embedding cache round trip is bit exact") {
  TempDir tmp("keae");
  SplitMix64 rng(13);
  Tensor hc = kea::testing::random_tensor({5, 12}, rng);
  auto path = tmp.path("x.keae");
  write_embedding_file(path, hc);
  ContextualEncoding loaded = load_precomputed(path);
  REQUIRE(loaded.hc.shape() == hc.shape());
  // stored as binary32: loaded values equal the f32-rounded originals bitwise
  for (std::size_t i = 0; i < hc.size(); ++i) {
    REQUIRE(loaded.hc.data()[i] == static_cast<double>(static_cast<float>(hc.data()[i])));
  }
  // write -> read -> write reproduces the file bytes exactly
  auto again = tmp.path("y.keae");
  write_embedding_file(again, loaded.hc);
  std::ifstream a(path, std::ios::binary), b(again, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  REQUIRE(sa == sb);
  REQUIRE(sa.size() == 16 + 4 * 5 * 12);
}

TEST_CASE("embedding cache single row echoes h0") {
  TempDir tmp("keae");
  Tensor hc = Tensor::from({1, 4}, {1, 2, 3, 4});
  auto path = tmp.path("row.keae");
  write_embedding_file(path, hc);
  ContextualEncoding enc = load_precomputed(path);
  REQUIRE(enc.h0().data() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("embedding cache rejects corruption with byte offsets") {
  TempDir tmp("keae");
  Tensor hc = Tensor::from({2, 2}, {1, 2, 3, 4});
  std::string good = encode_embedding_bytes(hc);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  REQUIRE_THROWS_MATCHES(decode_embedding_bytes(bad_magic), FormatError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("magic") &&
                             Catch::Matchers::ContainsSubstring("offset 0")));

  std::string truncated = good.substr(0, good.size() - 3);
  REQUIRE_THROWS_AS(decode_embedding_bytes(truncated), FormatError);

  std::string bad_version = good;
  bad_version[4] = 9;
  REQUIRE_THROWS_AS(decode_embedding_bytes(bad_version), FormatError);

  std::string zero_n = good;
  zero_n[8] = zero_n[9] = zero_n[10] = zero_n[11] = 0;
  REQUIRE_THROWS_AS(decode_embedding_bytes(zero_n), FormatError);
}
