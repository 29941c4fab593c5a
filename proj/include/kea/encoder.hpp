#pragma once

// Trainable contextual encoder: token + learned positional embeddings into a
// stack of post-norm self-attention blocks. Row 0 of the output H_c is the
// [CLS] summary h_0. A precomputed H_c can be loaded from the "KEAE"
// embedding-cache format instead (see read/write_embedding_file).
//
// Attention inside this encoder is the standard scaled dot-product
// (1/sqrt(d_head)); the knowledge-attention layers elsewhere are unscaled.

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "kea/error.hpp"
#include "kea/rng.hpp"
#include "kea/tensor.hpp"
#include "kea/tokenizer.hpp"

namespace kea {

struct EncoderConfig {
  std::size_t width = 64;   // l_c
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_len = 64;
  std::size_t vocab_size = 0;  // filled in once the vocabulary is built
  std::uint64_t seed = 1;

  std::size_t head_dim() const { return width / heads; }
  std::size_t ff_dim() const { return 4 * width; }

  void validate() const {
    if (width == 0 || layers == 0 || heads == 0 || max_len == 0 || vocab_size == 0) {
      throw ConfigError("encoder config: width, layers, heads, max_len and vocab_size "
                        "must all be positive");
    }
    if (width % heads != 0) {
      throw ConfigError("encoder config: width " + std::to_string(width) +
                        " not divisible by heads " + std::to_string(heads));
    }
  }
};

struct EncoderLayerParams {
  Tensor wq, wk, wv;  // width x width
  Tensor wo, bo;      // width x width, width
  Tensor ln1_gamma, ln1_beta;
  Tensor ff_w1, ff_b1;  // width x ff, ff
  Tensor ff_w2, ff_b2;  // ff x width, width
  Tensor ln2_gamma, ln2_beta;
};

struct EncoderParams {
  EncoderConfig cfg;
  Tensor tok_emb;  // vocab x width
  Tensor pos_emb;  // max_len x width
  std::vector<EncoderLayerParams> layers;

  static EncoderParams init(const EncoderConfig& cfg) {
    cfg.validate();
    SplitMix64 rng(cfg.seed);
    EncoderParams p;
    p.cfg = cfg;
    p.tok_emb = glorot_uniform(cfg.vocab_size, cfg.width, rng).set_requires_grad(true);
    p.pos_emb = glorot_uniform(cfg.max_len, cfg.width, rng).set_requires_grad(true);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      EncoderLayerParams lp;
      lp.wq = glorot_uniform(cfg.width, cfg.width, rng).set_requires_grad(true);
      lp.wk = glorot_uniform(cfg.width, cfg.width, rng).set_requires_grad(true);
      lp.wv = glorot_uniform(cfg.width, cfg.width, rng).set_requires_grad(true);
      lp.wo = glorot_uniform(cfg.width, cfg.width, rng).set_requires_grad(true);
      lp.bo = Tensor::zeros({cfg.width}).set_requires_grad(true);
      lp.ln1_gamma = Tensor::filled({cfg.width}, 1.0).set_requires_grad(true);
      lp.ln1_beta = Tensor::zeros({cfg.width}).set_requires_grad(true);
      lp.ff_w1 = glorot_uniform(cfg.width, cfg.ff_dim(), rng).set_requires_grad(true);
      lp.ff_b1 = Tensor::zeros({cfg.ff_dim()}).set_requires_grad(true);
      lp.ff_w2 = glorot_uniform(cfg.ff_dim(), cfg.width, rng).set_requires_grad(true);
      lp.ff_b2 = Tensor::zeros({cfg.width}).set_requires_grad(true);
      lp.ln2_gamma = Tensor::filled({cfg.width}, 1.0).set_requires_grad(true);
      lp.ln2_beta = Tensor::zeros({cfg.width}).set_requires_grad(true);
      p.layers.push_back(std::move(lp));
    }
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("encoder.tok_emb", tok_emb);
    out.emplace_back("encoder.pos_emb", pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lp = layers[l];
      const std::string base = "encoder.layer" + std::to_string(l) + ".";
      out.emplace_back(base + "wq", lp.wq);
      out.emplace_back(base + "wk", lp.wk);
      out.emplace_back(base + "wv", lp.wv);
      out.emplace_back(base + "wo", lp.wo);
      out.emplace_back(base + "bo", lp.bo);
      out.emplace_back(base + "ln1_gamma", lp.ln1_gamma);
      out.emplace_back(base + "ln1_beta", lp.ln1_beta);
      out.emplace_back(base + "ff_w1", lp.ff_w1);
      out.emplace_back(base + "ff_b1", lp.ff_b1);
      out.emplace_back(base + "ff_w2", lp.ff_w2);
      out.emplace_back(base + "ff_b2", lp.ff_b2);
      out.emplace_back(base + "ln2_gamma", lp.ln2_gamma);
      out.emplace_back(base + "ln2_beta", lp.ln2_beta);
    }
    return out;
  }
};

// Per-token representation matrix; row 0 is the [CLS] summary.
struct ContextualEncoding {
  Tensor hc;  // N x l_c

  Tensor h0() const { return row(hc, 0); }
  std::size_t token_count() const { return hc.rows(); }
  std::size_t width() const { return hc.cols(); }
};

// Attention probabilities captured per layer/head when requested by tests.
struct EncodeTrace {
  std::vector<std::vector<Tensor>> attention;  // [layer][head] -> N x N rows summing to 1
};

inline ContextualEncoding encode(const std::vector<std::size_t>& ids, const EncoderParams& p,
                                 EncodeTrace* trace = nullptr) {
  p.cfg.validate();
  if (ids.empty()) throw ShapeError("encode: empty id sequence");
  if (ids.size() > p.cfg.max_len) {
    throw ConfigError("encode: sequence length " + std::to_string(ids.size()) +
                      " exceeds max_len " + std::to_string(p.cfg.max_len));
  }
  for (std::size_t id : ids) {
    if (id >= p.cfg.vocab_size) {
      throw IdError("encode: token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(p.cfg.vocab_size));
    }
  }
  const std::size_t n = ids.size();
  const std::size_t dh = p.cfg.head_dim();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;

  Tensor h = add(embedding(p.tok_emb, ids), embedding(p.pos_emb, positions));
  if (trace) trace->attention.assign(p.cfg.layers, {});

  for (std::size_t l = 0; l < p.cfg.layers; ++l) {
    const auto& lp = p.layers[l];
    Tensor q = matmul(h, lp.wq);
    Tensor k = matmul(h, lp.wk);
    Tensor v = matmul(h, lp.wv);
    std::vector<Tensor> head_outputs;
    for (std::size_t hd = 0; hd < p.cfg.heads; ++hd) {
      Tensor qh = slice(q, 1, hd * dh, dh);
      Tensor kh = slice(k, 1, hd * dh, dh);
      Tensor vh = slice(v, 1, hd * dh, dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
      Tensor probs = softmax(scores);
      if (trace) trace->attention[l].push_back(probs);
      head_outputs.push_back(matmul(probs, vh));
    }
    Tensor attn = affine(concat(head_outputs, 1), lp.wo, lp.bo);
    Tensor x = layer_norm(add(h, attn), lp.ln1_gamma, lp.ln1_beta);
    Tensor ff = affine(relu(affine(x, lp.ff_w1, lp.ff_b1)), lp.ff_w2, lp.ff_b2);
    h = layer_norm(add(x, ff), lp.ln2_gamma, lp.ln2_beta);
  }
  return ContextualEncoding{h};
}

// --- "KEAE" embedding-cache format --------------------------------------------
//
// magic "KEAE" (4 bytes) | version u32 LE = 1 | N u32 LE | l_c u32 LE |
// N * l_c IEEE-754 binary32 LE, row-major, row 0 = [CLS].

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 3])) << 24);
}

inline std::string read_file_bytes(const std::string& path, const char* who) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string(who) + ": cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes, const char* who) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(std::string(who) + ": cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(std::string(who) + ": short write to " + path);
}

}  // namespace detail

inline constexpr std::uint32_t kEmbeddingCacheVersion = 1;

inline std::string encode_embedding_bytes(const Tensor& hc) {
  if (hc.rank() != 2) {
    throw ShapeError("embedding cache: H_c must be rank 2, got " + shape_str(hc.shape()));
  }
  std::string out;
  out.reserve(16 + 4 * hc.size());
  out += "KEAE";
  detail::put_u32(out, kEmbeddingCacheVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(hc.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(hc.cols()));
  for (double v : hc.data()) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(out, bits);
  }
  return out;
}

inline Tensor decode_embedding_bytes(const std::string& buf) {
  if (buf.size() < 4 || buf.compare(0, 4, "KEAE") != 0) {
    throw FormatError("embedding cache: bad magic at byte offset 0");
  }
  if (buf.size() < 16) {
    throw FormatError("embedding cache: truncated header at byte offset " +
                      std::to_string(buf.size()));
  }
  const std::uint32_t version = detail::get_u32(buf, 4);
  if (version != kEmbeddingCacheVersion) {
    throw FormatError("embedding cache: unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  const std::uint32_t n = detail::get_u32(buf, 8);
  const std::uint32_t lc = detail::get_u32(buf, 12);
  if (n == 0) throw FormatError("embedding cache: N is zero at byte offset 8");
  if (lc == 0) throw FormatError("embedding cache: l_c is zero at byte offset 12");
  const std::size_t expected = 16 + 4ull * n * lc;
  if (buf.size() != expected) {
    throw FormatError("embedding cache: payload ends at byte offset " +
                      std::to_string(buf.size()) + ", expected " + std::to_string(expected));
  }
  Tensor hc = Tensor::zeros({n, lc});
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * lc; ++i) {
    std::uint32_t bits = detail::get_u32(buf, 16 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    hc.data()[i] = static_cast<double>(f);
  }
  return hc;
}

inline void write_embedding_file(const std::string& path, const Tensor& hc) {
  detail::write_file_bytes(path, encode_embedding_bytes(hc), "embedding cache");
}

// Returns H_c exactly as stored; the result carries no gradients.
inline ContextualEncoding load_precomputed(const std::string& path) {
  return ContextualEncoding{decode_embedding_bytes(detail::read_file_bytes(path, "embedding cache"))};
}

}  // namespace kea
