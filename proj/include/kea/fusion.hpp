#pragma once

// Knowledge fusion: sentence-level and word-level knowledge-embedded
// attention, the two concatenation/BiLSTM baselines, and the two-layer
// classifier head.
//
// Sentence level:  K = concat(H_c, H_e) row-wise, s = softmax(K . h_0),
//                  h_l = s^T . K. The attention is deliberately unscaled.
// Word level:      H_ec = BiLSTM([h_i ; x_i^e]) per position, then the same
//                  attention with K = H_ec and query h_0 (requires 2l = l_c).

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kea/encoder.hpp"
#include "kea/error.hpp"
#include "kea/lexicon.hpp"
#include "kea/rng.hpp"
#include "kea/tensor.hpp"

namespace kea {

// --- parameter groups ---------------------------------------------------------

// Shared projection taking each padded knowledge channel (length L_pad) to an
// l_c-wide row of the emotional encoding H_e.
struct SentenceKeaParams {
  Tensor w_proj;  // L_pad x l_c
  Tensor b_proj;  // l_c

  static SentenceKeaParams init(std::size_t l_pad, std::size_t l_c, SplitMix64& rng) {
    SentenceKeaParams p;
    p.w_proj = glorot_uniform(l_pad, l_c, rng).set_requires_grad(true);
    p.b_proj = Tensor::zeros({l_c}).set_requires_grad(true);
    return p;
  }
};

// Single-layer bidirectional LSTM. Gate weights are packed per direction as
// input x 4l and hidden x 4l blocks in i, f, g, o order.
struct BiLstmParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Tensor fw_wx, fw_wh, fw_b;
  Tensor bw_wx, bw_wh, bw_b;

  static BiLstmParams init(std::size_t input, std::size_t hidden, SplitMix64& rng) {
    BiLstmParams p;
    p.input = input;
    p.hidden = hidden;
    p.fw_wx = glorot_uniform(input, 4 * hidden, rng).set_requires_grad(true);
    p.fw_wh = glorot_uniform(hidden, 4 * hidden, rng).set_requires_grad(true);
    p.fw_b = Tensor::zeros({4 * hidden}).set_requires_grad(true);
    p.bw_wx = glorot_uniform(input, 4 * hidden, rng).set_requires_grad(true);
    p.bw_wh = glorot_uniform(hidden, 4 * hidden, rng).set_requires_grad(true);
    p.bw_b = Tensor::zeros({4 * hidden}).set_requires_grad(true);
    return p;
  }
};

// Fusion BiLSTM over [h_i ; x_i^e]; the hidden size must satisfy 2l = l_c so
// h_0 can query the fused states.
struct WordKeaParams {
  BiLstmParams lstm;

  static WordKeaParams init(std::size_t l_c, std::size_t l_e, std::size_t hidden,
                            SplitMix64& rng) {
    if (2 * hidden != l_c) {
      throw ConfigError("word-level fusion: 2l = " + std::to_string(2 * hidden) +
                        " must equal l_c = " + std::to_string(l_c) +
                        " (query/key width mismatch)");
    }
    WordKeaParams p;
    p.lstm = BiLstmParams::init(l_c + l_e, hidden, rng);
    return p;
  }
};

// Two affine layers with a tanh between; returns raw logits.
struct ClassifierHead {
  Tensor w1, b1;  // in x hidden
  Tensor w2, b2;  // hidden x classes

  static ClassifierHead init(std::size_t in, std::size_t hidden, std::size_t classes,
                             SplitMix64& rng) {
    ClassifierHead h;
    h.w1 = glorot_uniform(in, hidden, rng).set_requires_grad(true);
    h.b1 = Tensor::zeros({hidden}).set_requires_grad(true);
    h.w2 = glorot_uniform(hidden, classes, rng).set_requires_grad(true);
    h.b2 = Tensor::zeros({classes}).set_requires_grad(true);
    return h;
  }

  std::size_t in_width() const { return w1.dim(0); }
  std::size_t classes() const { return w2.dim(1); }
};

// --- operations -----------------------------------------------------------------

// H_e: one projected row per knowledge channel.
inline Tensor project_channels(const Tensor& padded_channels, const SentenceKeaParams& p) {
  if (padded_channels.rank() != 2 || padded_channels.cols() != p.w_proj.dim(0)) {
    throw ShapeError("project_channels: channels " + shape_str(padded_channels.shape()) +
                     " do not match projection " + shape_str(p.w_proj.shape()));
  }
  return affine(padded_channels, p.w_proj, p.b_proj);
}

inline Tensor pack_padded_channels(const std::vector<std::vector<double>>& channels) {
  if (channels.empty()) throw ShapeError("pack_padded_channels: no channels");
  Tensor t = Tensor::zeros({channels.size(), channels[0].size()});
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].size() != channels[0].size()) {
      throw ShapeError("pack_padded_channels: ragged channel lengths");
    }
    for (std::size_t i = 0; i < channels[c].size(); ++i)
      t.data()[c * channels[0].size() + i] = channels[c][i];
  }
  return t;
}

// Sentence-level attention. Pass an undefined H_e for the no-knowledge case
// (K degenerates to H_c).
inline Tensor kea_sentence(const Tensor& hc, const Tensor& he) {
  Tensor k;
  if (he.defined()) {
    if (he.cols() != hc.cols()) {
      throw ShapeError("kea_sentence: H_c " + shape_str(hc.shape()) + " and H_e " +
                       shape_str(he.shape()) + " widths differ");
    }
    k = concat({hc, he}, 0);  // (N + l_e) x l_c
  } else {
    k = hc;
  }
  Tensor h0 = row(hc, 0);
  Tensor s = softmax(matmul(k, h0));
  return matmul(s, k);
}

namespace detail {

inline std::vector<Tensor> lstm_direction(const std::vector<Tensor>& inputs, const Tensor& wx,
                                          const Tensor& wh, const Tensor& b, bool reverse) {
  const std::size_t n = inputs.size();
  const std::size_t l = wh.dim(0);
  std::vector<Tensor> states(n);
  Tensor h = Tensor::zeros({l});
  Tensor c = Tensor::zeros({l});
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    Tensor gates = add(add(matmul(inputs[t], wx), matmul(h, wh)), b);
    Tensor i = sigmoid(slice(gates, 0, 0, l));
    Tensor f = sigmoid(slice(gates, 0, l, l));
    Tensor g = tanh(slice(gates, 0, 2 * l, l));
    Tensor o = sigmoid(slice(gates, 0, 3 * l, l));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    states[t] = h;
  }
  return states;
}

}  // namespace detail

// Fused states H_ec: row i = [forward state i ; backward state i] over the
// per-position concatenation [h_i ; x_i^e].
inline Tensor bilstm_fuse(const Tensor& hc, const Tensor& xe, const BiLstmParams& p) {
  if (xe.rank() != 2 || xe.rows() != hc.rows()) {
    throw ShapeError("bilstm_fuse: H_c " + shape_str(hc.shape()) + " and X_e " +
                     shape_str(xe.shape()) + " disagree on token count");
  }
  if (hc.cols() + xe.cols() != p.input) {
    throw ShapeError("bilstm_fuse: concatenated input width " +
                     std::to_string(hc.cols() + xe.cols()) + " does not match LSTM input " +
                     std::to_string(p.input));
  }
  const std::size_t n = hc.rows();
  std::vector<Tensor> inputs;
  inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) inputs.push_back(concat({row(hc, i), row(xe, i)}, 0));

  auto fw = detail::lstm_direction(inputs, p.fw_wx, p.fw_wh, p.fw_b, false);
  auto bw = detail::lstm_direction(inputs, p.bw_wx, p.bw_wh, p.bw_b, true);
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rows.push_back(concat({fw[i], bw[i]}, 0));
  return stack_rows(rows);
}

// Word-level attention: s = softmax(H_ec . h_0), h_l = s^T . H_ec.
inline Tensor kea_word(const Tensor& hec, const Tensor& h0) {
  if (hec.cols() != h0.dim(0)) {
    throw ShapeError("kea_word: H_ec " + shape_str(hec.shape()) + " and query " +
                     shape_str(h0.shape()) + " widths differ");
  }
  Tensor s = softmax(matmul(hec, h0));
  return matmul(s, hec);
}

inline Tensor classify(const Tensor& hl, const ClassifierHead& head) {
  return affine(tanh(affine(hl, head.w1, head.b1)), head.w2, head.b2);
}

// [h_0 ; flatten(H_e)] through the head. H_e may be undefined (no channels).
inline Tensor concat_baseline(const Tensor& h0, const Tensor& he, const ClassifierHead& head) {
  Tensor input = he.defined() ? concat({h0, reshape(he, {he.size()})}, 0) : h0;
  if (input.dim(0) != head.in_width()) {
    throw ShapeError("concat_baseline: head expects width " + std::to_string(head.in_width()) +
                     ", got " + std::to_string(input.dim(0)));
  }
  return classify(input, head);
}

// [final forward state ; final backward state] through the head.
inline Tensor bilstm_baseline(const Tensor& hec, const ClassifierHead& head) {
  if (hec.rank() != 2 || hec.rows() < 1) {
    throw ShapeError("bilstm_baseline: H_ec must have at least one row, got " +
                     shape_str(hec.shape()));
  }
  const std::size_t l = hec.cols() / 2;
  Tensor final_fw = slice(row(hec, hec.rows() - 1), 0, 0, l);
  Tensor final_bw = slice(row(hec, 0), 0, l, l);
  return classify(concat({final_fw, final_bw}, 0), head);
}

// --- model ----------------------------------------------------------------------

enum class Variant { kea_sentence, kea_word, k_concat, k_bilstm, encoder_only };
enum class LabelMode { single, multi };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kea_sentence: return "kea_sentence";
    case Variant::kea_word: return "kea_word";
    case Variant::k_concat: return "k_concat";
    case Variant::k_bilstm: return "k_bilstm";
    case Variant::encoder_only: return "encoder_only";
  }
  throw ConfigError("unknown variant");
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "kea_sentence") return Variant::kea_sentence;
  if (s == "kea_word") return Variant::kea_word;
  if (s == "k_concat") return Variant::k_concat;
  if (s == "k_bilstm") return Variant::k_bilstm;
  if (s == "encoder_only") return Variant::encoder_only;
  throw ConfigError("unknown model variant '" + s + "'");
}

struct FusionConfig {
  Variant variant = Variant::kea_sentence;
  LabelMode mode = LabelMode::single;
  std::size_t classes = 2;
  std::size_t l_e = 0;    // knowledge channels; 0 only for encoder_only
  std::size_t l_pad = 64;
  std::size_t hidden = 0;  // LSTM hidden l; defaults to l_c / 2
  EncoderConfig encoder;

  bool needs_lexicon() const { return variant != Variant::encoder_only; }
  bool needs_projection() const {
    return variant == Variant::kea_sentence || variant == Variant::k_concat;
  }
  bool needs_lstm() const {
    return variant == Variant::kea_word || variant == Variant::k_bilstm;
  }
};

// One example already tokenized and featurized; the numeric view the model
// consumes. `hc_override` replaces the trainable encoder when training from
// an embedding cache.
struct ModelInput {
  std::vector<std::size_t> ids;
  EmotionFeatures xe;
  std::optional<Tensor> hc_override;
};

struct FusionModel {
  FusionConfig cfg;
  EncoderParams encoder;
  std::optional<SentenceKeaParams> proj;
  std::optional<WordKeaParams> word;
  ClassifierHead head;

  static FusionModel init(const FusionConfig& cfg, std::uint64_t seed) {
    FusionConfig c = cfg;
    c.encoder.seed = seed;
    c.encoder.validate();
    const std::size_t l_c = c.encoder.width;
    if (c.hidden == 0) c.hidden = l_c / 2;
    if (c.needs_lexicon() && c.l_e == 0) {
      throw ConfigError("variant " + variant_name(c.variant) + " needs knowledge channels");
    }

    FusionModel m;
    m.cfg = c;
    m.encoder = EncoderParams::init(c.encoder);
    SplitMix64 rng(seed ^ 0xA5A5A5A5A5A5A5A5ull);
    if (c.needs_projection()) m.proj = SentenceKeaParams::init(c.l_pad, l_c, rng);
    if (c.needs_lstm()) m.word = WordKeaParams::init(l_c, c.l_e, c.hidden, rng);
    const std::size_t head_in =
        c.variant == Variant::k_concat ? l_c * (1 + c.l_e) : l_c;
    m.head = ClassifierHead::init(head_in, l_c, c.classes, rng);
    return m;
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    if (cfg.variant != Variant::encoder_only || true) {
      auto enc = encoder.named_params();
      out.insert(out.end(), enc.begin(), enc.end());
    }
    if (proj) {
      out.emplace_back("proj.w", proj->w_proj);
      out.emplace_back("proj.b", proj->b_proj);
    }
    if (word) {
      out.emplace_back("lstm.fw_wx", word->lstm.fw_wx);
      out.emplace_back("lstm.fw_wh", word->lstm.fw_wh);
      out.emplace_back("lstm.fw_b", word->lstm.fw_b);
      out.emplace_back("lstm.bw_wx", word->lstm.bw_wx);
      out.emplace_back("lstm.bw_wh", word->lstm.bw_wh);
      out.emplace_back("lstm.bw_b", word->lstm.bw_b);
    }
    out.emplace_back("head.w1", head.w1);
    out.emplace_back("head.b1", head.b1);
    out.emplace_back("head.w2", head.w2);
    out.emplace_back("head.b2", head.b2);
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }
};

inline Tensor emotion_features_tensor(const EmotionFeatures& xe) {
  if (xe.tokens == 0 || xe.channels == 0) {
    throw ShapeError("emotion features are empty");
  }
  Tensor t = Tensor::zeros({xe.tokens, xe.channels});
  t.data() = xe.values;
  return t;
}

// Full forward pass for one example; returns raw logits of width C.
inline Tensor forward(const FusionModel& m, const ModelInput& input) {
  ContextualEncoding enc = input.hc_override ? ContextualEncoding{*input.hc_override}
                                             : encode(input.ids, m.encoder);
  const Tensor& hc = enc.hc;

  switch (m.cfg.variant) {
    case Variant::encoder_only:
      return classify(enc.h0(), m.head);

    case Variant::kea_sentence: {
      Tensor he;  // stays undefined when the model carries no channels
      if (m.cfg.l_e > 0) {
        auto channels = pad_channels(input.xe, m.cfg.l_pad, /*pad_value*/ 0.0);
        he = project_channels(pack_padded_channels(channels), *m.proj);
      }
      return classify(kea_sentence(hc, he), m.head);
    }

    case Variant::k_concat: {
      Tensor he;
      if (m.cfg.l_e > 0) {
        auto channels = pad_channels(input.xe, m.cfg.l_pad, 0.0);
        he = project_channels(pack_padded_channels(channels), *m.proj);
      }
      return concat_baseline(enc.h0(), he, m.head);
    }

    case Variant::kea_word: {
      Tensor hec = bilstm_fuse(hc, emotion_features_tensor(input.xe), m.word->lstm);
      return classify(kea_word(hec, enc.h0()), m.head);
    }

    case Variant::k_bilstm: {
      Tensor hec = bilstm_fuse(hc, emotion_features_tensor(input.xe), m.word->lstm);
      return bilstm_baseline(hec, m.head);
    }
  }
  throw ConfigError("forward: unknown variant");
}

// Probabilities from logits: softmax in single-label mode, per-class sigmoid
// in multi-label mode.
inline std::vector<double> probabilities(const Tensor& logits, LabelMode mode) {
  if (mode == LabelMode::single) return softmax(logits).data();
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double z = logits.data()[i];
    out[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

}  // namespace kea
