#ifndef BPT_MODEL_HPP
#define BPT_MODEL_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bpt/attention.hpp"
#include "bpt/config.hpp"
#include "bpt/errors.hpp"
#include "bpt/graph.hpp"
#include "bpt/kernels.hpp"
#include "bpt/matrix.hpp"
#include "bpt/tokens.hpp"

namespace bpt {

enum class HeadKind : std::uint8_t { lm = 0, classifier = 1 };

template <class S>
struct LayerParams {
  AttentionParams<S> attn;
  Matrix<S> ln1_gain, ln1_bias;
  FfnParams<S> ffn;
  Matrix<S> ln2_gain, ln2_bias;
};

/// Every trainable tensor of the stacked model. for_each_tensor fixes the
/// canonical order used by the optimizer, the checkpoint format, and the
/// gradient checks.
template <class S>
struct ModelParams {
  std::size_t vocab_size = 0;
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  std::size_t d_ff = 0;
  std::size_t n_relations = 0;
  std::size_t n_outputs = 0;
  HeadKind head = HeadKind::lm;

  Matrix<S> embedding;  // vocab x d
  std::vector<LayerParams<S>> layers;
  Matrix<S> head_w;  // d x n_outputs
  Matrix<S> head_b;  // 1 x n_outputs

  template <class Fn>
  void for_each_tensor(Fn &&fn) {
    fn("embedding", embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      fn(p + "attn.wq", layers[l].attn.wq);
      fn(p + "attn.wk", layers[l].attn.wk);
      fn(p + "attn.wv", layers[l].attn.wv);
      fn(p + "attn.wo", layers[l].attn.wo);
      fn(p + "attn.rel", layers[l].attn.rel);
      fn(p + "ln1.gain", layers[l].ln1_gain);
      fn(p + "ln1.bias", layers[l].ln1_bias);
      fn(p + "ffn.w1", layers[l].ffn.w1);
      fn(p + "ffn.b1", layers[l].ffn.b1);
      fn(p + "ffn.w2", layers[l].ffn.w2);
      fn(p + "ffn.b2", layers[l].ffn.b2);
      fn(p + "ln2.gain", layers[l].ln2_gain);
      fn(p + "ln2.bias", layers[l].ln2_bias);
    }
    fn("head.w", head_w);
    fn("head.b", head_b);
  }

  template <class Fn>
  void for_each_tensor(Fn &&fn) const {
    const_cast<ModelParams *>(this)->for_each_tensor(
        [&](const std::string &name, Matrix<S> &m) {
          fn(name, static_cast<const Matrix<S> &>(m));
        });
  }

  std::vector<Matrix<S> *> tensor_ptrs() {
    std::vector<Matrix<S> *> out;
    for_each_tensor([&](const std::string &, Matrix<S> &m) { out.push_back(&m); });
    return out;
  }

  std::vector<const Matrix<S> *> tensor_ptrs() const {
    std::vector<const Matrix<S> *> out;
    for_each_tensor([&](const std::string &, const Matrix<S> &m) { out.push_back(&m); });
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string &, const Matrix<S> &m) { n += m.size(); });
    return n;
  }

  /// Same structure, every tensor zeroed. Gradient accumulator.
  ModelParams zeros_like() const {
    ModelParams out = *this;
    out.for_each_tensor([](const std::string &, Matrix<S> &m) { m.set_zero(); });
    return out;
  }

  template <class T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    out.vocab_size = vocab_size;
    out.d_model = d_model;
    out.n_heads = n_heads;
    out.d_ff = d_ff;
    out.n_relations = n_relations;
    out.n_outputs = n_outputs;
    out.head = head;
    out.layers.resize(layers.size());
    auto convert = [](const Matrix<S> &src) {
      Matrix<T> dst(src.rows, src.cols);
      for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] = static_cast<T>(src.data[i]);
      return dst;
    };
    out.embedding = convert(embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      out.layers[l].attn.wq = convert(layers[l].attn.wq);
      out.layers[l].attn.wk = convert(layers[l].attn.wk);
      out.layers[l].attn.wv = convert(layers[l].attn.wv);
      out.layers[l].attn.wo = convert(layers[l].attn.wo);
      out.layers[l].attn.rel = convert(layers[l].attn.rel);
      out.layers[l].ln1_gain = convert(layers[l].ln1_gain);
      out.layers[l].ln1_bias = convert(layers[l].ln1_bias);
      out.layers[l].ffn.w1 = convert(layers[l].ffn.w1);
      out.layers[l].ffn.b1 = convert(layers[l].ffn.b1);
      out.layers[l].ffn.w2 = convert(layers[l].ffn.w2);
      out.layers[l].ffn.b2 = convert(layers[l].ffn.b2);
      out.layers[l].ln2_gain = convert(layers[l].ln2_gain);
      out.layers[l].ln2_bias = convert(layers[l].ln2_bias);
    }
    out.head_w = convert(head_w);
    out.head_b = convert(head_b);
    return out;
  }
};

inline std::size_t relation_count_for(std::size_t n_max, std::int64_t k) {
  const TreeShape shape = build_tree(n_max);
  return RelationSet(shape.levels, k).size();
}

/// Fresh parameters, fully determined by the seed. Weight matrices draw
/// from the scaled uniform; biases and the relation table start at zero,
/// norm gains at one.
template <class S>
ModelParams<S> init_params(const RunConfig &config, std::size_t vocab_size,
                           std::size_t n_outputs, HeadKind head, std::uint64_t seed) {
  config.validate();
  if (vocab_size == 0) throw ConfigError("init_params: vocab_size must be >= 1");
  if (n_outputs == 0) throw ConfigError("init_params: n_outputs must be >= 1");
  const std::size_t d = static_cast<std::size_t>(config.d_model);
  const std::size_t d_ff = static_cast<std::size_t>(config.d_ff);

  ModelParams<S> params;
  params.vocab_size = vocab_size;
  params.d_model = d;
  params.n_heads = static_cast<std::size_t>(config.heads);
  params.d_ff = d_ff;
  params.n_relations = relation_count_for(config.n_max, config.k);
  params.n_outputs = n_outputs;
  params.head = head;

  std::mt19937_64 rng(seed);
  params.embedding = Matrix<S>(vocab_size, d);
  glorot_uniform_fill(params.embedding, rng);
  params.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto &layer : params.layers) {
    layer.attn.wq = Matrix<S>(d, d);
    layer.attn.wk = Matrix<S>(d, d);
    layer.attn.wv = Matrix<S>(d, d);
    layer.attn.wo = Matrix<S>(d, d);
    glorot_uniform_fill(layer.attn.wq, rng);
    glorot_uniform_fill(layer.attn.wk, rng);
    glorot_uniform_fill(layer.attn.wv, rng);
    glorot_uniform_fill(layer.attn.wo, rng);
    layer.attn.rel = Matrix<S>(params.n_relations, d / params.n_heads);
    layer.ln1_gain = Matrix<S>(1, d);
    layer.ln1_bias = Matrix<S>(1, d);
    layer.ln2_gain = Matrix<S>(1, d);
    layer.ln2_bias = Matrix<S>(1, d);
    for (S &g : layer.ln1_gain.data) g = S(1);
    for (S &g : layer.ln2_gain.data) g = S(1);
    layer.ffn.w1 = Matrix<S>(d, d_ff);
    layer.ffn.b1 = Matrix<S>(1, d_ff);
    layer.ffn.w2 = Matrix<S>(d_ff, d);
    layer.ffn.b2 = Matrix<S>(1, d);
    glorot_uniform_fill(layer.ffn.w1, rng);
    glorot_uniform_fill(layer.ffn.w2, rng);
  }
  params.head_w = Matrix<S>(d, n_outputs);
  glorot_uniform_fill(params.head_w, rng);
  params.head_b = Matrix<S>(1, n_outputs);
  return params;
}

/// One state row per tree node: token rows take their embedding (padding
/// id maps to the zero vector), span rows start at zero.
template <class S>
Matrix<S> init_states(const std::vector<std::size_t> &tokens, const ModelParams<S> &params,
                      const TreeShape &shape, std::size_t pad_id = kPadId) {
  if (tokens.size() > shape.n_padded)
    throw InvalidInputError("init_states: sequence longer than the tree");
  Matrix<S> states(shape.num_nodes(), params.d_model);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] == pad_id) continue;
    if (tokens[t] >= params.vocab_size)
      throw VocabError("init_states: token id " + std::to_string(tokens[t]) +
                       " outside vocabulary of " + std::to_string(params.vocab_size));
    const S *src = params.embedding.row(tokens[t]);
    S *dst = states.row(t);
    for (std::size_t c = 0; c < params.d_model; ++c) dst[c] = src[c];
  }
  return states;
}

struct DropoutPlan {
  bool enabled = false;
  double input = 0.0;
  double hidden = 0.0;
  double attn = 0.0;
  double cls = 0.0;

  /// Training uses the config rates; evaluation and verification mode run
  /// the exact path.
  static DropoutPlan from_config(const RunConfig &config, bool training) {
    DropoutPlan plan;
    plan.enabled = training && config.precision != Precision::verify;
    if (plan.enabled) {
      plan.input = config.dropout_input;
      plan.hidden = config.dropout_hidden;
      plan.attn = config.dropout_attn;
      plan.cls = config.dropout_cls;
    }
    return plan;
  }
};

template <class S>
Matrix<S> dropout_mask(std::size_t rows, std::size_t cols, double rate,
                       std::mt19937_64 &rng) {
  Matrix<S> mask(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - rate));
  for (S &m : mask.data) m = canonical_uniform(rng) < rate ? S(0) : keep;
  return mask;
}

template <class S>
struct LayerTape {
  Matrix<S> h_in;
  AttentionTrace<S> trace;
  Matrix<S> attn_out;  // after wo, before dropout
  Matrix<S> h1_mask;
  Matrix<S> sum1;
  LayerNormCache<S> ln1;
  Matrix<S> z;
  FfnCache<S> ffn;
  Matrix<S> ffn_out;  // before dropout
  Matrix<S> h2_mask;
  Matrix<S> sum2;
  LayerNormCache<S> ln2;
};

template <class S>
struct ForwardTape {
  Matrix<S> h0;        // embedded states after input dropout
  Matrix<S> emb_mask;  // token rows only
  std::vector<LayerTape<S>> layers;
  Matrix<S> h_final;
};

/// N synchronous update rounds over all nodes:
///   z = norm(h + GSA(graph, h)),  h' = norm(z + FFN(z)).
template <class S>
ForwardTape<S> model_forward(const std::vector<std::size_t> &tokens,
                             const ModelParams<S> &params, const BpGraph &graph,
                             const DropoutPlan &dropout = {},
                             std::mt19937_64 *rng = nullptr,
                             std::size_t pad_id = kPadId) {
  if (params.layers.empty()) throw ConfigError("model_forward: layer count must be >= 1");
  if (params.n_relations < graph.relations().size())
    throw ConfigError("model_forward: graph labels exceed the relation table");
  ForwardTape<S> tape;
  tape.h0 = init_states(tokens, params, graph.shape, pad_id);
  if (dropout.enabled && dropout.input > 0.0) {
    if (rng == nullptr) throw InvalidInputError("model_forward: dropout requires an rng");
    tape.emb_mask = dropout_mask<S>(graph.shape.n_padded, params.d_model, dropout.input, *rng);
    for (std::size_t t = 0; t < graph.shape.n_padded; ++t) {
      S *row = tape.h0.row(t);
      const S *mask = tape.emb_mask.row(t);
      for (std::size_t c = 0; c < params.d_model; ++c) row[c] *= mask[c];
    }
  }

  Matrix<S> h = tape.h0;
  tape.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    LayerTape<S> &lt = tape.layers[l];
    const LayerParams<S> &lp = params.layers[l];
    lt.h_in = h;

    lt.attn_out = gsa_forward(graph, lt.h_in, lp.attn, params.n_heads, lt.trace,
                              dropout.enabled ? dropout.attn : 0.0, rng);
    lt.sum1 = lt.h_in;
    if (dropout.enabled && dropout.hidden > 0.0) {
      lt.h1_mask = dropout_mask<S>(lt.attn_out.rows, lt.attn_out.cols, dropout.hidden, *rng);
      for (std::size_t i = 0; i < lt.sum1.size(); ++i)
        lt.sum1.data[i] += lt.attn_out.data[i] * lt.h1_mask.data[i];
    } else {
      add_inplace(lt.sum1, lt.attn_out);
    }
    lt.z = layer_norm_forward(lt.sum1, lp.ln1_gain, lp.ln1_bias, &lt.ln1);

    lt.ffn_out = ffn_forward(lt.z, lp.ffn, &lt.ffn);
    lt.sum2 = lt.z;
    if (dropout.enabled && dropout.hidden > 0.0) {
      lt.h2_mask = dropout_mask<S>(lt.ffn_out.rows, lt.ffn_out.cols, dropout.hidden, *rng);
      for (std::size_t i = 0; i < lt.sum2.size(); ++i)
        lt.sum2.data[i] += lt.ffn_out.data[i] * lt.h2_mask.data[i];
    } else {
      add_inplace(lt.sum2, lt.ffn_out);
    }
    h = layer_norm_forward(lt.sum2, lp.ln2_gain, lp.ln2_bias, &lt.ln2);
  }
  tape.h_final = std::move(h);
  return tape;
}

/// Vocabulary logits over token rows; row t scores the token at t + 1.
template <class S>
Matrix<S> lm_logits(const Matrix<S> &h_final, const ModelParams<S> &params,
                    const TreeShape &shape) {
  if (params.head != HeadKind::lm)
    throw ConfigError("lm_logits: model head is not a language-model head");
  Matrix<S> token_states(shape.n_padded, params.d_model);
  for (std::size_t t = 0; t < shape.n_padded; ++t)
    for (std::size_t c = 0; c < params.d_model; ++c)
      token_states(t, c) = h_final(t, c);
  Matrix<S> logits = matmul(token_states, params.head_w);
  add_bias_inplace(logits, params.head_b);
  return logits;
}

/// Class logits from the root node's final representation.
template <class S>
Matrix<S> cls_logits(const Matrix<S> &h_final, const ModelParams<S> &params,
                     const TreeShape &shape) {
  if (params.head != HeadKind::classifier)
    throw ConfigError("cls_logits: model head is not a classifier head");
  Matrix<S> root(1, params.d_model);
  for (std::size_t c = 0; c < params.d_model; ++c) root(0, c) = h_final(shape.root_id(), c);
  Matrix<S> logits = matmul(root, params.head_w);
  add_bias_inplace(logits, params.head_b);
  return logits;
}

/// Next-token targets: position t predicts tokens[t + 1]; the last real
/// position predicts end-of-sequence; padding rows are masked out.
inline void lm_targets(const std::vector<std::size_t> &tokens, std::size_t n_padded,
                       std::vector<std::size_t> &targets, std::vector<bool> &mask,
                       std::size_t pad_id = kPadId, std::size_t eos_id = kEosId) {
  targets.assign(n_padded, 0);
  mask.assign(n_padded, false);
  for (std::size_t t = 0; t < tokens.size() && t < n_padded; ++t) {
    if (tokens[t] == pad_id) continue;
    if (t + 1 < tokens.size()) {
      if (tokens[t + 1] == pad_id) continue;
      targets[t] = tokens[t + 1];
    } else {
      targets[t] = eos_id;
    }
    mask[t] = true;
  }
}

/// Backward through the layer stack given d(loss)/d(h_final). Returns the
/// loss gradient w.r.t. the pre-dropout initial states and accumulates
/// parameter gradients.
template <class S>
Matrix<S> model_backward(const ModelParams<S> &params, const BpGraph &graph,
                         const ForwardTape<S> &tape, Matrix<S> d_h,
                         ModelParams<S> &grads) {
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const LayerTape<S> &lt = tape.layers[l];
    const LayerParams<S> &lp = params.layers[l];
    LayerParams<S> &lg = grads.layers[l];

    Matrix<S> d_sum2;
    layer_norm_backward(lt.sum2, lp.ln2_gain, lt.ln2, d_h, d_sum2, lg.ln2_gain, lg.ln2_bias);

    Matrix<S> d_ffn_out = d_sum2;
    if (!lt.h2_mask.empty())
      for (std::size_t i = 0; i < d_ffn_out.size(); ++i)
        d_ffn_out.data[i] *= lt.h2_mask.data[i];
    Matrix<S> d_z_from_ffn;
    ffn_backward(lt.z, lp.ffn, lt.ffn, d_ffn_out, d_z_from_ffn, lg.ffn);

    Matrix<S> d_z = std::move(d_sum2);
    add_inplace(d_z, d_z_from_ffn);

    Matrix<S> d_sum1;
    layer_norm_backward(lt.sum1, lp.ln1_gain, lt.ln1, d_z, d_sum1, lg.ln1_gain, lg.ln1_bias);

    Matrix<S> d_attn_out = d_sum1;
    if (!lt.h1_mask.empty())
      for (std::size_t i = 0; i < d_attn_out.size(); ++i)
        d_attn_out.data[i] *= lt.h1_mask.data[i];

    Matrix<S> d_h_attn =
        gsa_backward(graph, lt.h_in, lp.attn, params.n_heads, lt.trace, d_attn_out, lg.attn);

    d_h = std::move(d_sum1);
    add_inplace(d_h, d_h_attn);
  }
  return d_h;
}

/// Scatter d(h0) rows into the embedding gradient.
template <class S>
void embedding_backward(const std::vector<std::size_t> &tokens, const ForwardTape<S> &tape,
                        const Matrix<S> &d_h0, ModelParams<S> &grads,
                        std::size_t pad_id = kPadId) {
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] == pad_id) continue;
    S *dst = grads.embedding.row(tokens[t]);
    const S *src = d_h0.row(t);
    if (!tape.emb_mask.empty()) {
      const S *mask = tape.emb_mask.row(t);
      for (std::size_t c = 0; c < grads.embedding.cols; ++c) dst[c] += src[c] * mask[c];
    } else {
      for (std::size_t c = 0; c < grads.embedding.cols; ++c) dst[c] += src[c];
    }
  }
}

/// One labeled or unlabeled batch over a shared graph.
struct Batch {
  std::vector<std::vector<std::size_t>> sequences;
  std::vector<std::size_t> labels;  // classifier only
};

template <class S>
struct LossResult {
  S loss = S(0);
  std::size_t positions = 0;
};

/// Scalar loss plus gradients for every parameter. Language-model batches
/// pool the mean over all unmasked positions; classifier batches average
/// over items. Gradients are freshly accumulated into `grads` (caller
/// provides a zeroed structure).
template <class S>
LossResult<S> loss_and_grads(const Batch &batch, const ModelParams<S> &params,
                             const BpGraph &graph, ModelParams<S> &grads,
                             const DropoutPlan &dropout = {},
                             std::mt19937_64 *rng = nullptr) {
  if (batch.sequences.empty()) throw InvalidInputError("loss_and_grads: empty batch");
  const TreeShape &shape = graph.shape;
  LossResult<S> result;

  // Pooled denominator first so each item's gradient carries 1/total.
  std::size_t total = 0;
  std::vector<std::size_t> item_counts(batch.sequences.size(), 1);
  if (params.head == HeadKind::lm) {
    if (graph.mode != Mode::causal)
      throw ConfigError("loss_and_grads: language modeling requires a causal graph");
    std::vector<std::size_t> targets;
    std::vector<bool> mask;
    for (std::size_t item = 0; item < batch.sequences.size(); ++item) {
      lm_targets(batch.sequences[item], shape.n_padded, targets, mask);
      std::size_t count = 0;
      for (const bool m : mask) count += m ? 1 : 0;
      item_counts[item] = count;
      total += count;
    }
  } else {
    if (graph.mode != Mode::bidirectional)
      throw ConfigError("loss_and_grads: classification requires a bidirectional graph");
    if (batch.labels.size() != batch.sequences.size())
      throw InvalidInputError("loss_and_grads: label count mismatch");
    total = batch.sequences.size();
  }
  if (total == 0)
    throw InvalidInputError("loss_and_grads: every position in the batch is masked");

  S loss_sum = S(0);
  for (std::size_t item = 0; item < batch.sequences.size(); ++item) {
    if (item_counts[item] == 0) continue;
    const auto &tokens = batch.sequences[item];
    ForwardTape<S> tape = model_forward(tokens, params, graph, dropout, rng);

    Matrix<S> d_h_final(shape.num_nodes(), params.d_model);
    if (params.head == HeadKind::lm) {
      const Matrix<S> logits = lm_logits(tape.h_final, params, shape);
      std::vector<std::size_t> targets;
      std::vector<bool> mask;
      lm_targets(tokens, shape.n_padded, targets, mask);
      std::size_t count = 0;
      loss_sum += cross_entropy(logits, targets, mask, &count) * static_cast<S>(count);
      const Matrix<S> d_logits = cross_entropy_backward(logits, targets, mask, total);

      for (std::size_t r = 0; r < d_logits.rows; ++r)
        for (std::size_t c = 0; c < d_logits.cols; ++c)
          grads.head_b.data[c] += d_logits(r, c);
      Matrix<S> token_states(shape.n_padded, params.d_model);
      for (std::size_t t = 0; t < shape.n_padded; ++t)
        for (std::size_t c = 0; c < params.d_model; ++c) token_states(t, c) = tape.h_final(t, c);
      add_inplace(grads.head_w, matmul_tn(token_states, d_logits));
      const Matrix<S> d_tokens = matmul_nt(d_logits, params.head_w);
      for (std::size_t t = 0; t < shape.n_padded; ++t)
        for (std::size_t c = 0; c < params.d_model; ++c) d_h_final(t, c) = d_tokens(t, c);
    } else {
      Matrix<S> root(1, params.d_model);
      for (std::size_t c = 0; c < params.d_model; ++c)
        root(0, c) = tape.h_final(shape.root_id(), c);
      Matrix<S> cls_mask;
      if (dropout.enabled && dropout.cls > 0.0) {
        if (rng == nullptr) throw InvalidInputError("loss_and_grads: dropout requires an rng");
        cls_mask = dropout_mask<S>(1, params.d_model, dropout.cls, *rng);
        for (std::size_t c = 0; c < params.d_model; ++c) root(0, c) *= cls_mask.data[c];
      }
      Matrix<S> logits = matmul(root, params.head_w);
      add_bias_inplace(logits, params.head_b);
      const std::vector<std::size_t> targets{batch.labels[item]};
      const std::vector<bool> mask{true};
      loss_sum += cross_entropy(logits, targets, mask);
      const Matrix<S> d_logits = cross_entropy_backward(logits, targets, mask, total);

      add_inplace(grads.head_b, d_logits);
      add_inplace(grads.head_w, matmul_tn(root, d_logits));
      Matrix<S> d_root = matmul_nt(d_logits, params.head_w);
      if (!cls_mask.empty())
        for (std::size_t c = 0; c < params.d_model; ++c) d_root.data[c] *= cls_mask.data[c];
      for (std::size_t c = 0; c < params.d_model; ++c)
        d_h_final(shape.root_id(), c) = d_root.data[c];
    }

    const Matrix<S> d_h0 = model_backward(params, graph, tape, std::move(d_h_final), grads);
    embedding_backward(tokens, tape, d_h0, grads);
  }

  result.loss = loss_sum / static_cast<S>(total);
  result.positions = total;
  if (!std::isfinite(static_cast<double>(result.loss)))
    throw TrainingError("loss_and_grads: non-finite loss");
  return result;
}

/// Token-only full-attention reference stack (no relation table, no
/// positional signal). Shares only the primitive kernels with the sparse
/// path; attention here is computed densely row by row.
template <class S>
Matrix<S> dense_msa(const Matrix<S> &states, const AttentionParams<S> &params,
                    std::size_t n_heads) {
  const std::size_t n = states.rows;
  const std::size_t d = states.cols;
  const std::size_t d_head = d / n_heads;
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d_head)));
  const Matrix<S> q = matmul(states, params.wq);
  const Matrix<S> k = matmul(states, params.wk);
  const Matrix<S> v = matmul(states, params.wv);
  Matrix<S> concat(n, d);
  std::vector<S> logits(n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t base = h * d_head;
      for (std::size_t j = 0; j < n; ++j) {
        S dot = S(0);
        for (std::size_t c = 0; c < d_head; ++c) dot += q(u, base + c) * k(j, base + c);
        logits[j] = dot * scale;
      }
      softmax_span(logits.data(), n);
      for (std::size_t j = 0; j < n; ++j) {
        const S w = logits[j];
        for (std::size_t c = 0; c < d_head; ++c) concat(u, base + c) += w * v(j, base + c);
      }
    }
  }
  return matmul(concat, params.wo);
}

template <class S>
Matrix<S> dense_reference_forward(const std::vector<std::size_t> &tokens,
                                  const ModelParams<S> &params,
                                  std::size_t pad_id = kPadId) {
  Matrix<S> h(tokens.size(), params.d_model);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] == pad_id) continue;
    if (tokens[t] >= params.vocab_size)
      throw VocabError("dense_reference_forward: token id outside vocabulary");
    for (std::size_t c = 0; c < params.d_model; ++c)
      h(t, c) = params.embedding(tokens[t], c);
  }
  for (const LayerParams<S> &lp : params.layers) {
    Matrix<S> sum1 = h;
    add_inplace(sum1, dense_msa(h, lp.attn, params.n_heads));
    const Matrix<S> z = layer_norm_forward(sum1, lp.ln1_gain, lp.ln1_bias);
    Matrix<S> sum2 = z;
    add_inplace(sum2, ffn_forward(z, lp.ffn));
    h = layer_norm_forward(sum2, lp.ln2_gain, lp.ln2_bias);
  }
  return h;
}

}  // namespace bpt

#endif  // BPT_MODEL_HPP
