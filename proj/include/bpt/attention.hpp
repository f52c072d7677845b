#ifndef BPT_ATTENTION_HPP
#define BPT_ATTENTION_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/graph.hpp"
#include "bpt/kernels.hpp"
#include "bpt/matrix.hpp"

namespace bpt {

/// Per-layer attention weights. Heads live side by side in the columns of
/// wq/wk/wv (head i owns columns [i*d_head, (i+1)*d_head)). The relation
/// table holds one d_head-wide vector per RelationId, shared across heads
/// and added to keys only.
template <class S>
struct AttentionParams {
  Matrix<S> wq, wk, wv;  // d x d
  Matrix<S> wo;          // d x d
  Matrix<S> rel;         // num_relations x d_head
};

/// Per-edge softmax weights (pre-dropout) and per-destination log-sum-exp,
/// one column per head. drop_mask is empty unless attention dropout ran.
template <class S>
struct AttentionTrace {
  Matrix<S> weights;    // num_edges x heads
  Matrix<S> lse;        // num_nodes x heads
  Matrix<S> drop_mask;  // num_edges x heads, values 0 or 1/(1-p)
};

/// Gradients mirror the parameter structure tensor for tensor.
template <class S>
AttentionParams<S> attention_zeros_like(const AttentionParams<S> &p) {
  return {Matrix<S>(p.wq.rows, p.wq.cols), Matrix<S>(p.wk.rows, p.wk.cols),
          Matrix<S>(p.wv.rows, p.wv.cols), Matrix<S>(p.wo.rows, p.wo.cols),
          Matrix<S>(p.rel.rows, p.rel.cols)};
}

namespace detail {

template <class S>
void check_gsa_inputs(const BpGraph &graph, const Matrix<S> &states,
                      const AttentionParams<S> &params, std::size_t n_heads) {
  if (states.rows != graph.num_nodes())
    throw ShapeError("gsa: one state row per graph node required");
  const std::size_t d = states.cols;
  if (d == 0 || n_heads == 0 || d % n_heads != 0)
    throw ShapeError("gsa: head count must divide model width");
  if (params.wq.rows != d || params.wq.cols != d || params.wk.rows != d ||
      params.wk.cols != d || params.wv.rows != d || params.wv.cols != d ||
      params.wo.rows != d || params.wo.cols != d)
    throw ShapeError("gsa: projection shape mismatch");
  if (params.rel.cols != d / n_heads)
    throw ShapeError("gsa: relation vector width must equal head width");
  if (params.rel.rows < graph.relations().size())
    throw ConfigError("gsa: relation table does not cover the graph's labels");
}

/// Aggregate values into the concatenated head layout using effective
/// (possibly dropped) attention weights.
template <class S>
Matrix<S> gather_weighted_values(const BpGraph &graph, const Matrix<S> &values,
                                 const AttentionTrace<S> &trace, std::size_t n_heads) {
  const std::size_t d = values.cols;
  const std::size_t d_head = d / n_heads;
  const bool dropped = !trace.drop_mask.empty();
  Matrix<S> out(values.rows, d);
#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(graph.num_nodes()); ++u) {
    S *out_row = out.row(static_cast<std::size_t>(u));
    for (std::size_t e = graph.offsets[u]; e < graph.offsets[u + 1]; ++e) {
      const S *v_row = values.row(graph.src[e]);
      for (std::size_t h = 0; h < n_heads; ++h) {
        S w = trace.weights(e, h);
        if (dropped) w *= trace.drop_mask(e, h);
        if (w == S(0)) continue;
        const std::size_t base = h * d_head;
        for (std::size_t c = 0; c < d_head; ++c)
          out_row[base + c] += w * v_row[base + c];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Multi-head graph self-attention forward over the predecessor lists.
/// Per head: logits = q(u) . (k(v) + rel(v,u)) / sqrt(d_head), softmax per
/// destination, weighted value sum, heads concatenated and projected.
///
/// attn_dropout > 0 draws an inverted-dropout mask over edge weights from
/// rng; pass 0 (verification / evaluation) for the exact path.
template <class S>
Matrix<S> gsa_forward(const BpGraph &graph, const Matrix<S> &states,
                      const AttentionParams<S> &params, std::size_t n_heads,
                      AttentionTrace<S> &trace, double attn_dropout = 0.0,
                      std::mt19937_64 *rng = nullptr) {
  detail::check_gsa_inputs(graph, states, params, n_heads);
  const std::size_t d = states.cols;
  const std::size_t d_head = d / n_heads;
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d_head)));

  const Matrix<S> q = matmul(states, params.wq);
  const Matrix<S> k = matmul(states, params.wk);
  const Matrix<S> v = matmul(states, params.wv);

  trace.weights = Matrix<S>(graph.num_edges(), n_heads);
  trace.lse = Matrix<S>(graph.num_nodes(), n_heads);
  trace.drop_mask = Matrix<S>();

#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(graph.num_nodes()); ++u) {
    const std::size_t begin = graph.offsets[u];
    const std::size_t end = graph.offsets[u + 1];
    const S *q_row = q.row(static_cast<std::size_t>(u));
    for (std::size_t e = begin; e < end; ++e) {
      const S *k_row = k.row(graph.src[e]);
      const S *r_row = params.rel.row(graph.rel_index[e]);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t base = h * d_head;
        S dot = S(0);
        for (std::size_t c = 0; c < d_head; ++c)
          dot += q_row[base + c] * (k_row[base + c] + r_row[c]);
        trace.weights(e, h) = dot * scale;
      }
    }
    for (std::size_t h = 0; h < n_heads; ++h)
      trace.lse(static_cast<std::size_t>(u), h) =
          softmax_span(&trace.weights(begin, h), end - begin, n_heads);
  }

  if (attn_dropout > 0.0) {
    if (rng == nullptr) throw InvalidInputError("gsa: dropout requires an rng");
    trace.drop_mask = Matrix<S>(graph.num_edges(), n_heads);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - attn_dropout));
    for (S &m : trace.drop_mask.data)
      m = canonical_uniform(*rng) < attn_dropout ? S(0) : keep_scale;
  }

  const Matrix<S> gathered = detail::gather_weighted_values(graph, v, trace, n_heads);
  return matmul(gathered, params.wo);
}

/// Analytic gradients for gsa_forward. Recomputes the projections from
/// (states, params); the trace must come from the matching forward call.
template <class S>
Matrix<S> gsa_backward(const BpGraph &graph, const Matrix<S> &states,
                       const AttentionParams<S> &params, std::size_t n_heads,
                       const AttentionTrace<S> &trace, const Matrix<S> &d_out,
                       AttentionParams<S> &grads) {
  detail::check_gsa_inputs(graph, states, params, n_heads);
  if (trace.weights.rows != graph.num_edges() || trace.weights.cols != n_heads ||
      trace.lse.rows != graph.num_nodes())
    throw InvalidInputError("gsa_backward: trace does not match graph");
  if (!d_out.same_shape(states)) throw ShapeError("gsa_backward: upstream shape mismatch");
  const std::size_t d = states.cols;
  const std::size_t d_head = d / n_heads;
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d_head)));
  const bool dropped = !trace.drop_mask.empty();

  const Matrix<S> q = matmul(states, params.wq);
  const Matrix<S> k = matmul(states, params.wk);
  const Matrix<S> v = matmul(states, params.wv);
  const Matrix<S> gathered = detail::gather_weighted_values(graph, v, trace, n_heads);

  add_inplace(grads.wo, matmul_tn(gathered, d_out));
  const Matrix<S> d_gathered = matmul_nt(d_out, params.wo);

  Matrix<S> dq(states.rows, d);
  Matrix<S> dk(states.rows, d);
  Matrix<S> dv(states.rows, d);

  // Per-destination: value scatter, dropout unwind, softmax backward,
  // then the bilinear logit gradient into q, k, and the relation table.
  // Serial scatter keeps accumulation order fixed.
  std::vector<S> d_weights;
  std::vector<S> d_logits;
  for (std::size_t u = 0; u < graph.num_nodes(); ++u) {
    const std::size_t begin = graph.offsets[u];
    const std::size_t count = graph.offsets[u + 1] - begin;
    const S *dg_row = d_gathered.row(u);
    const S *q_row = q.row(u);
    S *dq_row = dq.row(u);
    d_weights.assign(count * n_heads, S(0));
    d_logits.assign(count * n_heads, S(0));

    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t e = begin + i;
      const std::uint32_t src = graph.src[e];
      const S *v_row = v.row(src);
      S *dv_row = dv.row(src);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const std::size_t base = h * d_head;
        const S mask = dropped ? trace.drop_mask(e, h) : S(1);
        const S w_eff = trace.weights(e, h) * mask;
        S d_w_eff = S(0);
        for (std::size_t c = 0; c < d_head; ++c) {
          d_w_eff += dg_row[base + c] * v_row[base + c];
          dv_row[base + c] += w_eff * dg_row[base + c];
        }
        d_weights[i * n_heads + h] = d_w_eff * mask;
      }
    }
    for (std::size_t h = 0; h < n_heads; ++h)
      softmax_span_backward(&trace.weights(begin, h), d_weights.data() + h,
                            d_logits.data() + h, count, n_heads);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t e = begin + i;
      const S *k_row = k.row(graph.src[e]);
      const S *r_row = params.rel.row(graph.rel_index[e]);
      S *dk_row = dk.row(graph.src[e]);
      S *dr_row = grads.rel.row(graph.rel_index[e]);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const S dl = d_logits[i * n_heads + h] * scale;
        if (dl == S(0)) continue;
        const std::size_t base = h * d_head;
        for (std::size_t c = 0; c < d_head; ++c) {
          dq_row[base + c] += dl * (k_row[base + c] + r_row[c]);
          const S dk_c = dl * q_row[base + c];
          dk_row[base + c] += dk_c;
          dr_row[c] += dk_c;
        }
      }
    }
  }

  add_inplace(grads.wq, matmul_tn(states, dq));
  add_inplace(grads.wk, matmul_tn(states, dk));
  add_inplace(grads.wv, matmul_tn(states, dv));

  Matrix<S> d_states = matmul_nt(dq, params.wq);
  add_inplace(d_states, matmul_nt(dk, params.wk));
  add_inplace(d_states, matmul_nt(dv, params.wv));
  return d_states;
}

}  // namespace bpt

#endif  // BPT_ATTENTION_HPP
