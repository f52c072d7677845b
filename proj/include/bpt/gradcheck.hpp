#ifndef BPT_GRADCHECK_HPP
#define BPT_GRADCHECK_HPP

#include <random>
#include <string>
#include <vector>

#include "bpt/attention.hpp"
#include "bpt/finite_diff.hpp"
#include "bpt/graph.hpp"
#include "bpt/kernels.hpp"
#include "bpt/model.hpp"

// Finite-difference verification of every analytic gradient, always in
// 64-bit. Isolated kernels must land under 1e-6 relative error, the
// composed model under 1e-4.

namespace bpt {

struct GradCheckEntry {
  std::string name;
  double rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return rel_error < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  bool passed() const {
    for (const auto &e : entries)
      if (!e.passed()) return false;
    return true;
  }

  double worst_ratio() const {
    double worst = 0.0;
    for (const auto &e : entries) worst = std::max(worst, e.rel_error / e.tolerance);
    return worst;
  }
};

namespace gradcheck_detail {

inline constexpr double kKernelTol = 1e-6;
inline constexpr double kModelTol = 1e-4;
inline constexpr double kStep = 1e-6;
inline constexpr double kModelStep = 1e-5;

template <class S>
S weighted_sum(const Matrix<S> &x, const Matrix<S> &w) {
  S total = S(0);
  for (std::size_t i = 0; i < x.size(); ++i) total += x.data[i] * w.data[i];
  return total;
}

template <class S>
Matrix<S> rand_m(std::size_t r, std::size_t c, std::mt19937_64 &rng, double scale = 1.0) {
  Matrix<S> m(r, c);
  for (S &v : m.data) v = static_cast<S>((2.0 * canonical_uniform(rng) - 1.0) * scale);
  return m;
}

/// Forward-only batch loss matching loss_and_grads pooling.
template <class S>
S batch_loss(const Batch &batch, const ModelParams<S> &params, const BpGraph &graph) {
  std::size_t total = 0;
  std::vector<std::size_t> targets;
  std::vector<bool> mask;
  if (params.head == HeadKind::lm) {
    for (const auto &tokens : batch.sequences) {
      lm_targets(tokens, graph.shape.n_padded, targets, mask);
      for (const bool m : mask) total += m ? 1 : 0;
    }
  } else {
    total = batch.sequences.size();
  }
  S loss_sum = S(0);
  for (std::size_t item = 0; item < batch.sequences.size(); ++item) {
    const ForwardTape<S> tape = model_forward(batch.sequences[item], params, graph);
    if (params.head == HeadKind::lm) {
      const Matrix<S> logits = lm_logits(tape.h_final, params, graph.shape);
      lm_targets(batch.sequences[item], graph.shape.n_padded, targets, mask);
      std::size_t count = 0;
      loss_sum += cross_entropy(logits, targets, mask, &count) * static_cast<S>(count);
    } else {
      const Matrix<S> logits = cls_logits(tape.h_final, params, graph.shape);
      loss_sum += cross_entropy(logits, {batch.labels[item]}, {true});
    }
  }
  return loss_sum / static_cast<S>(total);
}

inline void check_kernels(GradCheckReport &report, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  {
    auto a = rand_m<double>(5, 4, rng);
    auto b = rand_m<double>(4, 3, rng);
    const auto dc = rand_m<double>(5, 3, rng);
    const auto [da, db] = matmul_grad(a, b, dc);
    auto f = [&] { return weighted_sum(matmul(a, b), dc); };
    report.entries.push_back({"matmul.dA",
                              relative_error(da, finite_diff_matrix<double>(f, a, kStep)),
                              kKernelTol});
    report.entries.push_back({"matmul.dB",
                              relative_error(db, finite_diff_matrix<double>(f, b, kStep)),
                              kKernelTol});
  }
  {
    SegmentVector<double> x;
    x.offsets = {0, 1, 5, 12};
    for (std::size_t i = 0; i < 12; ++i) x.values.push_back(2.0 * canonical_uniform(rng) - 1.0);
    SegmentVector<double> dy = x;
    for (double &v : dy.values) v = 2.0 * canonical_uniform(rng) - 1.0;
    const auto y = segment_softmax(x);
    const auto dx = segment_softmax_backward(y, dy);
    const std::function<double(const std::vector<double> &)> f =
        [&](const std::vector<double> &values) {
          const auto out = segment_softmax(SegmentVector<double>{values, x.offsets});
          double total = 0.0;
          for (std::size_t i = 0; i < out.values.size(); ++i)
            total += out.values[i] * dy.values[i];
          return total;
        };
    report.entries.push_back(
        {"segment_softmax",
         relative_error(dx.values, finite_diff<double>(f, x.values, kStep)), kKernelTol});
  }
  {
    auto x = rand_m<double>(3, 8, rng);
    auto gain = rand_m<double>(1, 8, rng);
    auto bias = rand_m<double>(1, 8, rng);
    const auto dy = rand_m<double>(3, 8, rng);
    LayerNormCache<double> cache;
    layer_norm_forward(x, gain, bias, &cache);
    Matrix<double> dx, dgain(1, 8), dbias(1, 8);
    layer_norm_backward(x, gain, cache, dy, dx, dgain, dbias);
    auto f = [&] { return weighted_sum(layer_norm_forward(x, gain, bias), dy); };
    report.entries.push_back({"layer_norm.dx",
                              relative_error(dx, finite_diff_matrix<double>(f, x, kStep)),
                              kKernelTol});
    report.entries.push_back(
        {"layer_norm.dgain",
         relative_error(dgain, finite_diff_matrix<double>(f, gain, kStep)), kKernelTol});
    report.entries.push_back(
        {"layer_norm.dbias",
         relative_error(dbias, finite_diff_matrix<double>(f, bias, kStep)), kKernelTol});
  }
  {
    FfnParams<double> p{rand_m<double>(4, 12, rng), rand_m<double>(1, 12, rng),
                        rand_m<double>(12, 4, rng), rand_m<double>(1, 4, rng)};
    auto x = rand_m<double>(5, 4, rng);
    const auto dy = rand_m<double>(5, 4, rng);
    FfnCache<double> cache;
    ffn_forward(x, p, &cache);
    Matrix<double> dx;
    FfnParams<double> dp{Matrix<double>(4, 12), Matrix<double>(1, 12),
                         Matrix<double>(12, 4), Matrix<double>(1, 4)};
    ffn_backward(x, p, cache, dy, dx, dp);
    auto f = [&] { return weighted_sum(ffn_forward(x, p), dy); };
    report.entries.push_back(
        {"ffn.dx", relative_error(dx, finite_diff_matrix<double>(f, x, kStep)), kKernelTol});
    report.entries.push_back(
        {"ffn.dw1", relative_error(dp.w1, finite_diff_matrix<double>(f, p.w1, kStep)),
         kKernelTol});
    report.entries.push_back(
        {"ffn.dw2", relative_error(dp.w2, finite_diff_matrix<double>(f, p.w2, kStep)),
         kKernelTol});
  }
  {
    auto logits = rand_m<double>(4, 6, rng);
    const std::vector<std::size_t> targets{1, 0, 5, 3};
    const std::vector<bool> mask{true, true, false, true};
    std::size_t count = 0;
    cross_entropy(logits, targets, mask, &count);
    const auto dl = cross_entropy_backward(logits, targets, mask, count);
    const auto fd = finite_diff_matrix<double>(
        [&] { return cross_entropy(logits, targets, mask); }, logits, kStep);
    report.entries.push_back({"cross_entropy", relative_error(dl, fd), kKernelTol});
  }
}

inline void check_attention(GradCheckReport &report, std::uint64_t seed) {
  const BpGraph graph = build_graph(8, 1, Mode::bidirectional);
  std::mt19937_64 rng(seed + 1);
  const std::size_t d = 16, heads = 2;
  AttentionParams<double> params{rand_m<double>(d, d, rng, 0.5), rand_m<double>(d, d, rng, 0.5),
                                 rand_m<double>(d, d, rng, 0.5), rand_m<double>(d, d, rng, 0.5),
                                 rand_m<double>(graph.relations().size(), d / heads, rng, 0.5)};
  auto h = rand_m<double>(graph.num_nodes(), d, rng);
  const auto d_out = rand_m<double>(graph.num_nodes(), d, rng);

  AttentionTrace<double> trace;
  gsa_forward(graph, h, params, heads, trace);
  AttentionParams<double> grads = attention_zeros_like(params);
  const auto dh = gsa_backward(graph, h, params, heads, trace, d_out, grads);

  auto f = [&] {
    AttentionTrace<double> t;
    return weighted_sum(gsa_forward(graph, h, params, heads, t), d_out);
  };
  report.entries.push_back(
      {"gsa.dH", relative_error(dh, finite_diff_matrix<double>(f, h, kStep)), kKernelTol});
  report.entries.push_back(
      {"gsa.dwq", relative_error(grads.wq, finite_diff_matrix<double>(f, params.wq, kStep)),
       kKernelTol});
  report.entries.push_back(
      {"gsa.dwk", relative_error(grads.wk, finite_diff_matrix<double>(f, params.wk, kStep)),
       kKernelTol});
  report.entries.push_back(
      {"gsa.dwv", relative_error(grads.wv, finite_diff_matrix<double>(f, params.wv, kStep)),
       kKernelTol});
  report.entries.push_back(
      {"gsa.dwo", relative_error(grads.wo, finite_diff_matrix<double>(f, params.wo, kStep)),
       kKernelTol});
  report.entries.push_back(
      {"gsa.drel", relative_error(grads.rel, finite_diff_matrix<double>(f, params.rel, kStep)),
       kKernelTol});
}

template <class MakeBatch>
void check_model(GradCheckReport &report, const std::string &tag, HeadKind head, Mode mode,
                 std::size_t n_outputs, const MakeBatch &make_batch, std::uint64_t seed) {
  RunConfig config;
  config.n_max = 8;
  config.k = 1;
  config.layers = 2;
  config.d_model = 16;
  config.heads = 2;
  config.d_ff = 32;
  config.mode = mode;
  config.precision = Precision::verify;

  const std::size_t vocab = 11;
  ModelParams<double> params = init_params<double>(config, vocab, n_outputs, head, seed + 2);
  // Give every zero-initialized tensor a random value so its gradient is
  // exercised away from the origin.
  std::mt19937_64 rng(seed + 3);
  params.for_each_tensor([&](const std::string &name, Matrix<double> &m) {
    if (name.find(".rel") != std::string::npos || name.find("bias") != std::string::npos ||
        name.find(".b") != std::string::npos)
      for (double &v : m.data) v = 0.4 * (2.0 * canonical_uniform(rng) - 1.0);
  });

  const BpGraph graph = build_graph(config.n_max, config.k, mode);
  const Batch batch = make_batch();

  ModelParams<double> grads = params.zeros_like();
  loss_and_grads(batch, params, graph, grads);

  std::vector<std::pair<std::string, Matrix<double> *>> tensors;
  params.for_each_tensor([&](const std::string &name, Matrix<double> &m) {
    tensors.emplace_back(name, &m);
  });
  std::vector<const Matrix<double> *> grad_ptrs;
  grads.for_each_tensor([&](const std::string &, const Matrix<double> &m) {
    grad_ptrs.push_back(&m);
  });

  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const auto fd = finite_diff_matrix<double>(
        [&] { return batch_loss(batch, params, graph); }, *tensors[t].second, kModelStep);
    report.entries.push_back(
        {tag + "." + tensors[t].first, relative_error(*grad_ptrs[t], fd), kModelTol});
  }
}

}  // namespace gradcheck_detail

inline GradCheckReport run_grad_checks(std::uint64_t seed) {
  using namespace gradcheck_detail;
  GradCheckReport report;
  check_kernels(report, seed);
  check_attention(report, seed);
  check_model(
      report, "lm", HeadKind::lm, Mode::causal, 11,
      [] {
        Batch b;
        b.sequences = {{3, 4, 5, 6, 7, 8, 9, 10}, {4, 6, 8, 10, 3}};
        return b;
      },
      seed);
  check_model(
      report, "cls", HeadKind::classifier, Mode::bidirectional, 3,
      [] {
        Batch b;
        b.sequences = {{3, 4, 5, 6, 7, 8, 9, 10}, {5, 7, 9}};
        b.labels = {1, 2};
        return b;
      },
      seed);
  return report;
}

}  // namespace bpt

#endif  // BPT_GRADCHECK_HPP
