#ifndef BPT_TRAIN_HPP
#define BPT_TRAIN_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "bpt/checkpoint.hpp"
#include "bpt/config.hpp"
#include "bpt/corpus.hpp"
#include "bpt/graph.hpp"
#include "bpt/model.hpp"
#include "bpt/optim.hpp"

namespace bpt {

/// All stochastic streams derive from (seed, purpose, step), so any point
/// of a run can be reproduced without replaying history.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint32_t purpose,
                                  std::uint64_t step) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    purpose, static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(step >> 32)};
  return std::mt19937_64(seq);
}

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

/// Tab-separated metrics stream, one record per log step. The wall-time
/// column reports 0 in verification mode so equal-seed runs emit equal
/// bytes.
class MetricsEmitter {
 public:
  MetricsEmitter(std::ostream &out, bool verify_mode, const DegreeStats &degree)
      : out_(&out), verify_(verify_mode), degree_(degree),
        start_(std::chrono::steady_clock::now()) {
    *out_ << "# step\ttrain_loss\teval_metric\tdegree_min\tdegree_mean\tdegree_max"
          << "\tedges\twall_s\n";
  }

  void emit(long step, double train_loss, double eval_metric) {
    double wall = 0.0;
    if (!verify_) {
      const auto now = std::chrono::steady_clock::now();
      wall = std::chrono::duration<double>(now - start_).count();
    }
    *out_ << step << '\t' << format_metric(train_loss) << '\t'
          << format_metric(eval_metric) << '\t' << degree_.min_degree << '\t'
          << format_metric(degree_.mean_degree) << '\t' << degree_.max_degree << '\t'
          << degree_.total_edges << '\t' << format_metric(wall) << '\n';
    out_->flush();
  }

 private:
  std::ostream *out_;
  bool verify_;
  DegreeStats degree_;
  std::chrono::steady_clock::time_point start_;
};

inline double nats_to_bpc(double nats) { return nats / M_LN2; }

/// Pooled mean negative log-likelihood (nats per predicted position) over
/// a chunk list, dropout off.
template <class S>
double evaluate_lm_nats(const ModelParams<S> &params, const BpGraph &graph,
                        const std::vector<std::vector<std::size_t>> &chunks) {
  double total = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> targets;
  std::vector<bool> mask;
  for (const auto &tokens : chunks) {
    const ForwardTape<S> tape = model_forward(tokens, params, graph);
    const Matrix<S> logits = lm_logits(tape.h_final, params, graph.shape);
    lm_targets(tokens, graph.shape.n_padded, targets, mask);
    std::size_t chunk_count = 0;
    const S mean = cross_entropy(logits, targets, mask, &chunk_count);
    total += static_cast<double>(mean) * static_cast<double>(chunk_count);
    count += chunk_count;
  }
  if (count == 0) throw DataError("evaluate_lm: no predictable positions");
  return total / static_cast<double>(count);
}

template <class S>
std::size_t predict_class(const ModelParams<S> &params, const BpGraph &graph,
                          const std::vector<std::size_t> &tokens) {
  const ForwardTape<S> tape = model_forward(tokens, params, graph);
  const Matrix<S> logits = cls_logits(tape.h_final, params, graph.shape);
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.cols; ++c)
    if (logits(0, c) > logits(0, best)) best = c;
  return best;
}

template <class S>
double evaluate_cls_accuracy(const ModelParams<S> &params, const BpGraph &graph,
                             const std::vector<ClsExample> &examples) {
  if (examples.empty()) throw DataError("evaluate_cls: empty split");
  std::size_t correct = 0;
  for (const ClsExample &ex : examples)
    if (predict_class(params, graph, ex.tokens) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

struct TrainSummary {
  long steps_run = 0;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double best_eval_metric = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

template <class S>
AdamState<S> make_optimizer(const RunConfig &config, ModelParams<S> &params) {
  AdamConfig adam;
  adam.lr = config.lr;
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.eps = config.adam_eps;
  adam.warmup_steps = config.warmup;
  return AdamState<S>::init(adam, params.tensor_ptrs());
}

}  // namespace detail

/// Causal language-model training over fixed-length contexts. Batches
/// walk the chunk list round-robin, a pure function of the step, so a
/// resumed run replays the identical schedule. Writes the checkpoint with
/// the best validation bits-per-character.
template <class S>
TrainSummary train_lm(const LmCorpus &corpus, const RunConfig &config,
                      std::ostream &metrics_out, const std::string &checkpoint_path,
                      const std::string &resume_path = "",
                      const std::function<bool(long, double, const ModelParams<S> &)> &should_stop = {}) {
  config.validate();
  if (config.mode != Mode::causal)
    throw ConfigError("train_lm: config mode must be causal");
  const BpGraph graph = build_graph(config.n_max, config.k, Mode::causal);
  const auto chunks = chunk_text(corpus.split(Split::train), corpus.vocab(), config.n_max);
  const auto valid_chunks =
      chunk_text(corpus.split(Split::valid), corpus.vocab(), config.n_max);

  ModelParams<S> params;
  AdamState<S> optimizer;
  long start_step = 0;
  if (resume_path.empty()) {
    params = init_params<S>(config, corpus.vocab().size(), corpus.vocab().size(),
                            HeadKind::lm, config.seed);
    optimizer = detail::make_optimizer(config, params);
  } else {
    CheckpointMeta meta;
    params = load_checkpoint<S>(resume_path, meta, &optimizer);
    if (params.head != HeadKind::lm)
      throw ConfigError("train_lm: checkpoint holds a classifier head");
    if (params.vocab_size != corpus.vocab().size())
      throw DataError("train_lm: checkpoint vocabulary does not match the corpus");
    start_step = static_cast<long>(meta.step);
  }

  MetricsEmitter emitter(metrics_out, config.precision == Precision::verify,
                         attention_degree(graph));
  const DropoutPlan dropout = DropoutPlan::from_config(config, /*training=*/true);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  TrainSummary summary;
  double best_bpc = std::numeric_limits<double>::infinity();
  for (long step = start_step + 1; step <= config.steps; ++step) {
    Batch b;
    for (std::size_t j = 0; j < batch; ++j)
      b.sequences.push_back(
          chunks[(static_cast<std::size_t>(step - 1) * batch + j) % chunks.size()]);

    ModelParams<S> grads = params.zeros_like();
    std::mt19937_64 rng = derive_rng(config.seed, 0xD0u, static_cast<std::uint64_t>(step));
    const LossResult<S> loss = loss_and_grads(b, params, graph, grads, dropout, &rng);
    std::vector<const Matrix<S> *> grad_ptrs;
    for (Matrix<S> *g : grads.tensor_ptrs()) grad_ptrs.push_back(g);
    adam_step(params.tensor_ptrs(), grad_ptrs, optimizer);

    summary.steps_run = step;
    summary.final_train_loss = static_cast<double>(loss.loss);

    const bool stop = should_stop && should_stop(step, summary.final_train_loss, params);
    const bool last = step == config.steps || stop;
    const bool eval_now = step % config.eval_every == 0 || last;
    double metric = std::numeric_limits<double>::quiet_NaN();
    if (eval_now) {
      metric = nats_to_bpc(evaluate_lm_nats(params, graph, valid_chunks));
      if (metric < best_bpc) {
        best_bpc = metric;
        summary.best_eval_metric = metric;
        if (!checkpoint_path.empty()) {
          CheckpointMeta meta;
          meta.head = HeadKind::lm;
          meta.config = config;
          meta.vocab_size = params.vocab_size;
          meta.n_outputs = params.n_outputs;
          meta.step = static_cast<std::uint64_t>(step);
          meta.best_metric = metric;
          save_checkpoint(checkpoint_path, params, meta, &optimizer);
        }
      }
    }
    if (step % config.log_every == 0 || last || eval_now)
      emitter.emit(step, summary.final_train_loss, metric);
    if (stop) break;
  }
  return summary;
}

/// Classification over root readout; same schedule and checkpoint policy
/// with accuracy as the validation metric.
template <class S>
TrainSummary train_cls(const ClsCorpus &corpus, const RunConfig &config,
                       std::ostream &metrics_out, const std::string &checkpoint_path,
                       const std::function<bool(long, double, const ModelParams<S> &)> &should_stop = {}) {
  config.validate();
  if (config.mode != Mode::bidirectional)
    throw ConfigError("train_cls: config mode must be bidirectional");
  if (corpus.labels().size() < 2)
    std::cerr << "warning: label set has a single class; accuracy is trivially 1\n";
  const BpGraph graph = build_graph(config.n_max, config.k, Mode::bidirectional);
  const auto &train_examples = corpus.examples(Split::train);
  const auto &valid_examples = corpus.examples(Split::valid);

  ModelParams<S> params = init_params<S>(config, corpus.vocab().size(),
                                         corpus.labels().size(), HeadKind::classifier,
                                         config.seed);
  AdamState<S> optimizer = detail::make_optimizer(config, params);

  MetricsEmitter emitter(metrics_out, config.precision == Precision::verify,
                         attention_degree(graph));
  const DropoutPlan dropout = DropoutPlan::from_config(config, /*training=*/true);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  TrainSummary summary;
  double best_acc = -1.0;
  for (long step = 1; step <= config.steps; ++step) {
    Batch b;
    for (std::size_t j = 0; j < batch; ++j) {
      const ClsExample &ex =
          train_examples[(static_cast<std::size_t>(step - 1) * batch + j) %
                         train_examples.size()];
      b.sequences.push_back(ex.tokens);
      b.labels.push_back(ex.label);
    }

    ModelParams<S> grads = params.zeros_like();
    std::mt19937_64 rng = derive_rng(config.seed, 0xC1u, static_cast<std::uint64_t>(step));
    const LossResult<S> loss = loss_and_grads(b, params, graph, grads, dropout, &rng);
    std::vector<const Matrix<S> *> grad_ptrs;
    for (Matrix<S> *g : grads.tensor_ptrs()) grad_ptrs.push_back(g);
    adam_step(params.tensor_ptrs(), grad_ptrs, optimizer);

    summary.steps_run = step;
    summary.final_train_loss = static_cast<double>(loss.loss);

    const bool stop = should_stop && should_stop(step, summary.final_train_loss, params);
    const bool last = step == config.steps || stop;
    const bool eval_now = step % config.eval_every == 0 || last;
    double metric = std::numeric_limits<double>::quiet_NaN();
    if (eval_now) {
      metric = valid_examples.empty()
                   ? evaluate_cls_accuracy(params, graph, train_examples)
                   : evaluate_cls_accuracy(params, graph, valid_examples);
      if (metric > best_acc) {
        best_acc = metric;
        summary.best_eval_metric = metric;
        if (!checkpoint_path.empty()) {
          CheckpointMeta meta;
          meta.head = HeadKind::classifier;
          meta.config = config;
          meta.vocab_size = params.vocab_size;
          meta.n_outputs = params.n_outputs;
          meta.step = static_cast<std::uint64_t>(step);
          meta.best_metric = metric;
          save_checkpoint(checkpoint_path, params, meta, &optimizer);
        }
      }
    }
    if (step % config.log_every == 0 || last || eval_now)
      emitter.emit(step, summary.final_train_loss, metric);
    if (stop) break;
  }
  return summary;
}

/// Accuracy after prepending `shift` zero-embedding placeholders to every
/// sequence, for shift = 0..max_shift.
template <class S>
std::vector<std::pair<int, double>> shift_eval(const ModelParams<S> &params,
                                               const RunConfig &config,
                                               const std::vector<ClsExample> &examples,
                                               int max_shift) {
  if (params.head != HeadKind::classifier)
    throw ConfigError("shift_eval: checkpoint holds no classifier head");
  if (max_shift < 0) throw InvalidInputError("shift_eval: max_shift must be >= 0");
  const BpGraph graph = build_graph(config.n_max, config.k, Mode::bidirectional);
  std::vector<std::pair<int, double>> table;
  for (int shift = 0; shift <= max_shift; ++shift) {
    std::size_t correct = 0;
    for (const ClsExample &ex : examples) {
      if (ex.tokens.size() + static_cast<std::size_t>(shift) > config.n_max)
        throw DataError("shift_eval: shifted sequence exceeds n_max");
      std::vector<std::size_t> shifted(static_cast<std::size_t>(shift), kPadId);
      shifted.insert(shifted.end(), ex.tokens.begin(), ex.tokens.end());
      if (predict_class(params, graph, shifted) == ex.label) ++correct;
    }
    table.emplace_back(shift,
                       static_cast<double>(correct) / static_cast<double>(examples.size()));
  }
  return table;
}

/// Per-layer attention weights for one sequence, as JSON.
template <class S>
void export_trace_json(const BpGraph &graph, const ModelParams<S> &params,
                       const std::vector<std::size_t> &tokens, std::ostream &out) {
  const ForwardTape<S> tape = model_forward(tokens, params, graph);
  out << "{\n  \"layers\": [\n";
  for (std::size_t l = 0; l < tape.layers.size(); ++l) {
    const AttentionTrace<S> &trace = tape.layers[l].trace;
    out << "    {\"layer\": " << l << ", \"edges\": [\n";
    for (std::size_t dst = 0; dst < graph.num_nodes(); ++dst) {
      for (std::size_t e = graph.offsets[dst]; e < graph.offsets[dst + 1]; ++e) {
        out << "      {\"edge\": " << e << ", \"src\": " << graph.src[e]
            << ", \"dst\": " << dst << ", \"relation\": \""
            << graph.relation_at(e).to_string() << "\", \"weights\": [";
        for (std::size_t h = 0; h < trace.weights.cols; ++h) {
          out << format_metric(static_cast<double>(trace.weights(e, h)));
          if (h + 1 < trace.weights.cols) out << ", ";
        }
        out << "]}" << (e + 1 < graph.num_edges() ? "," : "") << "\n";
      }
    }
    out << "    ]}" << (l + 1 < tape.layers.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
}

}  // namespace bpt

#endif  // BPT_TRAIN_HPP
