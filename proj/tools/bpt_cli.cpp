// Command-line harness: graph export, training, evaluation, shift
// sensitivity, gradient verification, and throughput benchmarking.

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpt/bench.hpp"
#include "bpt/checkpoint.hpp"
#include "bpt/config.hpp"
#include "bpt/corpus.hpp"
#include "bpt/gradcheck.hpp"
#include "bpt/graph.hpp"
#include "bpt/graph_io.hpp"
#include "bpt/train.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t n_max = 0;
  std::int64_t k = 0;
  std::string mode;
  std::string precision;
  long steps = -1;
  long batch_size = -1;
};

void add_common(CLI::App *cmd, CommonFlags &flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file (key = value lines)");
  cmd->add_option("--seed", flags.seed, "seed for every random draw")
      ->each([&](const std::string &) { flags.seed_set = true; });
  cmd->add_option("--n", flags.n_max, "context length (power of two)");
  cmd->add_option("--k", flags.k, "connection density per level and side");
  cmd->add_option("--mode", flags.mode, "graph mode: causal or bi[directional]");
  cmd->add_option("--precision", flags.precision, "verify (64-bit, exact) or fast (32-bit)")
      ->check(CLI::IsMember({"verify", "fast"}));
  cmd->add_option("--steps", flags.steps, "optimizer steps");
  cmd->add_option("--batch-size", flags.batch_size, "sequences per step");
}

bpt::RunConfig resolve_config(const CommonFlags &flags, bpt::Mode default_mode) {
  bpt::RunConfig config;
  std::set<std::string> seen;
  if (!flags.config_path.empty()) config = bpt::load_config(flags.config_path, &seen);
  // The subcommand's natural mode applies unless the file or a flag says
  // otherwise.
  if (!seen.count("mode")) config.mode = default_mode;
  if (flags.seed_set) config.seed = flags.seed;
  if (flags.n_max != 0) config.n_max = flags.n_max;
  if (flags.k != 0) config.k = flags.k;
  if (!flags.mode.empty()) {
    if (flags.mode == "causal") config.mode = bpt::Mode::causal;
    else if (flags.mode == "bi" || flags.mode == "bidirectional")
      config.mode = bpt::Mode::bidirectional;
    else throw bpt::UsageError("unknown mode: " + flags.mode);
  }
  if (!flags.precision.empty())
    config.precision = flags.precision == "verify" ? bpt::Precision::verify
                                                   : bpt::Precision::fast;
  if (flags.steps >= 0) config.steps = flags.steps;
  if (flags.batch_size > 0) config.batch_size = flags.batch_size;
  config.validate();
  return config;
}

std::ofstream open_output(const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bpt::IoError("cannot open output file: " + path);
  return out;
}

int cmd_graph(std::size_t n, std::int64_t k, const std::string &mode,
              const std::string &format, const std::string &out_path) {
  bpt::Mode m;
  if (mode == "causal") m = bpt::Mode::causal;
  else if (mode == "bi" || mode == "bidirectional") m = bpt::Mode::bidirectional;
  else throw bpt::UsageError("unknown mode: " + mode);
  const bpt::BpGraph graph = bpt::build_graph(n, k, m);
  if (out_path.empty()) {
    bpt::export_graph(graph, format, std::cout);
  } else {
    auto out = open_output(out_path);
    bpt::export_graph(graph, format, out);
  }
  return 0;
}

template <class S>
int run_train_lm(const bpt::RunConfig &config, const std::string &data,
                 const std::string &out_ckpt, const std::string &resume) {
  const bpt::LmCorpus corpus = bpt::LmCorpus::from_file(data);
  const bpt::TrainSummary summary =
      bpt::train_lm<S>(corpus, config, std::cout, out_ckpt, resume);
  std::cerr << "train-lm: " << summary.steps_run << " steps, final train loss "
            << summary.final_train_loss << " nats";
  if (!std::isnan(summary.best_eval_metric))
    std::cerr << ", best valid bpc " << summary.best_eval_metric;
  std::cerr << "\n";
  return 0;
}

template <class S>
int run_train_cls(const bpt::RunConfig &config, const std::string &data,
                  const std::string &out_ckpt) {
  const bpt::ClsCorpus corpus = bpt::ClsCorpus::from_file(data, config.n_max);
  const bpt::TrainSummary summary = bpt::train_cls<S>(corpus, config, std::cout, out_ckpt);
  std::cerr << "train-cls: " << summary.steps_run << " steps, final train loss "
            << summary.final_train_loss << " nats";
  if (!std::isnan(summary.best_eval_metric))
    std::cerr << ", best valid accuracy " << summary.best_eval_metric;
  std::cerr << "\n";
  return 0;
}

template <class S>
int run_eval(const std::string &ckpt, const std::string &data, const std::string &split_name,
             const std::string &trace_path, std::size_t trace_sample) {
  bpt::CheckpointMeta meta;
  const bpt::ModelParams<S> params = bpt::load_checkpoint<S>(ckpt, meta);
  const bpt::Split split = bpt::parse_split(split_name);
  const bpt::RunConfig &config = meta.config;

  if (params.head == bpt::HeadKind::lm) {
    const bpt::LmCorpus corpus = bpt::LmCorpus::from_file(data);
    if (corpus.vocab().size() != params.vocab_size)
      throw bpt::DataError("eval: corpus vocabulary does not match the checkpoint");
    const bpt::BpGraph graph = bpt::build_graph(config.n_max, config.k, bpt::Mode::causal);
    const auto chunks = bpt::chunk_text(corpus.split(split), corpus.vocab(), config.n_max);
    const double nats = bpt::evaluate_lm_nats(params, graph, chunks);
    std::cout << split_name << "\tnats\t" << bpt::format_metric(nats) << "\n";
    std::cout << split_name << "\tbpc\t" << bpt::format_metric(bpt::nats_to_bpc(nats))
              << "\n";
    if (!trace_path.empty()) {
      if (trace_sample >= chunks.size())
        throw bpt::UsageError("eval: --trace-sample beyond the split");
      auto out = open_output(trace_path);
      bpt::export_trace_json(graph, params, chunks[trace_sample], out);
    }
  } else {
    const bpt::ClsCorpus corpus = bpt::ClsCorpus::from_file(data, config.n_max);
    if (corpus.vocab().size() != params.vocab_size)
      throw bpt::DataError("eval: corpus vocabulary does not match the checkpoint");
    const bpt::BpGraph graph =
        bpt::build_graph(config.n_max, config.k, bpt::Mode::bidirectional);
    const auto &examples = corpus.examples(split);
    const double acc = bpt::evaluate_cls_accuracy(params, graph, examples);
    std::cout << split_name << "\taccuracy\t" << bpt::format_metric(acc) << "\n";
    if (!trace_path.empty()) {
      if (trace_sample >= examples.size())
        throw bpt::UsageError("eval: --trace-sample beyond the split");
      auto out = open_output(trace_path);
      bpt::export_trace_json(graph, params, examples[trace_sample].tokens, out);
    }
  }
  return 0;
}

template <class S>
int run_shift_eval(const std::string &ckpt, const std::string &data, int max_shift,
                   const std::string &split_name) {
  bpt::CheckpointMeta meta;
  const bpt::ModelParams<S> params = bpt::load_checkpoint<S>(ckpt, meta);
  const bpt::ClsCorpus corpus = bpt::ClsCorpus::from_file(data, meta.config.n_max);
  if (corpus.vocab().size() != params.vocab_size)
    throw bpt::DataError("shift-eval: corpus vocabulary does not match the checkpoint");
  const auto table = bpt::shift_eval(params, meta.config,
                                     corpus.examples(bpt::parse_split(split_name)), max_shift);
  std::cout << "# shift\taccuracy\n";
  for (const auto &[shift, acc] : table)
    std::cout << shift << '\t' << bpt::format_metric(acc) << '\n';
  return 0;
}

int cmd_grad_check(std::uint64_t seed) {
  const bpt::GradCheckReport report = bpt::run_grad_checks(seed);
  double max_err = 0.0;
  for (const auto &entry : report.entries) {
    std::cout << (entry.passed() ? "ok   " : "FAIL ") << entry.name << "\trel_error="
              << bpt::format_metric(entry.rel_error) << "\ttol=" << entry.tolerance << "\n";
    max_err = std::max(max_err, entry.rel_error);
  }
  std::cout << "max relative error: " << bpt::format_metric(max_err) << "\n";
  std::cout << (report.passed() ? "grad-check: PASS\n" : "grad-check: FAIL\n");
  return report.passed() ? 0 : 1;
}

template <class S>
int cmd_bench(const bpt::RunConfig &config, const std::vector<std::size_t> &lengths,
              std::size_t budget) {
  const auto rows = bpt::run_bench<S>(config, lengths, budget);
  bpt::print_bench(rows, std::cout);
  return 0;
}

std::vector<std::size_t> parse_lengths(const std::string &csv) {
  std::vector<std::size_t> lengths;
  std::istringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    lengths.push_back(std::stoul(item));
  }
  if (lengths.empty()) throw bpt::UsageError("bench: no lengths given");
  return lengths;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Binary-partition sparse attention toolkit"};
  app.require_subcommand(1);

  // graph
  auto *graph_cmd = app.add_subcommand("graph", "build a graph and export it");
  std::size_t g_n = 0;
  std::int64_t g_k = 0;
  std::string g_mode = "bi", g_format = "json", g_out;
  graph_cmd->add_option("--n", g_n, "token count")->required();
  graph_cmd->add_option("--k", g_k, "connection density")->required();
  graph_cmd->add_option("--mode", g_mode, "causal or bi[directional]");
  graph_cmd->add_option("--format", g_format, "json or dot");
  graph_cmd->add_option("--out", g_out, "output file (default: standard output)");

  // train-lm
  auto *lm_cmd = app.add_subcommand("train-lm", "train a character language model");
  CommonFlags lm_flags;
  std::string lm_data, lm_out, lm_resume;
  add_common(lm_cmd, lm_flags);
  lm_cmd->add_option("--data", lm_data, "raw text corpus")->required();
  lm_cmd->add_option("--out", lm_out, "best-validation checkpoint path");
  lm_cmd->add_option("--resume", lm_resume, "checkpoint to continue from");

  // train-cls
  auto *cls_cmd = app.add_subcommand("train-cls", "train a sequence classifier");
  CommonFlags cls_flags;
  std::string cls_data, cls_out;
  add_common(cls_cmd, cls_flags);
  cls_cmd->add_option("--data", cls_data, "label<TAB>text lines")->required();
  cls_cmd->add_option("--out", cls_out, "best-validation checkpoint path");

  // eval
  auto *eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string e_ckpt, e_data, e_split = "test", e_trace;
  std::size_t e_trace_sample = 0;
  eval_cmd->add_option("--ckpt", e_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", e_data, "corpus path")->required();
  eval_cmd->add_option("--split", e_split, "train | valid | test");
  eval_cmd->add_option("--dump-trace", e_trace, "write attention weights (json) here");
  eval_cmd->add_option("--trace-sample", e_trace_sample, "sample index for --dump-trace");

  // shift-eval
  auto *shift_cmd = app.add_subcommand("shift-eval",
                                       "classifier accuracy under front placeholders");
  std::string s_ckpt, s_data, s_split = "test";
  int s_shift = 7;
  shift_cmd->add_option("--ckpt", s_ckpt, "classifier checkpoint")->required();
  shift_cmd->add_option("--data", s_data, "label<TAB>text lines")->required();
  shift_cmd->add_option("--shift", s_shift, "largest shift to evaluate");
  shift_cmd->add_option("--split", s_split, "train | valid | test");

  // grad-check
  auto *grad_cmd = app.add_subcommand("grad-check",
                                      "verify analytic gradients against finite differences");
  std::uint64_t gc_seed = 1;
  grad_cmd->add_option("--seed", gc_seed, "seed for the random instances");

  // bench
  auto *bench_cmd = app.add_subcommand("bench", "sparse vs dense forward throughput");
  CommonFlags bench_flags;
  std::string b_lengths = "64,128,256,512";
  std::size_t b_budget = 8192;
  add_common(bench_cmd, bench_flags);
  bench_cmd->add_option("--lengths", b_lengths, "comma-separated powers of two");
  bench_cmd->add_option("--budget", b_budget, "tokens processed per measurement");

  try {
    app.parse(argc, argv);

    if (graph_cmd->parsed()) return cmd_graph(g_n, g_k, g_mode, g_format, g_out);

    if (lm_cmd->parsed()) {
      const bpt::RunConfig config = resolve_config(lm_flags, bpt::Mode::causal);
      return config.precision == bpt::Precision::verify
                 ? run_train_lm<double>(config, lm_data, lm_out, lm_resume)
                 : run_train_lm<float>(config, lm_data, lm_out, lm_resume);
    }
    if (cls_cmd->parsed()) {
      const bpt::RunConfig config = resolve_config(cls_flags, bpt::Mode::bidirectional);
      return config.precision == bpt::Precision::verify
                 ? run_train_cls<double>(config, cls_data, cls_out)
                 : run_train_cls<float>(config, cls_data, cls_out);
    }
    if (eval_cmd->parsed()) {
      const auto meta = bpt::peek_checkpoint(e_ckpt);
      return meta.scalar_width == 8
                 ? run_eval<double>(e_ckpt, e_data, e_split, e_trace, e_trace_sample)
                 : run_eval<float>(e_ckpt, e_data, e_split, e_trace, e_trace_sample);
    }
    if (shift_cmd->parsed()) {
      const auto meta = bpt::peek_checkpoint(s_ckpt);
      return meta.scalar_width == 8 ? run_shift_eval<double>(s_ckpt, s_data, s_shift, s_split)
                                    : run_shift_eval<float>(s_ckpt, s_data, s_shift, s_split);
    }
    if (grad_cmd->parsed()) return cmd_grad_check(gc_seed);
    if (bench_cmd->parsed()) {
      const bpt::RunConfig config = resolve_config(bench_flags, bpt::Mode::causal);
      const auto lengths = parse_lengths(b_lengths);
      return config.precision == bpt::Precision::verify
                 ? cmd_bench<double>(config, lengths, b_budget)
                 : cmd_bench<float>(config, lengths, b_budget);
    }
    return 0;
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const bpt::UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const bpt::Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
