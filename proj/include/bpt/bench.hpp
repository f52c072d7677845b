#ifndef BPT_BENCH_HPP
#define BPT_BENCH_HPP

#include <chrono>
#include <new>
#include <ostream>
#include <vector>

#include "bpt/config.hpp"
#include "bpt/graph.hpp"
#include "bpt/model.hpp"
#include "bpt/train.hpp"

namespace bpt {

struct BenchRow {
  std::size_t length = 0;
  std::size_t edges = 0;         // sparse graph edges
  std::size_t dense_equiv = 0;   // n^2 token-token connections
  double sparse_tokens_per_s = 0.0;
  double dense_tokens_per_s = 0.0;
  double sparse_seconds = 0.0;
  double dense_seconds = 0.0;
  bool available = false;
};

namespace bench_detail {

template <class Fn>
double time_seconds(std::size_t reps, const Fn &fn) {
  fn();  // warm caches and allocators once
  const auto begin = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < reps; ++r) fn();
  const auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(end - begin).count();
}

}  // namespace bench_detail

/// Forward-pass throughput of the sparse stack against the dense token
/// stack at a fixed token budget per measurement. A length that exhausts
/// memory is reported unavailable and the sweep continues.
template <class S>
std::vector<BenchRow> run_bench(const RunConfig &config,
                                const std::vector<std::size_t> &lengths,
                                std::size_t token_budget) {
  std::vector<BenchRow> rows;
  const std::size_t vocab = 64 + kNumReservedIds;
  for (const std::size_t length : lengths) {
    BenchRow row;
    row.length = length;
    row.dense_equiv = length * length;
    try {
      if (length == 0 || (length & (length - 1)) != 0)
        throw InvalidInputError("bench: lengths must be powers of two");
      RunConfig local = config;
      local.n_max = length;
      const BpGraph graph = build_graph(length, config.k, config.mode);
      row.edges = graph.num_edges();

      const ModelParams<S> params =
          init_params<S>(local, vocab, vocab, HeadKind::lm, config.seed);
      std::mt19937_64 rng = derive_rng(config.seed, 0xBEu, length);
      std::vector<std::size_t> tokens(length);
      for (std::size_t &t : tokens)
        t = kNumReservedIds + static_cast<std::size_t>(canonical_uniform(rng) * 64);

      const std::size_t reps = std::max<std::size_t>(1, token_budget / length);
      row.sparse_seconds = bench_detail::time_seconds(reps, [&] {
        model_forward(tokens, params, graph);
      });
      row.dense_seconds = bench_detail::time_seconds(reps, [&] {
        dense_reference_forward(tokens, params);
      });
      const double tokens_done = static_cast<double>(reps * length);
      row.sparse_tokens_per_s = tokens_done / row.sparse_seconds;
      row.dense_tokens_per_s = tokens_done / row.dense_seconds;
      row.available = true;
    } catch (const std::bad_alloc &) {
      row.available = false;
    }
    rows.push_back(row);
  }
  return rows;
}

inline void print_bench(const std::vector<BenchRow> &rows, std::ostream &out) {
  out << "# length\tedges\tdense_n2\tsparse_tok_s\tdense_tok_s\n";
  for (const BenchRow &row : rows) {
    out << row.length << '\t';
    if (row.available) {
      out << row.edges << '\t' << row.dense_equiv << '\t'
          << format_metric(row.sparse_tokens_per_s) << '\t'
          << format_metric(row.dense_tokens_per_s) << '\n';
    } else {
      out << "NA\tNA\tNA\tNA\n";
    }
  }
}

}  // namespace bpt

#endif  // BPT_BENCH_HPP
