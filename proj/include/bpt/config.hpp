#ifndef BPT_CONFIG_HPP
#define BPT_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <string>

#include "bpt/errors.hpp"
#include "bpt/graph.hpp"

namespace bpt {

enum class Precision : std::uint8_t { verify = 0, fast = 1 };

inline std::string precision_name(Precision p) {
  return p == Precision::verify ? "verify" : "fast";
}

/// Desk-scale run settings. Parsed from flat `key = value` text with `#`
/// comments; every key has a default.
struct RunConfig {
  std::size_t n_max = 128;
  std::int64_t k = 4;
  int layers = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 256;
  Mode mode = Mode::causal;
  double dropout_input = 0.1;
  double dropout_hidden = 0.1;
  double dropout_attn = 0.1;
  double dropout_cls = 0.1;
  std::uint64_t seed = 1;
  Precision precision = Precision::fast;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  long warmup = 400;
  long steps = 2000;
  long batch_size = 8;
  long log_every = 50;
  long eval_every = 250;

  friend bool operator==(const RunConfig &, const RunConfig &) = default;

  void validate() const {
    if (n_max == 0 || (n_max & (n_max - 1)) != 0)
      throw ConfigError("n_max must be a power of two >= 1");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (d_model < 1 || heads < 1 || d_model % heads != 0)
      throw ConfigError("heads must divide d_model");
    if (d_ff < 1) throw ConfigError("d_ff must be >= 1");
    for (double p : {dropout_input, dropout_hidden, dropout_attn, dropout_cls})
      if (p < 0.0 || p >= 1.0) throw ConfigError("dropout rates must lie in [0, 1)");
    if (lr < 0.0) throw ConfigError("lr must be non-negative (0 freezes parameters)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0 || warmup < 0) throw ConfigError("steps/warmup must be >= 0");
    if (log_every < 1 || eval_every < 1)
      throw ConfigError("log_every/eval_every must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string &value, int line_no) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !(in >> std::ws).eof())
    throw ConfigError("config line " + std::to_string(line_no) + ": malformed value '" +
                      value + "'");
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return out.str();
}

}  // namespace detail

inline RunConfig parse_config(std::istream &in, std::set<std::string> *seen_keys = nullptr) {
  RunConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (seen_keys != nullptr) seen_keys->insert(key);

    if (key == "n_max") config.n_max = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "k") config.k = detail::parse_number<std::int64_t>(value, line_no);
    else if (key == "layers") config.layers = detail::parse_number<int>(value, line_no);
    else if (key == "d_model") config.d_model = detail::parse_number<int>(value, line_no);
    else if (key == "heads") config.heads = detail::parse_number<int>(value, line_no);
    else if (key == "d_ff") config.d_ff = detail::parse_number<int>(value, line_no);
    else if (key == "mode") {
      if (value == "causal") config.mode = Mode::causal;
      else if (value == "bidirectional" || value == "bi") config.mode = Mode::bidirectional;
      else throw ConfigError("config line " + std::to_string(line_no) + ": bad mode '" + value + "'");
    } else if (key == "dropout_input") config.dropout_input = detail::parse_number<double>(value, line_no);
    else if (key == "dropout_hidden") config.dropout_hidden = detail::parse_number<double>(value, line_no);
    else if (key == "dropout_attn") config.dropout_attn = detail::parse_number<double>(value, line_no);
    else if (key == "dropout_cls") config.dropout_cls = detail::parse_number<double>(value, line_no);
    else if (key == "seed") config.seed = detail::parse_number<std::uint64_t>(value, line_no);
    else if (key == "precision") {
      if (value == "verify") config.precision = Precision::verify;
      else if (value == "fast") config.precision = Precision::fast;
      else throw ConfigError("config line " + std::to_string(line_no) + ": bad precision '" + value + "'");
    } else if (key == "lr") config.lr = detail::parse_number<double>(value, line_no);
    else if (key == "beta1") config.beta1 = detail::parse_number<double>(value, line_no);
    else if (key == "beta2") config.beta2 = detail::parse_number<double>(value, line_no);
    else if (key == "adam_eps") config.adam_eps = detail::parse_number<double>(value, line_no);
    else if (key == "warmup") config.warmup = detail::parse_number<long>(value, line_no);
    else if (key == "steps") config.steps = detail::parse_number<long>(value, line_no);
    else if (key == "batch_size") config.batch_size = detail::parse_number<long>(value, line_no);
    else if (key == "log_every") config.log_every = detail::parse_number<long>(value, line_no);
    else if (key == "eval_every") config.eval_every = detail::parse_number<long>(value, line_no);
    else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  config.validate();
  return config;
}

inline RunConfig load_config(const std::string &path, std::set<std::string> *seen_keys = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_config(in, seen_keys);
}

inline std::string serialize_config(const RunConfig &c) {
  std::ostringstream out;
  out << "n_max = " << c.n_max << "\n";
  out << "k = " << c.k << "\n";
  out << "layers = " << c.layers << "\n";
  out << "d_model = " << c.d_model << "\n";
  out << "heads = " << c.heads << "\n";
  out << "d_ff = " << c.d_ff << "\n";
  out << "mode = " << mode_name(c.mode) << "\n";
  out << "dropout_input = " << detail::format_double(c.dropout_input) << "\n";
  out << "dropout_hidden = " << detail::format_double(c.dropout_hidden) << "\n";
  out << "dropout_attn = " << detail::format_double(c.dropout_attn) << "\n";
  out << "dropout_cls = " << detail::format_double(c.dropout_cls) << "\n";
  out << "seed = " << c.seed << "\n";
  out << "precision = " << precision_name(c.precision) << "\n";
  out << "lr = " << detail::format_double(c.lr) << "\n";
  out << "beta1 = " << detail::format_double(c.beta1) << "\n";
  out << "beta2 = " << detail::format_double(c.beta2) << "\n";
  out << "adam_eps = " << detail::format_double(c.adam_eps) << "\n";
  out << "warmup = " << c.warmup << "\n";
  out << "steps = " << c.steps << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "log_every = " << c.log_every << "\n";
  out << "eval_every = " << c.eval_every << "\n";
  return out.str();
}

}  // namespace bpt

#endif  // BPT_CONFIG_HPP
