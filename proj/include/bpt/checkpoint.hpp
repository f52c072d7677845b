#ifndef BPT_CHECKPOINT_HPP
#define BPT_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bpt/config.hpp"
#include "bpt/errors.hpp"
#include "bpt/model.hpp"
#include "bpt/optim.hpp"

// Versioned binary checkpoint: fixed header, serialized run config, then
// raw little-endian tensor payloads in the canonical parameter order,
// optionally followed by optimizer moments. Equal parameters always
// produce equal bytes.

namespace bpt {

inline constexpr char kCheckpointMagic[8] = {'B', 'P', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint8_t scalar_width = 8;  // bytes per value: 4 = float, 8 = double
  HeadKind head = HeadKind::lm;
  RunConfig config;
  std::uint64_t vocab_size = 0;
  std::uint64_t n_outputs = 0;
  std::uint64_t step = 0;
  double best_metric = 0.0;
  bool has_optimizer = false;
};

namespace detail {

template <class T>
void write_pod(std::ostream &out, const T &value) {
  out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream &in) {
  T value{};
  in.read(reinterpret_cast<char *>(&value), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
  return value;
}

template <class S>
void write_tensor(std::ostream &out, const Matrix<S> &m) {
  write_pod<std::uint64_t>(out, m.rows);
  write_pod<std::uint64_t>(out, m.cols);
  out.write(reinterpret_cast<const char *>(m.data.data()),
            static_cast<std::streamsize>(m.size() * sizeof(S)));
}

template <class S>
void read_tensor(std::istream &in, Matrix<S> &m) {
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  if (m.rows != rows || m.cols != cols)
    throw DataError("checkpoint: tensor shape mismatch");
  in.read(reinterpret_cast<char *>(m.data.data()),
          static_cast<std::streamsize>(m.size() * sizeof(S)));
  if (!in) throw IoError("checkpoint: truncated tensor payload");
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string &path, const ModelParams<S> &params,
                     const CheckpointMeta &meta, const AdamState<S> *optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot open for writing: " + path);

  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
  detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(sizeof(S)));
  detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(params.head));
  detail::write_pod<std::uint8_t>(out, optimizer != nullptr ? 1 : 0);
  detail::write_pod<std::uint8_t>(out, 0);  // reserved
  detail::write_pod<std::uint64_t>(out, params.vocab_size);
  detail::write_pod<std::uint64_t>(out, params.n_outputs);
  detail::write_pod<std::uint64_t>(out, meta.step);
  detail::write_pod<double>(out, meta.best_metric);

  const std::string config_text = serialize_config(meta.config);
  detail::write_pod<std::uint64_t>(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

  params.for_each_tensor(
      [&](const std::string &, const Matrix<S> &m) { detail::write_tensor(out, m); });

  if (optimizer != nullptr) {
    detail::write_pod<std::int64_t>(out, optimizer->step);
    for (const Matrix<S> &m : optimizer->m) detail::write_tensor(out, m);
    for (const Matrix<S> &v : optimizer->v) detail::write_tensor(out, v);
  }
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

/// Header only; tells the caller which scalar width to load with.
inline CheckpointMeta peek_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint: bad magic; not a checkpoint file");
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  CheckpointMeta meta;
  meta.scalar_width = detail::read_pod<std::uint8_t>(in);
  meta.head = static_cast<HeadKind>(detail::read_pod<std::uint8_t>(in));
  meta.has_optimizer = detail::read_pod<std::uint8_t>(in) != 0;
  detail::read_pod<std::uint8_t>(in);
  meta.vocab_size = detail::read_pod<std::uint64_t>(in);
  meta.n_outputs = detail::read_pod<std::uint64_t>(in);
  meta.step = detail::read_pod<std::uint64_t>(in);
  meta.best_metric = detail::read_pod<double>(in);
  const auto config_len = detail::read_pod<std::uint64_t>(in);
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), static_cast<std::streamsize>(config_len));
  if (!in) throw IoError("checkpoint: truncated config block");
  std::istringstream config_in(config_text);
  meta.config = parse_config(config_in);
  return meta;
}

/// Full load. The scalar type must match the stored width; call
/// peek_checkpoint first to dispatch.
template <class S>
ModelParams<S> load_checkpoint(const std::string &path, CheckpointMeta &meta,
                               AdamState<S> *optimizer = nullptr) {
  meta = peek_checkpoint(path);
  if (meta.scalar_width != sizeof(S))
    throw DataError("checkpoint: stored scalar width " +
                    std::to_string(meta.scalar_width) + " does not match the loader");

  ModelParams<S> params = init_params<S>(meta.config, meta.vocab_size, meta.n_outputs,
                                         meta.head, /*seed=*/0);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open: " + path);
  in.seekg(8 + 4 + 4 + 8 + 8 + 8 + 8, std::ios::beg);
  const auto config_len = detail::read_pod<std::uint64_t>(in);
  in.seekg(static_cast<std::streamoff>(config_len), std::ios::cur);

  params.for_each_tensor(
      [&](const std::string &, Matrix<S> &m) { detail::read_tensor(in, m); });

  if (optimizer != nullptr) {
    if (!meta.has_optimizer)
      throw DataError("checkpoint: no optimizer state stored: " + path);
    AdamConfig adam;
    adam.lr = meta.config.lr;
    adam.beta1 = meta.config.beta1;
    adam.beta2 = meta.config.beta2;
    adam.eps = meta.config.adam_eps;
    adam.warmup_steps = meta.config.warmup;
    *optimizer = AdamState<S>::init(adam, params.tensor_ptrs());
    optimizer->step = detail::read_pod<std::int64_t>(in);
    for (Matrix<S> &m : optimizer->m) detail::read_tensor(in, m);
    for (Matrix<S> &v : optimizer->v) detail::read_tensor(in, v);
  }
  return params;
}

}  // namespace bpt

#endif  // BPT_CHECKPOINT_HPP
