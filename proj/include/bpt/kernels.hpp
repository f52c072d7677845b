#ifndef BPT_KERNELS_HPP
#define BPT_KERNELS_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/matrix.hpp"

namespace bpt {

inline constexpr double kLayerNormEps = 1e-5;

/// Flat value list cut into per-destination segments by monotone offsets.
template <class S>
struct SegmentVector {
  std::vector<S> values;
  std::vector<std::size_t> offsets;  // starts at 0, ends at values.size()

  std::size_t num_segments() const { return offsets.empty() ? 0 : offsets.size() - 1; }

  void validate() const {
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != values.size())
      throw InvalidInputError("segment vector: bad offsets");
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      if (offsets[s + 1] < offsets[s])
        throw InvalidInputError("segment vector: offsets not monotone");
      if (offsets[s + 1] == offsets[s])
        throw InvalidInputError("segment vector: empty segment");
    }
  }
};

/// Max-subtracted softmax over a strided span, in place. Returns the
/// log-sum-exp of the span (max + log of the normalizer).
template <class S>
S softmax_span(S *x, std::size_t count, std::size_t stride = 1) {
  S max_v = x[0];
  for (std::size_t i = 1; i < count; ++i)
    if (x[i * stride] > max_v) max_v = x[i * stride];
  S sum = S(0);
  for (std::size_t i = 0; i < count; ++i) {
    x[i * stride] = std::exp(x[i * stride] - max_v);
    sum += x[i * stride];
  }
  const S inv = S(1) / sum;
  for (std::size_t i = 0; i < count; ++i) x[i * stride] *= inv;
  return max_v + std::log(sum);
}

/// d(softmax)/d(logits) applied to an upstream gradient, per span:
/// dx_i = y_i * (dy_i - sum_j y_j dy_j).
template <class S>
void softmax_span_backward(const S *y, const S *dy, S *dx, std::size_t count,
                           std::size_t stride = 1) {
  S dot = S(0);
  for (std::size_t i = 0; i < count; ++i) dot += y[i * stride] * dy[i * stride];
  for (std::size_t i = 0; i < count; ++i)
    dx[i * stride] = y[i * stride] * (dy[i * stride] - dot);
}

template <class S>
SegmentVector<S> segment_softmax(const SegmentVector<S> &logits) {
  logits.validate();
  SegmentVector<S> out = logits;
  for (std::size_t s = 0; s + 1 < out.offsets.size(); ++s)
    softmax_span(out.values.data() + out.offsets[s], out.offsets[s + 1] - out.offsets[s]);
  return out;
}

template <class S>
SegmentVector<S> segment_softmax_backward(const SegmentVector<S> &y,
                                          const SegmentVector<S> &dy) {
  y.validate();
  if (y.offsets != dy.offsets)
    throw InvalidInputError("segment_softmax_backward: segment mismatch");
  SegmentVector<S> dx = y;
  for (std::size_t s = 0; s + 1 < y.offsets.size(); ++s) {
    const std::size_t b = y.offsets[s];
    softmax_span_backward(y.values.data() + b, dy.values.data() + b,
                          dx.values.data() + b, y.offsets[s + 1] - b);
  }
  return dx;
}

template <class S>
struct LayerNormCache {
  std::vector<S> mean;
  std::vector<S> inv_std;
};

/// Per-row standardization followed by the affine map gain * xhat + bias.
/// Epsilon sits inside the square root.
template <class S>
Matrix<S> layer_norm_forward(const Matrix<S> &x, const Matrix<S> &gain,
                             const Matrix<S> &bias, LayerNormCache<S> *cache = nullptr) {
  if (x.cols == 0) throw ShapeError("layer_norm: feature width must be >= 1");
  if (gain.rows != 1 || gain.cols != x.cols || bias.rows != 1 || bias.cols != x.cols)
    throw ShapeError("layer_norm: gain/bias shape mismatch");
  Matrix<S> y(x.rows, x.cols);
  if (cache != nullptr) {
    cache->mean.resize(x.rows);
    cache->inv_std.resize(x.rows);
  }
  const S inv_n = S(1) / static_cast<S>(x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const S *xr = x.row(r);
    S *yr = y.row(r);
    S mean = S(0);
    for (std::size_t c = 0; c < x.cols; ++c) mean += xr[c];
    mean *= inv_n;
    S var = S(0);
    for (std::size_t c = 0; c < x.cols; ++c) {
      const S d = xr[c] - mean;
      var += d * d;
    }
    var *= inv_n;
    const S inv_std = S(1) / std::sqrt(var + static_cast<S>(kLayerNormEps));
    for (std::size_t c = 0; c < x.cols; ++c)
      yr[c] = gain.data[c] * (xr[c] - mean) * inv_std + bias.data[c];
    if (cache != nullptr) {
      cache->mean[r] = mean;
      cache->inv_std[r] = inv_std;
    }
  }
  return y;
}

template <class S>
void layer_norm_backward(const Matrix<S> &x, const Matrix<S> &gain,
                         const LayerNormCache<S> &cache, const Matrix<S> &dy,
                         Matrix<S> &dx, Matrix<S> &dgain, Matrix<S> &dbias) {
  dx = Matrix<S>(x.rows, x.cols);
  const S inv_n = S(1) / static_cast<S>(x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const S *xr = x.row(r);
    const S *dyr = dy.row(r);
    S *dxr = dx.row(r);
    const S mean = cache.mean[r];
    const S inv_std = cache.inv_std[r];
    S sum_dxhat = S(0);
    S sum_dxhat_xhat = S(0);
    for (std::size_t c = 0; c < x.cols; ++c) {
      const S xhat = (xr[c] - mean) * inv_std;
      const S dxhat = dyr[c] * gain.data[c];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dgain.data[c] += dyr[c] * xhat;
      dbias.data[c] += dyr[c];
    }
    for (std::size_t c = 0; c < x.cols; ++c) {
      const S xhat = (xr[c] - mean) * inv_std;
      const S dxhat = dyr[c] * gain.data[c];
      dxr[c] = inv_std * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
    }
  }
}

template <class S>
struct FfnParams {
  Matrix<S> w1, b1;  // d x d_ff, 1 x d_ff
  Matrix<S> w2, b2;  // d_ff x d, 1 x d
};

template <class S>
struct FfnCache {
  Matrix<S> pre_act;  // x * w1 + b1, before the rectifier
};

/// Position-wise feed-forward: linear, max(0, .), linear.
template <class S>
Matrix<S> ffn_forward(const Matrix<S> &x, const FfnParams<S> &params,
                      FfnCache<S> *cache = nullptr) {
  Matrix<S> pre = matmul(x, params.w1);
  add_bias_inplace(pre, params.b1);
  Matrix<S> act = pre;
  for (S &v : act.data) v = v > S(0) ? v : S(0);
  Matrix<S> y = matmul(act, params.w2);
  add_bias_inplace(y, params.b2);
  if (cache != nullptr) cache->pre_act = std::move(pre);
  return y;
}

template <class S>
void ffn_backward(const Matrix<S> &x, const FfnParams<S> &params, const FfnCache<S> &cache,
                  const Matrix<S> &dy, Matrix<S> &dx, FfnParams<S> &dparams) {
  Matrix<S> act = cache.pre_act;
  for (S &v : act.data) v = v > S(0) ? v : S(0);
  for (std::size_t c = 0; c < dy.cols; ++c)
    for (std::size_t r = 0; r < dy.rows; ++r) dparams.b2.data[c] += dy(r, c);
  add_inplace(dparams.w2, matmul_tn(act, dy));
  Matrix<S> dact = matmul_nt(dy, params.w2);
  for (std::size_t i = 0; i < dact.size(); ++i)
    if (cache.pre_act.data[i] <= S(0)) dact.data[i] = S(0);
  for (std::size_t c = 0; c < dact.cols; ++c)
    for (std::size_t r = 0; r < dact.rows; ++r) dparams.b1.data[c] += dact(r, c);
  add_inplace(dparams.w1, matmul_tn(x, dact));
  dx = matmul_nt(dact, params.w1);
}

/// Mean negative log-likelihood in nats over rows where mask is true.
/// Row r's target is targets[r]; masked rows contribute nothing.
template <class S>
S cross_entropy(const Matrix<S> &logits, const std::vector<std::size_t> &targets,
                const std::vector<bool> &mask, std::size_t *out_count = nullptr) {
  if (targets.size() != logits.rows || mask.size() != logits.rows)
    throw ShapeError("cross_entropy: target/mask size mismatch");
  S total = S(0);
  std::size_t count = 0;
  std::vector<S> buf(logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    if (!mask[r]) continue;
    if (targets[r] >= logits.cols)
      throw InvalidInputError("cross_entropy: target id outside vocabulary");
    const S *row = logits.row(r);
    S max_v = row[0];
    for (std::size_t c = 1; c < logits.cols; ++c)
      if (row[c] > max_v) max_v = row[c];
    S sum = S(0);
    for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(row[c] - max_v);
    total += std::log(sum) - (row[targets[r]] - max_v);
    ++count;
  }
  if (count == 0) throw InvalidInputError("cross_entropy: every position is masked");
  if (out_count != nullptr) *out_count = count;
  return total / static_cast<S>(count);
}

/// Gradient of sum-of-NLL scaled by 1/denom. Passing the unmasked count
/// as denom gives the gradient of the mean; a batch-wide count lets
/// per-sequence contributions pool into one mean.
template <class S>
Matrix<S> cross_entropy_backward(const Matrix<S> &logits,
                                 const std::vector<std::size_t> &targets,
                                 const std::vector<bool> &mask, std::size_t denom) {
  Matrix<S> dlogits(logits.rows, logits.cols);
  const S scale = S(1) / static_cast<S>(denom);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    if (!mask[r]) continue;
    const S *row = logits.row(r);
    S *drow = dlogits.row(r);
    S max_v = row[0];
    for (std::size_t c = 1; c < logits.cols; ++c)
      if (row[c] > max_v) max_v = row[c];
    S sum = S(0);
    for (std::size_t c = 0; c < logits.cols; ++c) {
      drow[c] = std::exp(row[c] - max_v);
      sum += drow[c];
    }
    const S inv = S(1) / sum;
    for (std::size_t c = 0; c < logits.cols; ++c) drow[c] *= inv * scale;
    drow[targets[r]] -= scale;
  }
  return dlogits;
}

}  // namespace bpt

#endif  // BPT_KERNELS_HPP
