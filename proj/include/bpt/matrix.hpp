#ifndef BPT_MATRIX_HPP
#define BPT_MATRIX_HPP

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <random>
#include <vector>

#include "bpt/errors.hpp"

namespace bpt {

/// Dense row-major matrix. Scalar is double in verification mode and
/// float in training mode.
template <class S>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<S> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, S(0)) {}

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  S &operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const S &operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  S *row(std::size_t r) { return data.data() + r * cols; }
  const S *row(std::size_t r) const { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  void set_zero() { std::fill(data.begin(), data.end(), S(0)); }

  bool same_shape(const Matrix &other) const {
    return rows == other.rows && cols == other.cols;
  }

  bool all_finite() const {
    for (const S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  friend bool operator==(const Matrix &a, const Matrix &b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

template <class S>
Matrix<S> matmul(const Matrix<S> &a, const Matrix<S> &b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions disagree");
  Matrix<S> c(a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.rows); ++i) {
    S *ci = c.row(static_cast<std::size_t>(i));
    const S *ai = a.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.cols; ++k) {
      const S aik = ai[k];
      const S *bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

/// a * b^T
template <class S>
Matrix<S> matmul_nt(const Matrix<S> &a, const Matrix<S> &b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: inner dimensions disagree");
  Matrix<S> c(a.rows, b.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.rows); ++i) {
    const S *ai = a.row(static_cast<std::size_t>(i));
    S *ci = c.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < b.rows; ++j) {
      const S *bj = b.row(j);
      S acc = S(0);
      for (std::size_t k = 0; k < a.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  return c;
}

/// a^T * b
template <class S>
Matrix<S> matmul_tn(const Matrix<S> &a, const Matrix<S> &b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: inner dimensions disagree");
  Matrix<S> c(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const S *ai = a.row(i);
    const S *bi = b.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const S aik = ai[k];
      S *ck = c.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ck[j] += aik * bi[j];
    }
  }
  return c;
}

/// Gradients of c = a * b: da = dc * b^T, db = a^T * dc.
template <class S>
std::pair<Matrix<S>, Matrix<S>> matmul_grad(const Matrix<S> &a, const Matrix<S> &b,
                                            const Matrix<S> &dc) {
  if (dc.rows != a.rows || dc.cols != b.cols)
    throw ShapeError("matmul_grad: upstream gradient shape mismatch");
  return {matmul_nt(dc, b), matmul_tn(a, dc)};
}

template <class S>
void add_inplace(Matrix<S> &a, const Matrix<S> &b) {
  if (!a.same_shape(b)) throw ShapeError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

template <class S>
void axpy_inplace(Matrix<S> &a, S alpha, const Matrix<S> &b) {
  if (!a.same_shape(b)) throw ShapeError("axpy_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += alpha * b.data[i];
}

/// Adds a 1 x cols bias row to every row.
template <class S>
void add_bias_inplace(Matrix<S> &a, const Matrix<S> &bias) {
  if (bias.rows != 1 || bias.cols != a.cols)
    throw ShapeError("add_bias_inplace: bias shape mismatch");
  for (std::size_t r = 0; r < a.rows; ++r) {
    S *row = a.row(r);
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += bias.data[c];
  }
}

/// Uniform draw in [0, 1) from the top 53 bits; identical on every
/// platform for a given engine state, unlike std::uniform_real_distribution.
inline double canonical_uniform(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Scaled-uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <class S>
void glorot_uniform_fill(Matrix<S> &m, std::mt19937_64 &rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
  for (S &v : m.data)
    v = static_cast<S>((2.0 * canonical_uniform(rng) - 1.0) * bound);
}

}  // namespace bpt

#endif  // BPT_MATRIX_HPP
