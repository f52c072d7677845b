#ifndef BPT_FINITE_DIFF_HPP
#define BPT_FINITE_DIFF_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/matrix.hpp"

namespace bpt {

/// Central-difference gradient of a scalar function, one coordinate at a
/// time: (f(x + h e_i) - f(x - h e_i)) / 2h. Verification oracle; keep it
/// free of any analytic-gradient code.
template <class S>
std::vector<S> finite_diff(const std::function<S(const std::vector<S> &)> &f,
                           std::vector<S> x, S h) {
  if (!(h > S(0))) throw InvalidInputError("finite_diff: h must be positive");
  std::vector<S> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const S saved = x[i];
    x[i] = saved + h;
    const S up = f(x);
    x[i] = saved - h;
    const S down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (S(2) * h);
  }
  return grad;
}

/// Central differences over a matrix perturbed in place.
template <class S>
Matrix<S> finite_diff_matrix(const std::function<S()> &f, Matrix<S> &x, S h) {
  if (!(h > S(0))) throw InvalidInputError("finite_diff: h must be positive");
  Matrix<S> grad(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const S saved = x.data[i];
    x.data[i] = saved + h;
    const S up = f();
    x.data[i] = saved - h;
    const S down = f();
    x.data[i] = saved;
    grad.data[i] = (up - down) / (S(2) * h);
  }
  return grad;
}

/// || a - b ||_2 / max(||a||_2, ||b||_2), zero when both vanish.
template <class S>
double relative_error(const std::vector<S> &a, const std::vector<S> &b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    diff += d * d;
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return std::sqrt(diff) == 0.0 ? 0.0 : 1.0;
  return std::sqrt(diff) / denom;
}

template <class S>
double relative_error(const Matrix<S> &a, const Matrix<S> &b) {
  return relative_error(a.data, b.data);
}

}  // namespace bpt

#endif  // BPT_FINITE_DIFF_HPP
