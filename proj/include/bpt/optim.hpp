#ifndef BPT_OPTIM_HPP
#define BPT_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "bpt/errors.hpp"
#include "bpt/matrix.hpp"

namespace bpt {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long warmup_steps = 400;  // linear warmup; 0 disables
};

/// First/second moment accumulators, one per parameter tensor, in the
/// same order the parameter set presents them.
template <class S>
struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Matrix<S>> m;
  std::vector<Matrix<S>> v;

  static AdamState init(const AdamConfig &config, const std::vector<Matrix<S> *> &params) {
    AdamState state;
    state.config = config;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Matrix<S> *p : params) {
      state.m.emplace_back(p->rows, p->cols);
      state.v.emplace_back(p->rows, p->cols);
    }
    return state;
  }

  double current_lr() const {
    double lr = config.lr;
    if (config.warmup_steps > 0 && step < config.warmup_steps)
      lr *= static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    return lr;
  }
};

/// One bias-corrected adaptive-moment update over every tensor pair.
/// Throws TrainingError on non-finite gradients (surfaced to the caller,
/// which owns the abort policy).
template <class S>
void adam_step(const std::vector<Matrix<S> *> &params,
               const std::vector<const Matrix<S> *> &grads, AdamState<S> &state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient count mismatch");
  state.step += 1;
  const double lr = state.current_lr();
  const double b1 = state.config.beta1;
  const double b2 = state.config.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix<S> &p = *params[t];
    const Matrix<S> &g = *grads[t];
    if (!p.same_shape(g) || !p.same_shape(state.m[t]))
      throw ShapeError("adam_step: tensor shape mismatch");
    Matrix<S> &m = state.m[t];
    Matrix<S> &v = state.v[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      if (!std::isfinite(gi)) throw TrainingError("adam_step: non-finite gradient");
      const double mi = b1 * static_cast<double>(m.data[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v.data[i]) + (1.0 - b2) * gi * gi;
      m.data[i] = static_cast<S>(mi);
      v.data[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.data[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + state.config.eps));
    }
  }
}

}  // namespace bpt

#endif  // BPT_OPTIM_HPP
