#pragma once

#include "hsgs/gaussian.hpp"

// Adam with bias correction and per-parameter-group learning rates, plus the
// post-step projections that keep the representation sane: quaternion
// renormalization and log-scale clamping.

namespace hsgs {

struct AdamParams {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;
  double lr_mu = 1.6e-4;  // callers scale this by scene extent
  double lr_q = 1e-3;
  double lr_s = 5e-3;
  double lr_o = 5e-2;
  double lr_sh = 2.5e-3;
};

struct AdamState {
  int64_t step = 0;
  std::vector<GaussianGrad> m, v;
  AdamParams params;

  explicit AdamState(size_t n = 0, AdamParams p = {}) : m(n), v(n), params(p) {}
};

inline void adam_step(GaussianCloud& cloud, const GradientBuffer& grads, AdamState& state) {
  require(grads.size() == cloud.size() && state.m.size() == cloud.size() &&
              state.v.size() == cloud.size(),
          "adam_step: shape mismatch");
  const AdamParams& p = state.params;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));

  auto update = [&](double& x, double g, double& m, double& v, double lr) {
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g * g;
    x -= lr * (m / bc1) / (std::sqrt(v / bc2) + p.eps);
  };

  for (size_t i = 0; i < cloud.size(); ++i) {
    Gaussian& g = cloud.gaussians[i];
    const GaussianGrad& d = grads.grads[i];
    GaussianGrad& m = state.m[i];
    GaussianGrad& v = state.v[i];

    for (int k = 0; k < 3; ++k) update(g.mu[k], d.mu[k], m.mu[k], v.mu[k], p.lr_mu);
    for (int k = 0; k < 4; ++k) update(g.q[k], d.q[k], m.q[k], v.q[k], p.lr_q);
    for (int k = 0; k < 3; ++k) update(g.s[k], d.s[k], m.s[k], v.s[k], p.lr_s);
    update(g.o, d.o, m.o, v.o, p.lr_o);
    for (int k = 0; k < 12; ++k) update(g.sh[k], d.sh[k], m.sh[k], v.sh[k], p.lr_sh);

    double qn = g.q.norm();
    if (qn < 1e-12)
      g.q = Vec4(1, 0, 0, 0);
    else
      g.q /= qn;
    for (int k = 0; k < 3; ++k)
      g.s[k] = std::clamp(g.s[k], std::log(kMinScale), std::log(kMaxScale));
  }
}

// Indices surviving an opacity prune; never empty (the most opaque Gaussian
// is retained when everything falls below the threshold).
inline std::vector<size_t> prune_indices(const GaussianCloud& cloud, double opacity_threshold) {
  std::vector<size_t> kept;
  for (size_t i = 0; i < cloud.size(); ++i)
    if (sigmoid(cloud.gaussians[i].o) >= opacity_threshold) kept.push_back(i);
  if (kept.empty()) {
    size_t best = 0;
    for (size_t i = 1; i < cloud.size(); ++i)
      if (cloud.gaussians[i].o > cloud.gaussians[best].o) best = i;
    kept.push_back(best);
  }
  return kept;
}

inline GaussianCloud prune(const GaussianCloud& cloud, double opacity_threshold = 0.005) {
  cloud.validate();
  std::vector<size_t> kept = prune_indices(cloud, opacity_threshold);
  GaussianCloud out;
  out.sh_degree = cloud.sh_degree;
  out.gaussians.reserve(kept.size());
  for (size_t i : kept) out.gaussians.push_back(cloud.gaussians[i]);
  return out;
}

// Keeps optimizer moments aligned with a pruned cloud.
inline void filter_adam_state(AdamState& state, const std::vector<size_t>& kept) {
  std::vector<GaussianGrad> m2, v2;
  m2.reserve(kept.size());
  v2.reserve(kept.size());
  for (size_t i : kept) {
    m2.push_back(state.m[i]);
    v2.push_back(state.v[i]);
  }
  state.m = std::move(m2);
  state.v = std::move(v2);
}

}  // namespace hsgs
