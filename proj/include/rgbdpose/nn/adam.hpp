#pragma once

#include <cmath>
#include <vector>

#include "rgbdpose/nn/network.hpp"

namespace rgbdpose::nn {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected ADAM update. Moments are kept in double regardless of
/// the parameter type; they are lazily sized on the first call.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count differs");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam");
    if (state.m[i].size() != params[i].size()) throw ShapeError("adam: moment size mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    T* p = params[i].ptr();
    const T* g = grads[i].ptr();
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double gk = g[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] = static_cast<T>(double(p[k]) - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

}  // namespace rgbdpose::nn
