#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "rgbdpose/nn/network.hpp"

namespace rgbdpose::nn {

struct GradCheckOptions {
  int grid = 8;
  int joints = 2;
  int batch = 2;
  /// Entries probed per parameter tensor (all entries if the tensor is smaller).
  int probes_per_tensor = 6;
  std::uint64_t seed = 1234;
};

/// Worst relative error between backprop and central finite differences of
/// the training loss, on a tiny random double-precision instance. The
/// relative error of one entry is |a − n| / max(|a|, |n|, 1).
inline double grad_check(NetworkSpec spec, double eps, const GradCheckOptions& opt = {}) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("eps must be positive");
  spec.joints = opt.joints;
  spec.validate();
  const int K = opt.grid;
  spec.validate_grid(K);

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  NetworkParams<double> params = init_params<double>(spec, opt.seed + 1);
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    if (params.tensors[i].rank() == 1)
      for (double& b : params.tensors[i].data) b = 0.2 * (uni(rng) - 0.5);

  Tensor<double> input({opt.batch, spec.in_channels(), K, K, K});
  const std::size_t per_channel = std::size_t(K) * K * K;
  for (int n = 0; n < opt.batch; ++n)
    for (int c = 0; c < spec.in_channels(); ++c)
      for (std::size_t v = 0; v < per_channel; ++v) {
        double& x = input[(std::size_t(n) * spec.in_channels() + std::size_t(c)) * per_channel + v];
        x = c == 0 ? (uni(rng) < 0.2 ? 1.0 : 0.0) : uni(rng);
      }
  Tensor<double> target({opt.batch, spec.joints, K, K, K});
  for (double& t : target.data) t = uni(rng);

  auto loss_of = [&](const NetworkParams<double>& p, std::vector<Tensor<double>>* grads) {
    Graph<double> g;
    const auto pv = bind_params(g, p);
    const auto heads = voxelposenet_forward<double>(g, g.leaf(input), spec, pv);
    const auto loss = g.sum_squared_error(heads, target);
    if (grads) {
      g.backward(loss);
      for (auto v : pv) grads->push_back(g.grad(v));
    }
    return g.value(loss)[0];
  };

  std::vector<Tensor<double>> analytic;
  loss_of(params, &analytic);

  double worst = 0.0;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    const std::size_t n = params.tensors[t].size();
    std::vector<std::size_t> probe;
    if (n <= std::size_t(opt.probes_per_tensor)) {
      for (std::size_t i = 0; i < n; ++i) probe.push_back(i);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (int i = 0; i < opt.probes_per_tensor; ++i) probe.push_back(pick(rng));
    }
    for (std::size_t idx : probe) {
      NetworkParams<double> p = params;
      const double orig = p.tensors[t][idx];
      p.tensors[t][idx] = orig + eps;
      const double up = loss_of(p, nullptr);
      p.tensors[t][idx] = orig - eps;
      const double down = loss_of(p, nullptr);
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t][idx];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace rgbdpose::nn
