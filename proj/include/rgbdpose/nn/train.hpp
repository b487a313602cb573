#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "rgbdpose/nn/adam.hpp"
#include "rgbdpose/nn/network.hpp"
#include "rgbdpose/voxel.hpp"

namespace rgbdpose::nn {

/// Stacks the occupancy grid and the tiled score volume into a
/// [1, 1 + J, K, K, K] network input.
template <class T>
Tensor<T> make_network_input(const VoxelGrid& occupancy, const ScoreVolume& tiled) {
  const GridSpec& s = occupancy.spec;
  if (tiled.spec.K != s.K) throw ShapeError("occupancy and tiled scores use different grids");
  const int K = s.K;
  Tensor<T> x({1, 1 + tiled.joints, K, K, K});
  const std::size_t n = s.voxel_count();
  std::copy(occupancy.occupancy.begin(), occupancy.occupancy.end(), x.data.begin());
  std::copy(tiled.values.begin(), tiled.values.end(), x.data.begin() + std::ptrdiff_t(n));
  return x;
}

/// Converts channel `head` output [1, J, K, K, K] back into a ScoreVolume.
template <class T>
ScoreVolume to_score_volume(const Tensor<T>& t, const GridSpec& spec) {
  if (t.rank() != 5 || t.dim(0) != 1 || t.dim(2) != spec.K)
    throw ShapeError("prediction does not match grid");
  ScoreVolume v(spec, t.dim(1));
  std::copy(t.data.begin(), t.data.end(), v.values.begin());
  return v;
}

struct TrainConfig {
  int batch_size = 2;
  long iterations = 40000;
  double lr_initial = 1e-4;
  double lr_decay_factor = 0.1;
  long lr_decay_every = 10000;
  double sigma_vox = kDefaultSigmaVoxels;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1 || iterations < 0 || !(lr_initial > 0.0) || !(lr_decay_factor > 0.0) ||
        lr_decay_factor > 1.0 || lr_decay_every < 1 || !(sigma_vox > 0.0))
      throw InvalidArgument("invalid training configuration");
  }

  /// Step schedule: lr_initial · factor^⌊step / every⌋.
  double lr_at(long step) const {
    return lr_initial * std::pow(lr_decay_factor, double(step / lr_decay_every));
  }
};

struct TrainingExample {
  Tensor<float> input;  // [1, 1 + J, K, K, K]
  GridSpec grid;
  Skeleton3D gt;
};

struct LossRecord {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  NetworkParams<float> params;
  std::vector<LossRecord> log;
};

using TrainProgress = std::function<void(const LossRecord&)>;

inline TrainResult train(std::span<const TrainingExample> dataset, const NetworkSpec& spec,
                         const TrainConfig& cfg, const TrainProgress& progress = {}) {
  cfg.validate();
  if (dataset.empty()) throw DataError("training set is empty");
  const Shape sample_shape = dataset.front().input.shape;
  for (const auto& ex : dataset) {
    if (ex.input.shape != sample_shape) throw DataError("training inputs differ in shape");
    if (ex.gt.size() != std::size_t(spec.joints)) throw DataError("GT joint count mismatch");
  }
  if (sample_shape.size() != 5 || sample_shape[0] != 1 || sample_shape[1] != spec.in_channels())
    throw ShapeError("training inputs must be [1, 1 + J, K, K, K]");
  spec.validate_grid(sample_shape[2]);

  TrainResult result{init_params<float>(spec, cfg.seed), {}};
  if (cfg.iterations == 0) return result;

  std::vector<Tensor<float>> targets;
  targets.reserve(dataset.size());
  for (const auto& ex : dataset) {
    const ScoreVolume gt = make_gt_volume(ex.gt, ex.grid, cfg.sigma_vox).volume;
    Shape s = sample_shape;
    s[1] = spec.joints;
    targets.emplace_back(s, std::vector<float>(gt.values.begin(), gt.values.end()));
  }

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  const std::size_t in_stride = dataset.front().input.size();
  const std::size_t out_stride = targets.front().size();
  Shape batch_in = sample_shape, batch_out = targets.front().shape;
  batch_in[0] = batch_out[0] = cfg.batch_size;

  AdamState adam;
  result.log.reserve(std::size_t(cfg.iterations));
  for (long step = 0; step < cfg.iterations; ++step) {
    Tensor<float> x(batch_in), y(batch_out);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = next_index();
      std::copy_n(dataset[idx].input.ptr(), in_stride, x.ptr() + std::size_t(b) * in_stride);
      std::copy_n(targets[idx].ptr(), out_stride, y.ptr() + std::size_t(b) * out_stride);
    }
    Graph<float> g;
    const auto pv = bind_params(g, result.params);
    const auto heads = voxelposenet_forward<float>(g, g.leaf(std::move(x)), spec, pv);
    const auto loss = g.sum_squared_error(heads, y);
    g.backward(loss);
    const double loss_value = g.value(loss)[0];
    if (!std::isfinite(loss_value)) throw NumericalError("training loss diverged");

    std::vector<Tensor<float>> grads;
    grads.reserve(pv.size());
    for (auto v : pv) grads.push_back(g.grad(v));
    const double lr = cfg.lr_at(step);
    adam_step(result.params.tensors, grads, adam, lr);

    result.log.push_back({step, loss_value, lr});
    if (progress) progress(result.log.back());
  }
  return result;
}

}  // namespace rgbdpose::nn
