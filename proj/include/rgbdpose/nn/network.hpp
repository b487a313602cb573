#pragma once

// VoxelPoseNet: a 3D encoder-decoder over the occupancy grid concatenated
// with the tiled 2D score maps. The encoder stacks dense blocks and stride-2
// convolutions; the decoder upsamples with transposed convolutions and adds
// the encoder features of matching resolution. Every decoder stage emits a
// J-channel score volume, upsampled to the full grid resolution; the last
// one is the prediction.

#include <array>
#include <cmath>
#include <span>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "rgbdpose/nn/graph.hpp"

namespace rgbdpose::nn {

struct NetworkSpec {
  int joints = 18;
  int stem_channels = 8;
  /// Output channels of each stride-2 encoder convolution; its length is the
  /// number of down/up sampling stages.
  std::vector<int> stage_channels = {16, 32, 32};
  int dense_layers = 2;
  int growth = 8;
  int kernel = 3;
  /// Drops every ReLU (used to check gradients of a purely linear network).
  bool linear = false;

  int in_channels() const { return 1 + joints; }
  int stages() const { return static_cast<int>(stage_channels.size()); }

  void validate() const {
    if (joints < 1 || stem_channels < 1 || dense_layers < 0 || growth < 1 || kernel < 1 ||
        kernel % 2 == 0)
      throw InvalidArgument("invalid network spec");
    for (int c : stage_channels)
      if (c < 1) throw InvalidArgument("invalid stage width");
  }

  /// The grid side must be divisible by 2^stages.
  void validate_grid(int K) const {
    if (K % (1 << stages()) != 0)
      throw ShapeError("grid size " + std::to_string(K) + " is not divisible by 2^" +
                       std::to_string(stages()));
  }

  bool operator==(const NetworkSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const NetworkSpec& s) {
  j = nlohmann::json{{"joints", s.joints},         {"stem_channels", s.stem_channels},
                     {"stage_channels", s.stage_channels}, {"dense_layers", s.dense_layers},
                     {"growth", s.growth},         {"kernel", s.kernel},
                     {"linear", s.linear}};
}

inline void from_json(const nlohmann::json& j, NetworkSpec& s) {
  NetworkSpec d;
  s.joints = j.value("joints", d.joints);
  s.stem_channels = j.value("stem_channels", d.stem_channels);
  s.stage_channels = j.value("stage_channels", d.stage_channels);
  s.dense_layers = j.value("dense_layers", d.dense_layers);
  s.growth = j.value("growth", d.growth);
  s.kernel = j.value("kernel", d.kernel);
  s.linear = j.value("linear", d.linear);
}

struct ParamDecl {
  std::string name;
  Shape shape;
  int fan_in = 1;
  bool bias = false;
};

/// Parameter tensors in declaration order (the order they are serialized).
inline std::vector<ParamDecl> declare_params(const NetworkSpec& spec) {
  spec.validate();
  const int k = spec.kernel;
  const int k3 = k * k * k;
  std::vector<ParamDecl> decls;
  auto conv = [&](const std::string& name, int cin, int cout, int ksz) {
    decls.push_back({name + ".w", {cout, cin, ksz, ksz, ksz}, cin * ksz * ksz * ksz, false});
    decls.push_back({name + ".b", {cout}, 1, true});
  };
  auto deconv = [&](const std::string& name, int cin, int cout) {
    // A stride-2 transposed conv touches each output with ~k³/8 taps per input channel.
    decls.push_back({name + ".w", {cin, cout, k, k, k}, std::max(1, cin * k3 / 8), false});
    decls.push_back({name + ".b", {cout}, 1, true});
  };

  int channels = spec.stem_channels;
  conv("stem", spec.in_channels(), channels, k);
  std::vector<int> skip_channels;
  for (int s = 0; s < spec.stages(); ++s) {
    for (int l = 0; l < spec.dense_layers; ++l) {
      conv("enc" + std::to_string(s) + ".dense" + std::to_string(l), channels, spec.growth, k);
      channels += spec.growth;
    }
    skip_channels.push_back(channels);
    conv("enc" + std::to_string(s) + ".down", channels, spec.stage_channels[std::size_t(s)], k);
    channels = spec.stage_channels[std::size_t(s)];
  }
  for (int i = 0; i < spec.stages(); ++i) {
    const int skip = skip_channels[std::size_t(spec.stages() - 1 - i)];
    deconv("dec" + std::to_string(i) + ".up", channels, skip);
    channels = skip;
    conv("dec" + std::to_string(i) + ".head", channels, spec.joints, 1);
  }
  return decls;
}

template <class T>
struct NetworkParams {
  NetworkSpec spec;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  template <class U>
  NetworkParams<U> cast() const {
    NetworkParams<U> out{spec, names, {}};
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  bool operator==(const NetworkParams&) const = default;
};

/// Zero tensors shaped per the spec.
template <class T>
NetworkParams<T> zero_params(const NetworkSpec& spec) {
  NetworkParams<T> p{spec, {}, {}};
  for (const auto& d : declare_params(spec)) {
    p.names.push_back(d.name);
    p.tensors.emplace_back(d.shape);
  }
  return p;
}

/// He (fan-in) normal initialization for weights, zero biases.
template <class T>
NetworkParams<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams<T> p = zero_params<T>(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto decls = declare_params(spec);
  for (std::size_t i = 0; i < decls.size(); ++i) {
    if (decls[i].bias) continue;
    const double stddev = std::sqrt(2.0 / decls[i].fan_in);
    for (T& v : p.tensors[i].data) v = static_cast<T>(normal(rng) * stddev);
  }
  return p;
}

template <class T>
void check_params(const NetworkParams<T>& params) {
  const auto decls = declare_params(params.spec);
  if (decls.size() != params.tensors.size()) throw ShapeError("parameter count mismatch");
  for (std::size_t i = 0; i < decls.size(); ++i)
    if (decls[i].shape != params.tensors[i].shape)
      throw ShapeError("parameter " + decls[i].name + " has shape " +
                       to_string(params.tensors[i].shape) + ", expected " +
                       to_string(decls[i].shape));
}

/// Leaf variables for the parameters, in declaration order.
template <class T>
std::vector<typename Graph<T>::Var> bind_params(Graph<T>& g, const NetworkParams<T>& params) {
  std::vector<typename Graph<T>::Var> vars;
  vars.reserve(params.tensors.size());
  for (const auto& t : params.tensors) vars.push_back(g.leaf(t));
  return vars;
}

/// L conv(k³, growth) + ReLU layers, each concatenated onto the running
/// feature stack. `params` yields weight/bias pairs in order.
template <class T>
typename Graph<T>::Var dense_block(Graph<T>& g, typename Graph<T>::Var x,
                                   std::span<const typename Graph<T>::Var> params, int layers,
                                   bool linear = false) {
  using Var = typename Graph<T>::Var;
  if (params.size() != std::size_t(2 * layers)) throw ShapeError("dense block parameter count");
  Var stack = x;
  for (int l = 0; l < layers; ++l) {
    Var y = g.conv3d(stack, params[std::size_t(2 * l)], params[std::size_t(2 * l + 1)]);
    if (!linear) y = g.relu(y);
    const std::array<Var, 2> parts{stack, y};
    stack = g.concat(parts);
  }
  return stack;
}

/// Builds the forward pass on `g`. `input` is [N, 1 + J, K, K, K]
/// (occupancy first). Returns one [N, J, K, K, K] prediction per decoder
/// stage, coarsest first.
template <class T>
std::vector<typename Graph<T>::Var> voxelposenet_forward(
    Graph<T>& g, typename Graph<T>::Var input, const NetworkSpec& spec,
    std::span<const typename Graph<T>::Var> params) {
  using Var = typename Graph<T>::Var;
  const Tensor<T>& in = g.value(input);
  if (in.rank() != 5 || in.dim(1) != spec.in_channels())
    throw ShapeError("network input must be [N, " + std::to_string(spec.in_channels()) +
                     ", K, K, K], got " + to_string(in.shape));
  if (in.dim(2) != in.dim(3) || in.dim(2) != in.dim(4)) throw ShapeError("grid must be cubic");
  spec.validate_grid(in.dim(2));

  std::size_t next = 0;
  auto take = [&]() {
    if (next >= params.size()) throw ShapeError("too few parameters for network spec");
    return params[next++];
  };
  auto act = [&](Var v) { return spec.linear ? v : g.relu(v); };

  Var stem_w = take(), stem_b = take();
  Var h = act(g.conv3d(input, stem_w, stem_b));
  std::vector<Var> skips;
  for (int s = 0; s < spec.stages(); ++s) {
    const auto block = params.subspan(next, std::size_t(2 * spec.dense_layers));
    next += block.size();
    h = dense_block<T>(g, h, block, spec.dense_layers, spec.linear);
    skips.push_back(h);
    Var w = take(), b = take();
    h = act(g.conv3d(h, w, b, 2));
  }
  std::vector<Var> heads;
  for (int i = 0; i < spec.stages(); ++i) {
    Var w = take(), b = take();
    h = g.add(act(g.deconv3d(h, w, b, 2)), skips[std::size_t(spec.stages() - 1 - i)]);
    Var hw = take(), hb = take();
    Var head = g.conv3d(h, hw, hb);
    heads.push_back(g.upsample(head, 1 << (spec.stages() - 1 - i)));
  }
  if (next != params.size()) throw ShapeError("too many parameters for network spec");
  for (Var v : heads)
    if (!g.value(v).all_finite()) throw NumericalError("non-finite network output");
  return heads;
}

/// Inference without keeping gradients around.
template <class T>
std::vector<Tensor<T>> predict_volumes(const NetworkParams<T>& params, const Tensor<T>& input) {
  check_params(params);
  Graph<T> g;
  const auto pv = bind_params(g, params);
  auto x = g.leaf(input);
  std::vector<Tensor<T>> out;
  for (auto v : voxelposenet_forward<T>(g, x, params.spec, pv)) out.push_back(g.value(v));
  return out;
}

}  // namespace rgbdpose::nn
