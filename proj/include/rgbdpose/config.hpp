#pragma once

// Run configuration shared by the command-line tools. A JSON document picks
// a base profile with "defaults" and overrides individual sections.

#include <cstdint>
#include <string>

#include "json.hpp"

#include "rgbdpose/errors.hpp"
#include "rgbdpose/eval.hpp"
#include "rgbdpose/nn/network.hpp"
#include "rgbdpose/nn/train.hpp"
#include "rgbdpose/synth.hpp"
#include "rgbdpose/voxel.hpp"

namespace rgbdpose {

struct GridSettings {
  int K = 64;
  double resolution = 0.03;
  double sigma_vox = kDefaultSigmaVoxels;
  double tau = kDefaultFusionThreshold;
  bool refine = false;

  void validate() const {
    GridSpec{Vec3(0, 0, 1), K, resolution}.validate();
    if (!(sigma_vox > 0.0) || !(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("invalid sigma or tau");
  }
};

struct RunConfig {
  std::string profile = "paper";
  GridSettings grid;
  nn::NetworkSpec network;
  nn::TrainConfig train;
  eval::EvalOptions eval;
  synth::SceneConfig scene;
  std::uint64_t seed = 0;

  void validate() const {
    grid.validate();
    network.validate();
    network.validate_grid(grid.K);
    train.validate();
    scene.validate();
    check_thresholds_(eval.thresholds);
    check_thresholds_(eval.distance_edges);
  }

  /// K=64 at 3 cm, 40000 iterations of batch 2 at lr 1e-4.
  static RunConfig paper() { return {}; }

  /// A scaled-down profile that trains on one CPU core in minutes.
  static RunConfig desk() {
    RunConfig c;
    c.profile = "desk";
    c.grid.K = 16;
    c.grid.resolution = 0.12;
    c.grid.sigma_vox = 1.0;
    c.train.iterations = 2000;
    c.train.lr_initial = 1e-3;
    c.train.lr_decay_every = 1500;
    return c;
  }

  static RunConfig profile_named(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    throw InvalidArgument("unknown config profile '" + name + "'");
  }

 private:
  static void check_thresholds_(const std::vector<double>& t) { eval::check_thresholds(t); }
};

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  return {{"defaults", c.profile},
          {"seed", c.seed},
          {"grid",
           {{"K", c.grid.K},
            {"resolution", c.grid.resolution},
            {"sigma_vox", c.grid.sigma_vox},
            {"tau", c.grid.tau},
            {"refine", c.grid.refine}}},
          {"network", c.network},
          {"train",
           {{"batch_size", c.train.batch_size},
            {"iterations", c.train.iterations},
            {"lr_initial", c.train.lr_initial},
            {"lr_decay_factor", c.train.lr_decay_factor},
            {"lr_decay_every", c.train.lr_decay_every}}},
          {"eval",
           {{"thresholds_m", c.eval.thresholds},
            {"distance_edges_m", c.eval.distance_edges},
            {"distance_threshold_m", c.eval.distance_threshold},
            {"excluded_joints", c.eval.excluded_joints}}},
          {"scene", c.scene}};
}

/// Starts from the named profile and applies every key present in `j`.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  RunConfig c = RunConfig::profile_named(j.value("defaults", std::string("paper")));
  c.seed = j.value("seed", c.seed);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    c.grid.K = g.value("K", c.grid.K);
    c.grid.resolution = g.value("resolution", c.grid.resolution);
    c.grid.sigma_vox = g.value("sigma_vox", c.grid.sigma_vox);
    c.grid.tau = g.value("tau", c.grid.tau);
    c.grid.refine = g.value("refine", c.grid.refine);
  }
  if (j.contains("network")) {
    nlohmann::json merged = c.network;
    merged.update(j.at("network"));
    c.network = merged.get<nn::NetworkSpec>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.iterations = t.value("iterations", c.train.iterations);
    c.train.lr_initial = t.value("lr_initial", c.train.lr_initial);
    c.train.lr_decay_factor = t.value("lr_decay_factor", c.train.lr_decay_factor);
    c.train.lr_decay_every = t.value("lr_decay_every", c.train.lr_decay_every);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.thresholds = e.value("thresholds_m", c.eval.thresholds);
    c.eval.distance_edges = e.value("distance_edges_m", c.eval.distance_edges);
    c.eval.distance_threshold = e.value("distance_threshold_m", c.eval.distance_threshold);
    c.eval.excluded_joints = e.value("excluded_joints", c.eval.excluded_joints);
  }
  if (j.contains("scene")) {
    nlohmann::json merged = c.scene;
    merged.update(j.at("scene"));
    c.scene = merged.get<synth::SceneConfig>();
  }
  c.train.sigma_vox = c.grid.sigma_vox;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

}  // namespace rgbdpose
