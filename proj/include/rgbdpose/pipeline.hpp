#pragma once

// End-to-end lifting of one RGBD frame: reference point from the neck,
// occupancy grid, tiled score maps, network forward pass, argmax and fusion.

#include <optional>
#include <span>
#include <vector>

#include "rgbdpose/config.hpp"
#include "rgbdpose/nn/network.hpp"
#include "rgbdpose/nn/train.hpp"
#include "rgbdpose/skeleton.hpp"
#include "rgbdpose/synth.hpp"
#include "rgbdpose/voxel.hpp"

namespace rgbdpose {

struct FrameInput {
  const CameraIntrinsics& intr;
  const DepthMap& depth;
  const ScoreMap2D& scores;
  const Keypoints2D& detections;
};

inline FrameInput frame_of(const synth::Sample& s) { return {s.intr, s.depth, s.scores, s.detections}; }

struct PreparedFrame {
  GridSpec grid;
  nn::Tensor<float> input;  // [1, 1 + J, K, K, K]
};

/// Throws ReferenceUnavailable when the neck is undetected or has no depth
/// around it.
inline PreparedFrame prepare_frame(const FrameInput& f, const GridSettings& settings) {
  const auto neck = std::size_t(index_of(CocoJoint::kNeck));
  if (neck >= f.detections.size() || !f.detections[neck].valid)
    throw ReferenceUnavailable("neck not detected");
  if (f.depth.width() != f.intr.width || f.depth.height() != f.intr.height ||
      f.scores.width != f.intr.width || f.scores.height != f.intr.height)
    throw ShapeError("depth/score map size differs from the intrinsics");
  GridSpec grid{compute_reference(f.depth, f.detections[neck].pixel(), f.intr), settings.K,
                settings.resolution};
  const VoxelGrid occupancy = build_occupancy(f.depth, f.intr, grid);
  const ScoreVolume tiled = tile_scores(f.scores, grid, f.intr);
  return {grid, nn::make_network_input<float>(occupancy, tiled)};
}

struct Prediction {
  Skeleton3D fused;
  Skeleton3D volumetric;
  std::optional<GridSpec> grid;
};

/// All joints come back invalid when no reference point can be found.
inline Prediction predict_frame(const nn::NetworkParams<float>& params, const FrameInput& f,
                                const GridSettings& settings) {
  Prediction out{Skeleton3D(std::size_t(params.spec.joints)), Skeleton3D(std::size_t(params.spec.joints)), {}};
  PreparedFrame prepared;
  try {
    prepared = prepare_frame(f, settings);
  } catch (const ReferenceUnavailable&) {
    return out;
  }
  if (prepared.input.dim(1) != params.spec.in_channels())
    throw ShapeError("model expects " + std::to_string(params.spec.joints) + " joints, scores have " +
                     std::to_string(prepared.input.dim(1) - 1));
  const auto heads = nn::predict_volumes(params, prepared.input);
  const ScoreVolume volume = nn::to_score_volume(heads.back(), prepared.grid);
  out.volumetric = argmax_world(volume, settings.refine);
  out.fused = fuse(out.volumetric, f.detections, f.intr, settings.tau);
  out.grid = prepared.grid;
  return out;
}

/// Training examples for every sample with a usable reference point.
inline std::vector<nn::TrainingExample> make_training_set(std::span<const synth::Sample> samples,
                                                          const GridSettings& settings) {
  std::vector<nn::TrainingExample> out;
  for (const auto& s : samples) {
    try {
      PreparedFrame p = prepare_frame(frame_of(s), settings);
      out.push_back({std::move(p.input), p.grid, s.gt});
    } catch (const ReferenceUnavailable&) {
    }
  }
  return out;
}

}  // namespace rgbdpose
