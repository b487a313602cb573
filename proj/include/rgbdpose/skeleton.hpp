#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgbdpose/geometry.hpp"

namespace rgbdpose {

/// The 18 keypoints of the Coco body convention, in the usual order.
enum class CocoJoint : int {
  kNose = 0,
  kNeck,
  kRightShoulder,
  kRightElbow,
  kRightWrist,
  kLeftShoulder,
  kLeftElbow,
  kLeftWrist,
  kRightHip,
  kRightKnee,
  kRightAnkle,
  kLeftHip,
  kLeftKnee,
  kLeftAnkle,
  kRightEye,
  kLeftEye,
  kRightEar,
  kLeftEar,
};

inline constexpr int kCocoJointCount = 18;

inline constexpr std::array<std::string_view, kCocoJointCount> kCocoJointNames = {
    "nose",       "neck",      "r_shoulder", "r_elbow", "r_wrist", "l_shoulder",
    "l_elbow",    "l_wrist",   "r_hip",      "r_knee",  "r_ankle", "l_hip",
    "l_knee",     "l_ankle",   "r_eye",      "l_eye",   "r_ear",   "l_ear",
};

inline constexpr int index_of(CocoJoint j) { return static_cast<int>(j); }

inline std::optional<int> coco_index(std::string_view name) {
  for (int i = 0; i < kCocoJointCount; ++i)
    if (kCocoJointNames[static_cast<std::size_t>(i)] == name) return i;
  return std::nullopt;
}

/// A 2D detection. `valid` is false when the detector produced nothing.
struct Keypoint2D {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
  bool valid = false;

  PixelCoord pixel() const { return {u, v, confidence}; }
};

using Keypoints2D = std::vector<Keypoint2D>;

struct Joint3D {
  Vec3 position = Vec3::Zero();
  bool valid = false;
  double confidence = 0.0;
};

struct Skeleton3D {
  std::vector<Joint3D> joints;

  Skeleton3D() = default;
  explicit Skeleton3D(std::size_t joint_count) : joints(joint_count) {}

  std::size_t size() const { return joints.size(); }
  Joint3D& operator[](std::size_t i) { return joints[i]; }
  const Joint3D& operator[](std::size_t i) const { return joints[i]; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& j : joints) n += j.valid ? 1 : 0;
    return n;
  }
};

enum class HandSide { kLeft, kRight };

struct HandNormal {
  Vec3 direction = Vec3::UnitZ();
  HandSide side = HandSide::kRight;
};

}  // namespace rgbdpose
