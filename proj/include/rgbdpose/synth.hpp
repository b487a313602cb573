#pragma once

// Synthetic RGBD scenes: an articulated capsule body posed by forward
// kinematics, optional box/sphere occluders, ray-cast depth with a
// depth-dependent noise model, and Gaussian score maps standing in for a
// 2D keypoint detector.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "rgbdpose/geometry.hpp"
#include "rgbdpose/skeleton.hpp"
#include "rgbdpose/triangulate.hpp"
#include "rgbdpose/voxel.hpp"

namespace rgbdpose {

inline void to_json(nlohmann::json& j, const CameraIntrinsics& c) {
  j = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width},
       {"height", c.height}};
}

inline void from_json(const nlohmann::json& j, CameraIntrinsics& c) {
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
}

}  // namespace rgbdpose

namespace rgbdpose::synth {

// ---------------------------------------------------------------------------
// Body model

/// Body frame: +x towards the person's left, +y down, +z towards the
/// person's back. Facing the camera, it coincides with the camera frame.
struct Bone {
  int parent = -1;
  Vec3 offset = Vec3::Zero();
  Vec3 angle_min = Vec3::Zero();  // XYZ Euler limits (radians)
  Vec3 angle_max = Vec3::Zero();
};

struct CapsuleDecl {
  int a = 0;
  int b = 0;  // may equal `a` for a sphere on a joint
  double radius = 0.05;
};

struct BodyModel {
  std::array<Bone, kCocoJointCount> bones{};
  std::vector<CapsuleDecl> capsules;
  double torso_radius = 0.12;
  double hip_radius = 0.08;
  double head_radius = 0.11;
  double neck_radius = 0.05;
  /// Hand keypoints relative to the wrist, expressed for the right hand in
  /// the forearm frame; mirrored in x for the left hand.
  Vec3 index_base = {-0.08, 0.0, -0.03};
  Vec3 pinky_base = {-0.07, 0.0, 0.03};

  double bone_length(int joint) const { return bones[std::size_t(joint)].offset.norm(); }

  static BodyModel standard() {
    using J = CocoJoint;
    BodyModel m;
    auto set = [&](J j, J parent, Vec3 offset, Vec3 lo = Vec3::Zero(), Vec3 hi = Vec3::Zero()) {
      m.bones[std::size_t(index_of(j))] = {index_of(parent), offset, lo, hi};
    };
    m.bones[std::size_t(index_of(J::kNeck))] = {-1, Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    set(J::kNose, J::kNeck, {0.0, -0.14, -0.07}, {-0.3, -0.5, -0.2}, {0.3, 0.5, 0.2});
    set(J::kRightEye, J::kNose, {-0.035, -0.035, 0.02});
    set(J::kLeftEye, J::kNose, {0.035, -0.035, 0.02});
    set(J::kRightEar, J::kRightEye, {-0.035, 0.01, 0.08});
    set(J::kLeftEar, J::kLeftEye, {0.035, 0.01, 0.08});

    set(J::kRightShoulder, J::kNeck, {-0.17, 0.0, 0.0});
    set(J::kLeftShoulder, J::kNeck, {0.17, 0.0, 0.0});
    set(J::kRightElbow, J::kRightShoulder, {-0.26, 0.0, 0.0}, {0.0, -0.8, -1.3}, {0.0, 0.8, 1.3});
    set(J::kLeftElbow, J::kLeftShoulder, {0.26, 0.0, 0.0}, {0.0, -0.8, -1.3}, {0.0, 0.8, 1.3});
    set(J::kRightWrist, J::kRightElbow, {-0.24, 0.0, 0.0}, {-0.5, -1.2, -1.0}, {0.5, 1.2, 1.0});
    set(J::kLeftWrist, J::kLeftElbow, {0.24, 0.0, 0.0}, {-0.5, -1.2, -1.0}, {0.5, 1.2, 1.0});

    set(J::kRightHip, J::kNeck, {-0.09, 0.40, 0.0});
    set(J::kLeftHip, J::kNeck, {0.09, 0.40, 0.0});
    set(J::kRightKnee, J::kRightHip, {0.0, 0.26, 0.0}, {-1.2, 0.0, -0.3}, {0.3, 0.0, 0.3});
    set(J::kLeftKnee, J::kLeftHip, {0.0, 0.26, 0.0}, {-1.2, 0.0, -0.3}, {0.3, 0.0, 0.3});
    set(J::kRightAnkle, J::kRightKnee, {0.0, 0.24, 0.0}, {0.0, 0.0, 0.0}, {1.5, 0.0, 0.0});
    set(J::kLeftAnkle, J::kLeftKnee, {0.0, 0.24, 0.0}, {0.0, 0.0, 0.0}, {1.5, 0.0, 0.0});

    m.capsules = {
        {index_of(J::kRightShoulder), index_of(J::kLeftShoulder), 0.06},
        {index_of(J::kRightShoulder), index_of(J::kRightElbow), 0.045},
        {index_of(J::kRightElbow), index_of(J::kRightWrist), 0.04},
        {index_of(J::kLeftShoulder), index_of(J::kLeftElbow), 0.045},
        {index_of(J::kLeftElbow), index_of(J::kLeftWrist), 0.04},
        {index_of(J::kRightHip), index_of(J::kRightKnee), 0.07},
        {index_of(J::kRightKnee), index_of(J::kRightAnkle), 0.05},
        {index_of(J::kLeftHip), index_of(J::kLeftKnee), 0.07},
        {index_of(J::kLeftKnee), index_of(J::kLeftAnkle), 0.05},
    };
    return m;
  }
};

/// Per-joint XYZ Euler angles plus the global placement of the neck.
struct PoseParams {
  std::array<Vec3, kCocoJointCount> angles{};
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  Vec3 neck = {0.0, -0.25, 3.0};
};

struct HandKeypoints {
  Vec3 wrist = Vec3::Zero();
  Vec3 index_base = Vec3::Zero();
  Vec3 pinky_base = Vec3::Zero();
};

struct PosedBody {
  Skeleton3D skeleton{std::size_t(kCocoJointCount)};
  std::array<Mat3, kCocoJointCount> frames{};
  HandKeypoints left_hand;
  HandKeypoints right_hand;
  bool facing_away = false;
};

inline Mat3 euler_xyz(const Vec3& a) {
  return (Eigen::AngleAxisd(a.x(), Vec3::UnitX()) * Eigen::AngleAxisd(a.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(a.z(), Vec3::UnitZ()))
      .toRotationMatrix();
}

/// Forward kinematics. Joint order guarantees parents precede children
/// except for the head chain, so joints are resolved recursively.
inline PosedBody forward_kinematics(const BodyModel& model, const PoseParams& pose) {
  PosedBody body;
  const Mat3 global = (Eigen::AngleAxisd(pose.yaw, Vec3::UnitY()) *
                       Eigen::AngleAxisd(pose.pitch, Vec3::UnitX()) *
                       Eigen::AngleAxisd(pose.roll, Vec3::UnitZ()))
                          .toRotationMatrix();
  std::array<bool, kCocoJointCount> done{};
  auto solve = [&](auto&& self, int j) -> void {
    if (done[std::size_t(j)]) return;
    const Bone& bone = model.bones[std::size_t(j)];
    Joint3D& joint = body.skeleton[std::size_t(j)];
    joint.valid = true;
    joint.confidence = 1.0;
    if (bone.parent < 0) {
      body.frames[std::size_t(j)] = global;
      joint.position = pose.neck;
    } else {
      self(self, bone.parent);
      const Mat3 frame = body.frames[std::size_t(bone.parent)] * euler_xyz(pose.angles[std::size_t(j)]);
      body.frames[std::size_t(j)] = frame;
      joint.position = body.skeleton[std::size_t(bone.parent)].position + frame * bone.offset;
    }
    done[std::size_t(j)] = true;
  };
  for (int j = 0; j < kCocoJointCount; ++j) solve(solve, j);

  auto hand = [&](CocoJoint wrist, double mirror) {
    const int w = index_of(wrist);
    const Mat3& frame = body.frames[std::size_t(w)];
    const Vec3 flip(mirror, 1.0, 1.0);
    HandKeypoints h;
    h.wrist = body.skeleton[std::size_t(w)].position;
    h.index_base = h.wrist + frame * model.index_base.cwiseProduct(flip);
    h.pinky_base = h.wrist + frame * model.pinky_base.cwiseProduct(flip);
    return h;
  };
  body.right_hand = hand(CocoJoint::kRightWrist, 1.0);
  body.left_hand = hand(CocoJoint::kLeftWrist, -1.0);
  return body;
}

struct PoseSampling {
  double facing_away_fraction = 0.25;
  double max_yaw = 0.6;
  double max_tilt = 0.1;
  Vec3 neck_min = {-0.3, -0.35, 2.5};
  Vec3 neck_max = {0.3, -0.15, 4.0};
};

/// Draws joint angles uniformly within the model limits.
inline PosedBody sample_pose(std::uint64_t seed, const BodyModel& model,
                             const PoseSampling& sampling = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  PoseParams pose;
  for (int j = 0; j < kCocoJointCount; ++j) {
    const Bone& b = model.bones[std::size_t(j)];
    for (int a = 0; a < 3; ++a) pose.angles[std::size_t(j)][a] = range(b.angle_min[a], b.angle_max[a]);
  }
  const bool away = uni(rng) < sampling.facing_away_fraction;
  pose.yaw = range(-sampling.max_yaw, sampling.max_yaw) + (away ? M_PI : 0.0);
  pose.pitch = range(-sampling.max_tilt, sampling.max_tilt);
  pose.roll = range(-sampling.max_tilt, sampling.max_tilt);
  for (int a = 0; a < 3; ++a) pose.neck[a] = range(sampling.neck_min[a], sampling.neck_max[a]);
  PosedBody body = forward_kinematics(model, pose);
  body.facing_away = away;
  return body;
}

// ---------------------------------------------------------------------------
// Scene primitives and ray casting

struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct Box {
  RigidTransform pose;  // box frame -> camera frame
  Vec3 half_extent = Vec3::Constant(0.1);
};

struct Scene {
  std::vector<Capsule> capsules;
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;
  /// Number of leading entries in capsules/spheres that belong to the body.
  std::size_t body_capsules = 0;
  std::size_t body_spheres = 0;
};

namespace detail {

inline constexpr double kNoHit = std::numeric_limits<double>::infinity();

/// Rays start at the camera center; t is measured in units of `d`.
inline double hit_sphere(const Vec3& d, const Vec3& c, double r) {
  const double a = d.dot(d);
  const double b = d.dot(c);
  const double disc = b * b - a * (c.dot(c) - r * r);
  if (disc < 0.0) return kNoHit;
  const double t = (b - std::sqrt(disc)) / a;
  return t > 0.0 ? t : kNoHit;
}

inline double hit_capsule(const Vec3& d, const Capsule& cap) {
  double best = std::min(hit_sphere(d, cap.a, cap.radius), hit_sphere(d, cap.b, cap.radius));
  const Vec3 axis = cap.b - cap.a;
  const double len = axis.norm();
  if (len <= 0.0) return best;
  const Vec3 w = axis / len;
  const Vec3 dp = d - d.dot(w) * w;
  const Vec3 o = -cap.a;
  const Vec3 op = o - o.dot(w) * w;
  const double a = dp.dot(dp);
  if (a > 1e-15) {
    const double b = dp.dot(op);
    const double disc = b * b - a * (op.dot(op) - cap.radius * cap.radius);
    if (disc >= 0.0) {
      const double t = (-b - std::sqrt(disc)) / a;
      const double s = (t * d - cap.a).dot(w);
      if (t > 0.0 && s >= 0.0 && s <= len) best = std::min(best, t);
    }
  }
  return best;
}

inline double hit_box(const Vec3& d, const Box& box) {
  const Mat3 rt = box.pose.rotation.transpose();
  const Vec3 o = rt * (-box.pose.translation);
  const Vec3 dir = rt * d;
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double h = box.half_extent[a];
    if (std::abs(dir[a]) < 1e-15) {
      if (o[a] < -h || o[a] > h) return kNoHit;
      continue;
    }
    double ta = (-h - o[a]) / dir[a];
    double tb = (h - o[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= 0.0) return kNoHit;
  return t0;
}

}  // namespace detail

/// Closest hit of the camera ray through (u, v): z-depth, or +inf.
inline double cast_ray(const Scene& scene, const CameraIntrinsics& intr, double u, double v,
                       bool body_only = false) {
  const Vec3 d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  double best = detail::kNoHit;
  const std::size_t nc = body_only ? scene.body_capsules : scene.capsules.size();
  const std::size_t ns = body_only ? scene.body_spheres : scene.spheres.size();
  for (std::size_t i = 0; i < nc; ++i) best = std::min(best, detail::hit_capsule(d, scene.capsules[i]));
  for (std::size_t i = 0; i < ns; ++i) {
    const Sphere& s = scene.spheres[i];
    best = std::min(best, detail::hit_sphere(d, s.center, s.radius));
  }
  if (!body_only)
    for (const Box& b : scene.boxes) best = std::min(best, detail::hit_box(d, b));
  return best;
}

/// Capsules and spheres of the posed body.
inline Scene body_scene(const BodyModel& model, const PosedBody& body) {
  using J = CocoJoint;
  Scene scene;
  auto pos = [&](J j) { return body.skeleton[std::size_t(index_of(j))].position; };
  const Vec3 mid_hip = 0.5 * (pos(J::kRightHip) + pos(J::kLeftHip));
  const Vec3 head = 0.5 * (pos(J::kRightEar) + pos(J::kLeftEar));
  scene.capsules.push_back({pos(J::kNeck), mid_hip, model.torso_radius});
  scene.capsules.push_back({pos(J::kRightHip), pos(J::kLeftHip), model.hip_radius});
  scene.capsules.push_back({pos(J::kNeck), head, model.neck_radius});
  for (const CapsuleDecl& c : model.capsules)
    scene.capsules.push_back({body.skeleton[std::size_t(c.a)].position,
                              body.skeleton[std::size_t(c.b)].position, c.radius});
  scene.spheres.push_back({head, model.head_radius});
  scene.body_capsules = scene.capsules.size();
  scene.body_spheres = scene.spheres.size();
  return scene;
}

// ---------------------------------------------------------------------------
// Scene configuration

struct SceneConfig {
  CameraIntrinsics intr{140.0, 140.0, 80.0, 60.0, 160, 120};
  /// σ(z) = noise_a + noise_b · z² (meters).
  double noise_a = 0.002;
  double noise_b = 0.001;
  double dropout = 0.0;
  double sigma_px = 2.0;
  double jitter_px = 0.0;
  /// Peak score of joints hidden behind something else.
  double occluded_confidence = 0.6;
  /// A joint counts as hidden when the rendered surface at its pixel is more
  /// than this far in front of it.
  double occlusion_margin = 0.2;
  double occlusion_fraction = 0.0;
  /// Occluder depth range in front of the occluded joint (meters).
  double occluder_gap_min = 0.35;
  double occluder_gap_max = 0.8;
  PoseSampling pose;

  void validate() const {
    intr.validate();
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(dropout) || !prob(occlusion_fraction) || !prob(pose.facing_away_fraction) ||
        !prob(occluded_confidence))
      throw InvalidArgument("probabilities must lie in [0, 1]");
    if (noise_a < 0.0 || noise_b < 0.0 || sigma_px <= 0.0 || jitter_px < 0.0 ||
        occlusion_margin < 0.0 || occluder_gap_min <= 0.0 || occluder_gap_max < occluder_gap_min)
      throw InvalidArgument("scene noise/size parameters out of range");
  }

  /// Every stochastic element switched off.
  SceneConfig noiseless() const {
    SceneConfig c = *this;
    c.noise_a = c.noise_b = 0.0;
    c.dropout = 0.0;
    c.jitter_px = 0.0;
    return c;
  }
};

inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
inline Vec3 json_vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw nlohmann::json::type_error::create(302, "expected [x,y,z]", &j);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"intrinsics", c.intr},
       {"noise_a", c.noise_a},
       {"noise_b", c.noise_b},
       {"dropout", c.dropout},
       {"sigma_px", c.sigma_px},
       {"jitter_px", c.jitter_px},
       {"occluded_confidence", c.occluded_confidence},
       {"occlusion_margin", c.occlusion_margin},
       {"occlusion_fraction", c.occlusion_fraction},
       {"occluder_gap_min", c.occluder_gap_min},
       {"occluder_gap_max", c.occluder_gap_max},
       {"facing_away_fraction", c.pose.facing_away_fraction},
       {"max_yaw", c.pose.max_yaw},
       {"max_tilt", c.pose.max_tilt},
       {"neck_min", vec_json(c.pose.neck_min)},
       {"neck_max", vec_json(c.pose.neck_max)}};
}

inline void from_json(const nlohmann::json& j, SceneConfig& c) {
  SceneConfig d;
  c.intr = j.contains("intrinsics") ? j.at("intrinsics").get<CameraIntrinsics>() : d.intr;
  c.noise_a = j.value("noise_a", d.noise_a);
  c.noise_b = j.value("noise_b", d.noise_b);
  c.dropout = j.value("dropout", d.dropout);
  c.sigma_px = j.value("sigma_px", d.sigma_px);
  c.jitter_px = j.value("jitter_px", d.jitter_px);
  c.occluded_confidence = j.value("occluded_confidence", d.occluded_confidence);
  c.occlusion_margin = j.value("occlusion_margin", d.occlusion_margin);
  c.occlusion_fraction = j.value("occlusion_fraction", d.occlusion_fraction);
  c.occluder_gap_min = j.value("occluder_gap_min", d.occluder_gap_min);
  c.occluder_gap_max = j.value("occluder_gap_max", d.occluder_gap_max);
  c.pose.facing_away_fraction = j.value("facing_away_fraction", d.pose.facing_away_fraction);
  c.pose.max_yaw = j.value("max_yaw", d.pose.max_yaw);
  c.pose.max_tilt = j.value("max_tilt", d.pose.max_tilt);
  c.pose.neck_min = j.contains("neck_min") ? json_vec(j.at("neck_min")) : d.pose.neck_min;
  c.pose.neck_max = j.contains("neck_max") ? json_vec(j.at("neck_max")) : d.pose.neck_max;
}

// ---------------------------------------------------------------------------
// Rendering

/// Noise-free ray-cast depth of every pixel (0 where nothing is hit).
inline DepthMap render_clean_depth(const Scene& scene, const CameraIntrinsics& intr) {
  DepthMap depth(intr.width, intr.height);
  for (int v = 0; v < intr.height; ++v)
    for (int u = 0; u < intr.width; ++u) {
      const double t = cast_ray(scene, intr, u, v);
      if (std::isfinite(t) && t < kMaxValidDepth) depth.at(u, v) = static_cast<float>(t);
    }
  return depth;
}

/// Ray-cast depth plus Gaussian noise σ(z) = a + b·z² and random holes.
inline DepthMap render_depth(const SceneConfig& cfg, const Scene& scene, std::mt19937_64& rng) {
  DepthMap depth = render_clean_depth(scene, cfg.intr);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const bool noisy = cfg.noise_a > 0.0 || cfg.noise_b > 0.0;
  for (float& d : depth.values()) {
    if (d == 0.0f) continue;
    if (noisy) {
      const double z = d;
      const double noisy_z = z + (cfg.noise_a + cfg.noise_b * z * z) * normal(rng);
      d = DepthMap::is_valid(static_cast<float>(noisy_z)) ? static_cast<float>(noisy_z) : 0.0f;
    }
    if (cfg.dropout > 0.0 && uni(rng) < cfg.dropout) d = 0.0f;
  }
  return depth;
}

/// Joints whose line of sight is blocked by a surface more than `margin`
/// in front of them.
inline std::vector<bool> occluded_joints(const Scene& scene, const CameraIntrinsics& intr,
                                         const Skeleton3D& skeleton, double margin) {
  std::vector<bool> out(skeleton.size(), false);
  for (std::size_t j = 0; j < skeleton.size(); ++j) {
    const Vec3& p = skeleton[j].position;
    if (!skeleton[j].valid || p.z() <= 0.0) continue;
    const PixelCoord px = project(p, intr);
    out[j] = cast_ray(scene, intr, px.u, px.v) < p.z() - margin;
  }
  return out;
}

struct Detections {
  ScoreMap2D scores;
  Keypoints2D keypoints;
};

/// One Gaussian blob per joint at its (optionally jittered) projection.
/// Off-screen joints produce an empty channel and a missing detection;
/// occluded joints get `occluded_confidence` as peak.
inline Detections synth_scores(const Skeleton3D& skeleton, const CameraIntrinsics& intr,
                               const SceneConfig& cfg, const std::vector<bool>& occluded,
                               std::mt19937_64& rng) {
  const int J = static_cast<int>(skeleton.size());
  Detections out{ScoreMap2D(intr.width, intr.height, J), Keypoints2D(std::size_t(J))};
  std::normal_distribution<double> normal(0.0, 1.0);
  const double inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma_px * cfg.sigma_px);
  const int reach = static_cast<int>(std::ceil(4.0 * cfg.sigma_px));
  for (int j = 0; j < J; ++j) {
    const Joint3D& joint = skeleton[std::size_t(j)];
    double ju = 0.0, jv = 0.0;
    if (cfg.jitter_px > 0.0) {
      ju = cfg.jitter_px * normal(rng);
      jv = cfg.jitter_px * normal(rng);
    }
    if (!joint.valid || !(joint.position.z() > 0.0)) continue;
    const PixelCoord p = project(joint.position, intr);
    const double u = p.u + ju, v = p.v + jv;
    if (!intr.contains(u, v)) continue;
    const double peak = j < int(occluded.size()) && occluded[std::size_t(j)] ? cfg.occluded_confidence : 1.0;
    const int u0 = static_cast<int>(std::lround(u)), v0 = static_cast<int>(std::lround(v));
    for (int y = std::max(0, v0 - reach); y <= std::min(intr.height - 1, v0 + reach); ++y)
      for (int x = std::max(0, u0 - reach); x <= std::min(intr.width - 1, u0 + reach); ++x) {
        const double d2 = (x - u) * (x - u) + (y - v) * (y - v);
        out.scores.at(x, y, j) = static_cast<float>(peak * std::exp(-d2 * inv_two_sigma2));
      }
    out.keypoints[std::size_t(j)] = {u, v, peak, peak > 0.0};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Samples and datasets

struct Sample {
  std::string id;
  CameraIntrinsics intr;
  DepthMap depth;
  ScoreMap2D scores;
  Keypoints2D detections;
  Skeleton3D gt;
  std::vector<bool> joint_occluded;
  std::optional<HandNormal> left_normal;
  std::optional<HandNormal> right_normal;
  bool occluded = false;
  bool facing_away = false;
  std::uint64_t seed = 0;
};

/// Independent per-sample seed so that samples can be generated in any order.
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::array<CocoJoint, 10> kOccludableJoints = {
    CocoJoint::kRightWrist, CocoJoint::kLeftWrist, CocoJoint::kRightElbow, CocoJoint::kLeftElbow,
    CocoJoint::kRightHip,   CocoJoint::kLeftHip,   CocoJoint::kRightKnee,  CocoJoint::kLeftKnee,
    CocoJoint::kRightAnkle, CocoJoint::kLeftAnkle};

/// Places a box on the line of sight of a random limb joint, keeping the
/// neck visible. Returns false if no placement satisfied that.
inline bool place_occluder(Scene& scene, const CameraIntrinsics& intr, const Skeleton3D& skeleton,
                           const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const Vec3 neck = skeleton[std::size_t(index_of(CocoJoint::kNeck))].position;
  const PixelCoord neck_px = project(neck, intr);
  for (int attempt = 0; attempt < 16; ++attempt) {
    const CocoJoint target = kOccludableJoints[std::size_t(uni(rng) * kOccludableJoints.size()) %
                                               kOccludableJoints.size()];
    const Vec3 p = skeleton[std::size_t(index_of(target))].position;
    const double gap = cfg.occluder_gap_min + (cfg.occluder_gap_max - cfg.occluder_gap_min) * uni(rng);
    Box box;
    box.half_extent = {0.12 + 0.08 * uni(rng), 0.12 + 0.08 * uni(rng), 0.05 + 0.05 * uni(rng)};
    const double z = p.z() - gap - box.half_extent.z();
    if (z - box.half_extent.z() <= 0.3) continue;
    box.pose.translation = p * (z / p.z());
    if (std::isfinite(detail::hit_box(Vec3((neck_px.u - intr.cx) / intr.fx,
                                           (neck_px.v - intr.cy) / intr.fy, 1.0),
                                      box)))
      continue;
    scene.boxes.push_back(box);
    return true;
  }
  return false;
}

/// Generates one sample from its own seed.
inline Sample generate_sample(const SceneConfig& cfg, const BodyModel& model, std::uint64_t seed,
                              std::string id = {}) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::uint64_t pose_seed = rng();
  PosedBody body = sample_pose(pose_seed, model, cfg.pose);
  Scene scene = body_scene(model, body);

  Sample s;
  s.id = std::move(id);
  s.seed = seed;
  s.intr = cfg.intr;
  s.facing_away = body.facing_away;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  if (uni(rng) < cfg.occlusion_fraction) s.occluded = place_occluder(scene, cfg.intr, body.skeleton, cfg, rng);

  s.gt = body.skeleton;
  s.depth = render_depth(cfg, scene, rng);
  s.joint_occluded = occluded_joints(scene, cfg.intr, s.gt, cfg.occlusion_margin);
  Detections det = synth_scores(s.gt, cfg.intr, cfg, s.joint_occluded, rng);
  s.scores = std::move(det.scores);
  s.detections = std::move(det.keypoints);

  auto normal = [](const HandKeypoints& h, HandSide side) -> std::optional<HandNormal> {
    try {
      return hand_normal_from_keypoints(h.wrist, h.index_base, h.pinky_base, side);
    } catch (const DegenerateHand&) {
      return std::nullopt;
    }
  };
  s.left_normal = normal(body.left_hand, HandSide::kLeft);
  s.right_normal = normal(body.right_hand, HandSide::kRight);
  return s;
}

inline std::string sample_id(std::size_t index) {
  std::string s = std::to_string(index);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

inline std::vector<Sample> generate_samples(const SceneConfig& cfg, std::uint64_t seed,
                                            std::size_t n, const BodyModel& model = BodyModel::standard()) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(generate_sample(cfg, model, sample_seed(seed, i), sample_id(i)));
  return out;
}

}  // namespace rgbdpose::synth
