#pragma once

// Person-centered voxelization: occupancy grids, tiled 2D score volumes,
// Gaussian target volumes, argmax lifting and the projected/volumetric
// fusion rule.
//
// Volumes are stored channel-major with x fastest:
//   index = ((j * K + z) * K + y) * K + x
// Grid axes are aligned with the color camera; voxel i covers the half-open
// interval [center + (i - K/2) * res, center + (i - K/2 + 1) * res).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "rgbdpose/errors.hpp"
#include "rgbdpose/geometry.hpp"
#include "rgbdpose/skeleton.hpp"

namespace rgbdpose {

struct GridSpec {
  Vec3 center = Vec3::Zero();
  int K = 64;
  double resolution = 0.03;

  bool valid() const { return K >= 2 && K % 2 == 0 && resolution > 0.0 && center.allFinite(); }
  void validate() const {
    if (!valid()) throw InvalidArgument("grid needs even K >= 2 and positive resolution");
  }
  double side() const { return K * resolution; }
  std::size_t voxel_count() const { return std::size_t(K) * K * K; }
  std::size_t linear(int x, int y, int z) const {
    return (std::size_t(z) * K + std::size_t(y)) * K + std::size_t(x);
  }
};

using VoxelIndex = std::array<int, 3>;

/// Voxel containing `point`; throws OutOfGrid for points outside the cube.
inline VoxelIndex world_to_voxel(const Vec3& point, const GridSpec& spec) {
  VoxelIndex idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((point[a] - spec.center[a]) / spec.resolution + spec.K / 2);
    if (!(f >= 0.0 && f < spec.K)) throw OutOfGrid("point lies outside the voxel cube");
    idx[static_cast<std::size_t>(a)] = static_cast<int>(f);
  }
  return idx;
}

inline std::optional<VoxelIndex> try_world_to_voxel(const Vec3& point, const GridSpec& spec) {
  VoxelIndex idx{};
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((point[a] - spec.center[a]) / spec.resolution + spec.K / 2);
    if (!(f >= 0.0 && f < spec.K)) return std::nullopt;
    idx[static_cast<std::size_t>(a)] = static_cast<int>(f);
  }
  return idx;
}

/// Center of voxel `idx`.
inline Vec3 voxel_to_world(const VoxelIndex& idx, const GridSpec& spec) {
  Vec3 p;
  for (int a = 0; a < 3; ++a)
    p[a] = spec.center[a] + (idx[static_cast<std::size_t>(a)] + 0.5 - spec.K / 2) * spec.resolution;
  return p;
}

struct VoxelGrid {
  GridSpec spec;
  std::vector<std::uint8_t> occupancy;

  explicit VoxelGrid(const GridSpec& s) : spec(s), occupancy(s.voxel_count(), 0) {}

  std::uint8_t at(int x, int y, int z) const { return occupancy[spec.linear(x, y, z)]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto o : occupancy) n += o;
    return n;
  }
};

/// Per-pixel, per-joint detector likelihoods, channel-last:
///   index = (v * width + u) * joints + j
struct ScoreMap2D {
  int width = 0;
  int height = 0;
  int joints = 0;
  std::vector<float> values;

  ScoreMap2D() = default;
  ScoreMap2D(int w, int h, int j) : width(w), height(h), joints(j),
                                    values(std::size_t(w) * h * j, 0.0f) {}

  float at(int u, int v, int j) const { return values[index(u, v, j)]; }
  float& at(int u, int v, int j) { return values[index(u, v, j)]; }
  std::size_t index(int u, int v, int j) const {
    return (std::size_t(v) * width + std::size_t(u)) * joints + std::size_t(j);
  }

  /// Bilinear sample with zero padding outside the image.
  double sample(double u, double v, int j) const {
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const double au = u - fu;
    const double av = v - fv;
    if (fu < -1.0 || fv < -1.0 || fu >= width || fv >= height) return 0.0;
    const int u0 = static_cast<int>(fu);
    const int v0 = static_cast<int>(fv);
    auto px = [&](int uu, int vv) -> double {
      if (uu < 0 || vv < 0 || uu >= width || vv >= height) return 0.0;
      return at(uu, vv, j);
    };
    return (1 - au) * (1 - av) * px(u0, v0) + au * (1 - av) * px(u0 + 1, v0) +
           (1 - au) * av * px(u0, v0 + 1) + au * av * px(u0 + 1, v0 + 1);
  }
};

struct ScoreVolume {
  GridSpec spec;
  int joints = 0;
  std::vector<float> values;

  ScoreVolume(const GridSpec& s, int j) : spec(s), joints(j), values(s.voxel_count() * j, 0.0f) {}

  std::size_t index(int j, int x, int y, int z) const {
    return std::size_t(j) * spec.voxel_count() + spec.linear(x, y, z);
  }
  float at(int j, int x, int y, int z) const { return values[index(j, x, y, z)]; }
  float& at(int j, int x, int y, int z) { return values[index(j, x, y, z)]; }
  const float* channel(int j) const { return values.data() + std::size_t(j) * spec.voxel_count(); }
  float* channel(int j) { return values.data() + std::size_t(j) * spec.voxel_count(); }
};

/// Neck back-projected with the robust depth around it; the cube center.
inline Vec3 compute_reference(const DepthMap& depth, const PixelCoord& neck,
                              const CameraIntrinsics& intr) {
  try {
    return backproject(neck, robust_depth_at(depth, neck), intr);
  } catch (const NoDepthAvailable& e) {
    throw ReferenceUnavailable(e.what());
  }
}

inline VoxelGrid build_occupancy(const DepthMap& depth, const CameraIntrinsics& intr,
                                 const GridSpec& spec) {
  spec.validate();
  VoxelGrid grid(spec);
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const float d = depth.at(u, v);
      if (!DepthMap::is_valid(d)) continue;
      const auto idx = try_world_to_voxel(backproject({double(u), double(v), {}}, d, intr), spec);
      if (idx) grid.occupancy[spec.linear((*idx)[0], (*idx)[1], (*idx)[2])] = 1;
    }
  }
  return grid;
}

/// Replicates the score maps along the grid's z axis. Each (x, y) column is
/// sampled where its center, placed at the depth of the grid center, projects.
inline ScoreVolume tile_scores(const ScoreMap2D& scores, const GridSpec& spec,
                               const CameraIntrinsics& intr) {
  spec.validate();
  if (!(spec.center.z() > 0.0)) throw DegenerateProjection("grid center behind the camera");
  ScoreVolume out(spec, scores.joints);
  const int K = spec.K;
  std::vector<double> column(std::size_t(scores.joints));
  for (int y = 0; y < K; ++y) {
    for (int x = 0; x < K; ++x) {
      Vec3 c = voxel_to_world({x, y, K / 2}, spec);
      c.z() = spec.center.z();
      const PixelCoord p = project(c, intr);
      for (int j = 0; j < scores.joints; ++j)
        column[std::size_t(j)] = scores.sample(p.u, p.v, j);
      for (int j = 0; j < scores.joints; ++j) {
        const auto value = static_cast<float>(column[std::size_t(j)]);
        for (int z = 0; z < K; ++z) out.at(j, x, y, z) = value;
      }
    }
  }
  return out;
}

inline constexpr double kDefaultSigmaVoxels = 2.0;
inline constexpr double kDefaultFusionThreshold = 0.25;

struct GtVolume {
  ScoreVolume volume;
  /// Per joint: the GT point was valid but outside the cube.
  std::vector<bool> out_of_grid;
};

/// Target volumes: an isotropic Gaussian (voxel units) centered on the voxel
/// containing each valid GT joint, peak exactly 1.
inline GtVolume make_gt_volume(const Skeleton3D& gt, const GridSpec& spec, double sigma_vox) {
  if (!(sigma_vox > 0.0)) throw InvalidArgument("sigma must be positive");
  spec.validate();
  const int J = static_cast<int>(gt.size());
  GtVolume result{ScoreVolume(spec, J), std::vector<bool>(std::size_t(J), false)};
  const int K = spec.K;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma_vox * sigma_vox);
  const auto n = static_cast<std::size_t>(K);
  std::vector<double> gx(n), gy(n), gz(n);
  for (int j = 0; j < J; ++j) {
    const Joint3D& joint = gt[std::size_t(j)];
    if (!joint.valid) continue;
    const auto idx = try_world_to_voxel(joint.position, spec);
    if (!idx) {
      result.out_of_grid[std::size_t(j)] = true;
      continue;
    }
    // Separable: exp(-(dx²+dy²+dz²)/2σ²) = gx·gy·gz
    for (int i = 0; i < K; ++i) {
      const double dx = i - (*idx)[0], dy = i - (*idx)[1], dz = i - (*idx)[2];
      gx[std::size_t(i)] = std::exp(-dx * dx * inv_two_sigma2);
      gy[std::size_t(i)] = std::exp(-dy * dy * inv_two_sigma2);
      gz[std::size_t(i)] = std::exp(-dz * dz * inv_two_sigma2);
    }
    float* ch = result.volume.channel(j);
    for (int z = 0; z < K; ++z)
      for (int y = 0; y < K; ++y)
        for (int x = 0; x < K; ++x)
          ch[spec.linear(x, y, z)] =
              static_cast<float>(gx[std::size_t(x)] * gy[std::size_t(y)] * gz[std::size_t(z)]);
  }
  return result;
}

/// Argmax of each channel mapped back to world coordinates. Ties resolve to
/// the smallest linear index; all-zero channels yield invalid joints.
/// `refine` fits a parabola through the peak and its neighbors per axis.
inline Skeleton3D argmax_world(const ScoreVolume& volume, bool refine = false) {
  const GridSpec& spec = volume.spec;
  const int K = spec.K;
  const std::size_t n = spec.voxel_count();
  Skeleton3D out(std::size_t(volume.joints));
  for (int j = 0; j < volume.joints; ++j) {
    const float* ch = volume.channel(j);
    std::size_t best = 0;
    bool any_nonzero = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(ch[i])) throw NumericalError("non-finite score volume");
      any_nonzero = any_nonzero || ch[i] != 0.0f;
      if (ch[i] > ch[best]) best = i;
    }
    Joint3D& joint = out[std::size_t(j)];
    if (!any_nonzero) continue;
    const VoxelIndex idx{int(best % K), int((best / K) % K), int(best / (std::size_t(K) * K))};
    joint.position = voxel_to_world(idx, spec);
    joint.confidence = ch[best];
    joint.valid = true;
    if (!refine) continue;
    for (int a = 0; a < 3; ++a) {
      const int c = idx[std::size_t(a)];
      if (c == 0 || c == K - 1) continue;
      VoxelIndex lo = idx, hi = idx;
      lo[std::size_t(a)] = c - 1;
      hi[std::size_t(a)] = c + 1;
      const double fm = ch[spec.linear(lo[0], lo[1], lo[2])];
      const double f0 = ch[best];
      const double fp = ch[spec.linear(hi[0], hi[1], hi[2])];
      const double denom = fm - 2.0 * f0 + fp;
      if (denom < 0.0) {
        const double offset = std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5);
        joint.position[a] += offset * spec.resolution;
      }
    }
  }
  return out;
}

/// Combines the volumetric estimate with the 2D detections. Confident
/// detections (score >= tau) are lifted along their camera ray to the depth
/// predicted by the volume; the rest keep the volumetric estimate.
inline Skeleton3D fuse(const Skeleton3D& volumetric, const Keypoints2D& detections,
                       const CameraIntrinsics& intr, double tau = kDefaultFusionThreshold) {
  Skeleton3D out = volumetric;
  for (std::size_t j = 0; j < out.size(); ++j) {
    Joint3D& joint = out[j];
    if (!joint.valid || j >= detections.size()) continue;
    const Keypoint2D& det = detections[j];
    if (!det.valid || det.confidence < tau || !(joint.position.z() > 0.0)) continue;
    joint.position = backproject(det.pixel(), joint.position.z(), intr);
  }
  return out;
}

}  // namespace rgbdpose
