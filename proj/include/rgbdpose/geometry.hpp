#pragma once

// Pinhole camera model, depth maps and depth registration between sensors.
//
// Conventions: pixel (u, v) has its center at integer coordinates, u runs
// along image columns and v along rows. Camera frame is x right, y down,
// z forward. Depth values are z-depth in meters; 0 marks a missing value.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "rgbdpose/errors.hpp"

namespace rgbdpose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kMaxValidDepth = 20.0;

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
           cy >= 0.0 && cy < height;
  }
  void validate() const {
    if (!valid()) throw InvalidArgument("camera intrinsics out of range");
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  bool contains(double u, double v) const {
    return u > -0.5 && v > -0.5 && u < width - 0.5 && v < height - 0.5;
  }
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  /// (*this) ∘ other: applies `other` first.
  RigidTransform compose(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  bool valid(double tol = 1e-9) const {
    const Mat3 gram = rotation.transpose() * rotation;
    return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
  }
  void validate() const {
    if (!valid()) throw InvalidArgument("rotation is not a proper orthonormal matrix");
  }
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
  std::optional<double> confidence;
};

class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw InvalidArgument("negative depth map size");
    values_.assign(static_cast<std::size_t>(width) * height, 0.0f);
  }
  DepthMap(int width, int height, std::vector<float> values) : width_(width), height_(height),
                                                               values_(std::move(values)) {
    if (width < 0 || height < 0 ||
        values_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw InvalidArgument("depth map size does not match its dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  float at(int u, int v) const { return values_[index(u, v)]; }
  float& at(int u, int v) { return values_[index(u, v)]; }
  bool valid_at(int u, int v) const { return is_valid(at(u, v)); }

  static bool is_valid(float d) { return d > 0.0f && d < static_cast<float>(kMaxValidDepth); }

  const std::vector<float>& values() const { return values_; }
  std::vector<float>& values() { return values_; }

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count_if(values_.begin(), values_.end(), is_valid));
  }

  bool operator==(const DepthMap&) const = default;

 private:
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> values_;
};

inline PixelCoord project(const Vec3& point, const CameraIntrinsics& intr) {
  if (!(point.z() > 0.0)) throw DegenerateProjection("point is not in front of the camera");
  return {intr.fx * point.x() / point.z() + intr.cx, intr.fy * point.y() / point.z() + intr.cy,
          std::nullopt};
}

/// d · K⁻¹ · (u, v, 1)ᵀ
inline Vec3 backproject(const PixelCoord& p, double depth, const CameraIntrinsics& intr) {
  if (!(depth > 0.0)) throw InvalidDepth("depth must be positive");
  return {(p.u - intr.cx) / intr.fx * depth, (p.v - intr.cy) / intr.fy * depth, depth};
}

/// Re-renders `src` into the destination camera. Every valid source pixel is
/// lifted to 3D, moved with `src_to_dst` and splatted to the nearest
/// destination pixel; the closest depth wins. The result is sparse.
inline DepthMap warp_depth(const DepthMap& src, const CameraIntrinsics& intr_src,
                           const RigidTransform& src_to_dst, const CameraIntrinsics& intr_dst) {
  DepthMap dst(intr_dst.width, intr_dst.height);
  for (int v = 0; v < src.height(); ++v) {
    for (int u = 0; u < src.width(); ++u) {
      const float d = src.at(u, v);
      if (!DepthMap::is_valid(d)) continue;
      const Vec3 p = src_to_dst.apply(backproject({double(u), double(v), {}}, d, intr_src));
      if (!(p.z() > 0.0)) continue;
      const PixelCoord q = project(p, intr_dst);
      const long du = std::lround(q.u);
      const long dv = std::lround(q.v);
      if (du < 0 || dv < 0 || du >= intr_dst.width || dv >= intr_dst.height) continue;
      const auto z = static_cast<float>(p.z());
      if (!DepthMap::is_valid(z)) continue;
      float& slot = dst.at(static_cast<int>(du), static_cast<int>(dv));
      if (slot == 0.0f || z < slot) slot = z;
    }
  }
  return dst;
}

inline constexpr int kDefaultDepthSearchRadius = 25;

/// Median of the (up to) three valid depth pixels closest to `p`.
///
/// Pixels are visited in square rings of growing Chebyshev radius around the
/// rounded position; candidates are ranked by Euclidean distance with ties
/// broken by row-major order. With two candidates the smaller depth (lower
/// median) is returned so the result is always a value present in `depth`.
inline double robust_depth_at(const DepthMap& depth, const PixelCoord& p,
                              int radius = kDefaultDepthSearchRadius) {
  struct Candidate {
    double dist2;
    long linear;
    float value;
  };
  if (!std::isfinite(p.u) || !std::isfinite(p.v))
    throw NoDepthAvailable("query pixel is not finite");
  const long cu = std::lround(p.u);
  const long cv = std::lround(p.v);
  const double radius2 = double(radius) * radius;
  std::vector<Candidate> found;
  auto consider = [&](long u, long v) {
    if (u < 0 || v < 0 || u >= depth.width() || v >= depth.height()) return;
    const float d = depth.at(static_cast<int>(u), static_cast<int>(v));
    if (!DepthMap::is_valid(d)) return;
    const double du = double(u) - p.u;
    const double dv = double(v) - p.v;
    const double dist2 = du * du + dv * dv;
    if (dist2 > radius2) return;
    found.push_back({dist2, v * depth.width() + u, d});
  };
  auto ranked = [](const Candidate& a, const Candidate& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.linear < b.linear;
  };
  // |p - rounded p| <= 0.5 per axis, so every pixel of ring r is at least
  // r - 0.5 pixels away from p.
  const long max_ring = radius + 1;
  for (long r = 0; r <= max_ring; ++r) {
    if (found.size() >= 3) {
      std::partial_sort(found.begin(), found.begin() + 3, found.end(), ranked);
      const double lower = double(r) - 0.5;
      if (lower > 0.0 && lower * lower > found[2].dist2) break;
    }
    if (r == 0) {
      consider(cu, cv);
      continue;
    }
    for (long u = cu - r; u <= cu + r; ++u) {
      consider(u, cv - r);
      consider(u, cv + r);
    }
    for (long v = cv - r + 1; v <= cv + r - 1; ++v) {
      consider(cu - r, v);
      consider(cu + r, v);
    }
  }
  if (found.empty()) throw NoDepthAvailable("no valid depth within search radius");
  std::sort(found.begin(), found.end(), ranked);
  const std::size_t n = std::min<std::size_t>(found.size(), 3);
  std::array<float, 3> values{};
  for (std::size_t i = 0; i < n; ++i) values[i] = found[i].value;
  std::sort(values.begin(), values.begin() + static_cast<long>(n));
  return n == 3 ? values[1] : values[0];
}

}  // namespace rgbdpose
