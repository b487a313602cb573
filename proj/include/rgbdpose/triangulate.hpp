#pragma once

// Multi-view DLT triangulation of keypoints, ground-truth skeleton assembly
// with outlier view rejection, and hand normals.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/SVD>

#include "rgbdpose/errors.hpp"
#include "rgbdpose/geometry.hpp"
#include "rgbdpose/skeleton.hpp"

namespace rgbdpose {

struct ViewObservation {
  CameraIntrinsics intr;
  RigidTransform pose_world_to_cam;
  Keypoints2D detections;
};

struct Triangulation {
  Vec3 point = Vec3::Zero();
  /// RMS reprojection error over the contributing views (pixels).
  double residual = 0.0;
  std::vector<double> view_errors;
};

namespace detail {

inline bool observes(const ViewObservation& v, int joint) {
  if (joint < 0 || std::size_t(joint) >= v.detections.size()) return false;
  const Keypoint2D& k = v.detections[std::size_t(joint)];
  return k.valid && k.confidence > 0.0 && std::isfinite(k.u) && std::isfinite(k.v);
}

}  // namespace detail

/// Homogeneous least squares over normalized image coordinates; each view's
/// two rows are scaled by its detection confidence. The unknown lives in a
/// frame centered on the mean camera center, rotated like the first camera
/// and scaled by the camera spread, so the result moves exactly with any
/// rigid motion of the whole rig.
inline Triangulation triangulate_dlt(std::span<const ViewObservation> views, int joint) {
  std::vector<const ViewObservation*> used;
  for (const auto& v : views)
    if (detail::observes(v, joint)) used.push_back(&v);
  if (used.size() < 2) throw InsufficientViews("joint " + std::to_string(joint) + " seen in " +
                                               std::to_string(used.size()) + " view(s)");

  Vec3 mean = Vec3::Zero();
  for (const ViewObservation* v : used) {
    v->pose_world_to_cam.validate();
    v->intr.validate();
    mean += v->pose_world_to_cam.inverse().translation;
  }
  mean /= double(used.size());
  double spread = 0.0;
  for (const ViewObservation* v : used) spread += (v->pose_world_to_cam.inverse().translation - mean).squaredNorm();
  spread = std::sqrt(spread / double(used.size()));
  if (!(spread > 1e-12)) spread = 1.0;
  const Mat3 axes = used.front()->pose_world_to_cam.rotation.transpose();

  // world point = mean + spread * axes * y
  Eigen::MatrixXd A(2 * used.size(), 4);
  for (std::size_t i = 0; i < used.size(); ++i) {
    const ViewObservation& v = *used[i];
    const Keypoint2D& k = v.detections[std::size_t(joint)];
    const double xn = (k.u - v.intr.cx) / v.intr.fx;
    const double yn = (k.v - v.intr.cy) / v.intr.fy;
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = spread * v.pose_world_to_cam.rotation * axes;
    P.col(3) = v.pose_world_to_cam.apply(mean);
    A.row(Eigen::Index(2 * i)) = k.confidence * (xn * P.row(2) - P.row(0));
    A.row(Eigen::Index(2 * i + 1)) = k.confidence * (yn * P.row(2) - P.row(1));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  // A unique solution needs a one-dimensional null space.
  if (!(s(0) > 0.0) || s(2) <= 1e-10 * s(0)) throw DegenerateGeometry("rays do not intersect in a unique point");
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) <= 1e-12 * X.head<3>().norm()) throw DegenerateGeometry("point at infinity");

  Triangulation out;
  out.point = mean + spread * axes * (X.head<3>() / X(3));
  double sum = 0.0;
  for (const ViewObservation* v : used) {
    const Vec3 pc = v->pose_world_to_cam.apply(out.point);
    if (!(pc.z() > 0.0)) throw DegenerateGeometry("triangulated point behind a camera");
    const PixelCoord p = project(pc, v->intr);
    const Keypoint2D& k = v->detections[std::size_t(joint)];
    const double e = std::hypot(p.u - k.u, p.v - k.v);
    out.view_errors.push_back(e);
    sum += e * e;
  }
  out.residual = std::sqrt(sum / double(used.size()));
  return out;
}

inline constexpr double kDefaultResidualMax = 5.0;

using MultiViewFrame = std::vector<ViewObservation>;

/// Triangulates every joint; while the residual exceeds `residual_max` the
/// worst view is dropped as long as two views remain. Joints that never
/// settle are marked invalid. Output is in the world frame.
inline Skeleton3D triangulate_frame(const MultiViewFrame& frame, int joints,
                                    double residual_max = kDefaultResidualMax) {
  Skeleton3D out(std::size_t(std::max(joints, 0)));
  for (int j = 0; j < joints; ++j) {
    std::vector<ViewObservation> views;
    for (const auto& v : frame)
      if (detail::observes(v, j)) views.push_back(v);
    while (views.size() >= 2) {
      try {
        const Triangulation t = triangulate_dlt(views, j);
        if (t.residual <= residual_max) {
          out[std::size_t(j)] = {t.point, true, 1.0};
          break;
        }
        const auto worst = std::max_element(t.view_errors.begin(), t.view_errors.end());
        views.erase(views.begin() + (worst - t.view_errors.begin()));
      } catch (const DegenerateGeometry&) {
        break;
      }
    }
  }
  return out;
}

inline std::vector<Skeleton3D> build_gt_skeletons(std::span<const MultiViewFrame> frames, int joints,
                                                  double residual_max = kDefaultResidualMax) {
  if (!(residual_max >= 0.0)) throw InvalidArgument("residual_max must be >= 0");
  std::vector<Skeleton3D> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(triangulate_frame(f, joints, residual_max));
  return out;
}

/// Palm normal from three hand keypoints; the cross-product order is swapped
/// for the left hand so both normals leave the palm.
inline HandNormal hand_normal_from_keypoints(const Vec3& wrist, const Vec3& index_base,
                                             const Vec3& pinky_base, HandSide side) {
  const Vec3 a = index_base - wrist;
  const Vec3 b = pinky_base - wrist;
  Vec3 n = side == HandSide::kRight ? a.cross(b) : b.cross(a);
  const double len = n.norm();
  if (!(len > 1e-12 * std::max(1.0, a.norm() * b.norm()))) throw DegenerateHand("hand keypoints are collinear");
  return {n / len, side};
}

/// Angle between two unit vectors in degrees.
inline double angular_error(const Vec3& a, const Vec3& b) {
  if (std::abs(a.norm() - 1.0) > 1e-6 || std::abs(b.norm() - 1.0) > 1e-6)
    throw InvalidArgument("angular_error expects unit vectors");
  return std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace rgbdpose
