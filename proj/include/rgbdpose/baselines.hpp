#pragma once

// Comparison methods: lifting 2D detections with the depth found around
// them, and scale/translation alignment of normalized 3D predictions.

#include <cmath>
#include <vector>

#include "rgbdpose/errors.hpp"
#include "rgbdpose/geometry.hpp"
#include "rgbdpose/skeleton.hpp"

namespace rgbdpose {

/// Back-projects every detection with the robust depth at its pixel.
/// Detections without depth nearby become invalid joints.
inline Skeleton3D naive_lift(const Keypoints2D& detections, const DepthMap& depth,
                             const CameraIntrinsics& intr, int radius = kDefaultDepthSearchRadius) {
  Skeleton3D out(detections.size());
  for (std::size_t j = 0; j < detections.size(); ++j) {
    const Keypoint2D& k = detections[j];
    if (!k.valid) continue;
    try {
      const double z = robust_depth_at(depth, k.pixel(), radius);
      out[j] = {backproject(k.pixel(), z, intr), true, k.confidence};
    } catch (const NoDepthAvailable&) {
    }
  }
  return out;
}

struct AlignmentResult {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();
  Skeleton3D aligned;
  /// RMS distance over the joints used for the fit (meters).
  double residual = 0.0;
};

/// Least-squares s, t minimizing Σ‖s·p_i + t − g_i‖² over joints valid in
/// both skeletons. Negative scales are returned as found.
inline AlignmentResult align_similarity(const Skeleton3D& pred, const Skeleton3D& gt) {
  if (pred.size() != gt.size()) throw InvalidArgument("skeletons have different joint counts");
  std::vector<std::size_t> common;
  for (std::size_t j = 0; j < pred.size(); ++j)
    if (pred[j].valid && gt[j].valid) common.push_back(j);
  if (common.size() < 2) throw InsufficientCorrespondences("fewer than two joints valid in both");

  Vec3 mp = Vec3::Zero(), mg = Vec3::Zero();
  for (std::size_t j : common) {
    mp += pred[j].position;
    mg += gt[j].position;
  }
  mp /= double(common.size());
  mg /= double(common.size());
  double num = 0.0, den = 0.0;
  for (std::size_t j : common) {
    const Vec3 p = pred[j].position - mp;
    num += p.dot(gt[j].position - mg);
    den += p.squaredNorm();
  }
  if (!(den > 0.0)) throw DegenerateInput("prediction has zero spread");

  AlignmentResult r;
  r.scale = num / den;
  r.translation = mg - r.scale * mp;
  r.aligned = pred;
  for (auto& joint : r.aligned.joints)
    if (joint.valid) joint.position = r.scale * joint.position + r.translation;
  double sum = 0.0;
  for (std::size_t j : common) sum += (r.aligned[j].position - gt[j].position).squaredNorm();
  r.residual = std::sqrt(sum / double(common.size()));
  return r;
}

}  // namespace rgbdpose
