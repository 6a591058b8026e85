#pragma once

#include <cstdint>
#include <vector>

#include "gridpose/geometry.hpp"

namespace gridpose {

struct Correspondence {
  Vec3 object_point = Vec3::Zero();  // meters, model frame
  Vec2 image_point = Vec2::Zero();   // pixels
};

struct CorrespondenceSet {
  std::vector<Correspondence> points;
  CameraIntrinsics camera;
};

// Control-point PnP with a reprojection refinement pass appended. Handles
// planar point sets through a reduced three-control-point system (detected
// by covariance rank) and enforces cheirality. Throws InsufficientPoints for
// fewer than 4 correspondences and SingularConfiguration for collinear or
// coincident configurations (and when no pose places the points in front of
// the camera).
Pose epnp(const CorrespondenceSet& correspondences);

struct RansacConfig {
  int max_iterations = 200;
  double inlier_threshold_px = 3.0;
  int min_inliers = 4;
  std::uint64_t rng_seed = 0;
};

struct RansacResult {
  Pose pose;
  std::vector<bool> inliers;  // per input correspondence, from the final pose
};

// Minimal 4-point hypotheses scored by reprojection distance; the best
// consensus set is refit with the full solver. Deterministic for a given
// seed. Throws NoConsensus when no sample reaches min_inliers.
RansacResult ransac_pnp(const CorrespondenceSet& correspondences,
                        const RansacConfig& config = {});

}  // namespace gridpose
