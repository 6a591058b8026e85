#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "gridpose/encoding.hpp"
#include "gridpose/geometry.hpp"
#include "gridpose/mesh.hpp"

namespace gridpose {

// Knee of the smoothed-L1 penalty shared by every regression loss.
inline constexpr double kDefaultHuberBeta = 1.0 / 9.0;
inline constexpr double kFocalAlpha = 0.25;
inline constexpr double kFocalGamma = 2.0;
inline constexpr double kProbabilityClamp = 1e-7;

// Smoothed L1: 0.5 r^2 / beta inside the knee, |r| - 0.5 beta outside.
struct HuberResult {
  double value = 0.0;
  double derivative = 0.0;  // d value / d residual
};
HuberResult huber(double residual, double beta = kDefaultHuberBeta);

// Focal classification loss over per-location class probabilities
// (rows = locations, cols = classes; targets one-hot). Probabilities are
// clamped away from {0, 1} by kProbabilityClamp; the sum is normalized by
// the number of positive locations (at least 1). Gradient is with respect
// to the probabilities.
struct FocalResult {
  double value = 0.0;
  Eigen::MatrixXd grad;
};
FocalResult focal_loss(const Eigen::MatrixXd& probabilities,
                       const Eigen::MatrixXd& one_hot,
                       double alpha = kFocalAlpha, double gamma = kFocalGamma);

// Class-balanced regression: per-class groups of (prediction, target) vector
// pairs. Each pair contributes the mean elementwise huber over its
// components; pairs are averaged within their class and classes with at
// least one pair are averaged uniformly, so duplicating a class's locations
// leaves the value unchanged.
struct RegressionBatch {
  // classes[i] = all (prediction, target) pairs of class i; may be empty.
  std::vector<std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>> classes;
};
struct RegressionResult {
  double value = 0.0;
  // grads[i][j] = d value / d prediction of pair j in class i
  std::vector<std::vector<Eigen::VectorXd>> grads;
};
RegressionResult class_normalized_regression(const RegressionBatch& batch,
                                             double beta = kDefaultHuberBeta);

// Symmetry-aware keypoint loss for one instance: the class-normalized
// regression of the predicted standardized corners against each
// symmetry-transformed target, minimized over the symmetry set. Ties pick
// the lowest index; the winning index is reported so the pose losses can be
// conditioned on the same transform.
struct SymmetryMinResult {
  double value = 0.0;
  std::size_t selected_symmetry = 0;
  std::vector<Eigen::VectorXd> grads;  // per prediction, winning branch
};
SymmetryMinResult symmetry_min_keypoint_loss(
    const std::vector<Eigen::VectorXd>& predictions,
    const std::function<std::vector<Eigen::VectorXd>(std::size_t)>&
        targets_for_symmetry,
    std::size_t symmetry_count, double beta = kDefaultHuberBeta);

// Direct pose losses against ground truth transformed by the symmetry
// selected in the keypoint loss (no further minimization).
struct RotTraResult {
  double rot_value = 0.0;
  double tra_value = 0.0;
  Vec6 rot_grad = Vec6::Zero();
  Vec3 tra_grad = Vec3::Zero();
};
RotTraResult rot_tra_loss(const Vec6& pred_rot6d, const Vec3& pred_translation,
                          const Pose& gt_pose, std::size_t selected_symmetry,
                          const SymmetrySet& symmetries,
                          double beta = kDefaultHuberBeta);

// Gradient of a scalar loss with respect to the direct pose parameterization.
struct PoseParamGrad {
  Vec6 rot6d = Vec6::Zero();
  Vec3 translation = Vec3::Zero();
};

// Reprojection supervision: cuboid corners projected under the predicted
// pose against given target pixels (mean componentwise huber over the 16
// coordinates). Gradients flow through orthonormalization and projection.
struct ProjectionResult {
  double value = 0.0;
  PoseParamGrad pose_grad;
};
ProjectionResult projection_loss(const Vec6& pred_rot6d,
                                 const Vec3& pred_translation,
                                 const std::array<Vec3, 8>& model_corners,
                                 const std::array<Vec2, 8>& target_corners_px,
                                 const CameraIntrinsics& camera,
                                 double beta = kDefaultHuberBeta);

// Self-consistency between the two prediction paths: corners projected under
// the predicted pose against the predicted corners. Gradients flow to both.
struct ConsistencyResult {
  double value = 0.0;
  PoseParamGrad pose_grad;
  std::array<Vec2, 8> corner_grad{};
};
ConsistencyResult consistency_loss(const Vec6& pred_rot6d,
                                   const Vec3& pred_translation,
                                   const std::array<Vec3, 8>& model_corners,
                                   const std::array<Vec2, 8>& pred_corners_px,
                                   const CameraIntrinsics& camera,
                                   double beta = kDefaultHuberBeta);

// Weighted sum of the seven components.
struct LossComponents {
  double cls = 0.0, box = 0.0, key = 0.0, rot = 0.0, tra = 0.0, proj = 0.0,
         cons = 0.0;
};
struct LossWeights {
  double alpha = 1.0;    // cls
  double beta = 1.0;     // box
  double gamma = 1.0;    // key
  double delta = 1.0;    // rot
  double epsilon = 1.0;  // tra
  double zeta = 1.0;     // proj
  double eta = 1.0;      // cons
};
double total_loss(const LossComponents& components, const LossWeights& weights = {});

}  // namespace gridpose
