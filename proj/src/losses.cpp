#include "gridpose/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridpose/errors.hpp"

namespace gridpose {

namespace {

constexpr double kMinDepth = 1e-9;

// Mean componentwise huber over one residual vector; gradient w.r.t. the
// residual accumulates into *grad when given.
double huber_mean(const Eigen::VectorXd& residual, double beta,
                  Eigen::VectorXd* grad = nullptr) {
  const double n = static_cast<double>(residual.size());
  if (grad != nullptr) {
    grad->resize(residual.size());
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    const HuberResult h = huber(residual(i), beta);
    sum += h.value;
    if (grad != nullptr) {
      (*grad)(i) = h.derivative / n;
    }
  }
  return sum / n;
}

// Projection of one camera-frame point with the pinhole jacobian d(u,v)/d pc.
Vec2 pinhole(const Vec3& pc, const CameraIntrinsics& cam,
             Eigen::Matrix<double, 2, 3>* jac) {
  if (pc.z() <= kMinDepth) {
    throw BehindCamera("loss projection: point at or behind the camera");
  }
  const double inv_z = 1.0 / pc.z();
  if (jac != nullptr) {
    (*jac) << cam.fx * inv_z, 0.0, -cam.fx * pc.x() * inv_z * inv_z,
        0.0, cam.fy * inv_z, -cam.fy * pc.y() * inv_z * inv_z;
  }
  return {cam.fx * pc.x() * inv_z + cam.cx, cam.fy * pc.y() * inv_z + cam.cy};
}

// Shared core of the two reprojection losses: mean componentwise huber
// between projected model corners and target pixels, with gradients w.r.t.
// the direct pose parameterization and (optionally) the targets.
double reprojection_core(const Vec6& pred_rot6d, const Vec3& pred_translation,
                         const std::array<Vec3, 8>& model_corners,
                         const std::array<Vec2, 8>& target_corners_px,
                         const CameraIntrinsics& camera, double beta,
                         PoseParamGrad* pose_grad,
                         std::array<Vec2, 8>* target_grad) {
  Rot6dJacobian rj;
  const Mat3 r = rot6d_to_matrix(Rotation6d::from_vector(pred_rot6d), &rj);

  constexpr double kComponents = 16.0;
  double sum = 0.0;
  for (int k = 0; k < 8; ++k) {
    const Vec3& p = model_corners[k];
    const Vec3 pc = r * p + pred_translation;
    Eigen::Matrix<double, 2, 3> duv_dpc;
    const Vec2 uv = pinhole(pc, camera, &duv_dpc);
    const Vec2 res = uv - target_corners_px[k];

    Vec2 dval_duv;
    for (int c = 0; c < 2; ++c) {
      const HuberResult h = huber(res(c), beta);
      sum += h.value;
      dval_duv(c) = h.derivative / kComponents;
    }
    if (target_grad != nullptr) {
      (*target_grad)[k] = -dval_duv;
    }
    if (pose_grad == nullptr) {
      continue;
    }

    // pc = px b1 + py b2 + pz b3, so dpc/da follows the basis jacobian.
    Mat3 dpc_da1 = p.x() * rj.db1_da1 + p.y() * rj.db2_da1 + p.z() * rj.db3_da1;
    Mat3 dpc_da2 = p.y() * rj.db2_da2 + p.z() * rj.db3_da2;

    const Eigen::RowVector3d dval_dpc = dval_duv.transpose() * duv_dpc;
    pose_grad->rot6d.head<3>() += (dval_dpc * dpc_da1).transpose();
    pose_grad->rot6d.tail<3>() += (dval_dpc * dpc_da2).transpose();
    pose_grad->translation += dval_dpc.transpose();
  }
  return sum / kComponents;
}

}  // namespace

HuberResult huber(double residual, double beta) {
  if (beta <= 0.0) {
    throw DegenerateInput("huber: beta must be positive");
  }
  const double a = std::abs(residual);
  if (a < beta) {
    return {0.5 * residual * residual / beta, residual / beta};
  }
  return {a - 0.5 * beta, residual > 0 ? 1.0 : -1.0};
}

FocalResult focal_loss(const Eigen::MatrixXd& probabilities,
                       const Eigen::MatrixXd& one_hot, double alpha,
                       double gamma) {
  if (probabilities.rows() != one_hot.rows() ||
      probabilities.cols() != one_hot.cols()) {
    throw ShapeMismatch("focal_loss: probabilities and targets disagree");
  }
  if (probabilities.size() == 0) {
    throw EmptyBatch("focal_loss: empty batch");
  }

  std::size_t positive_locations = 0;
  for (Eigen::Index i = 0; i < one_hot.rows(); ++i) {
    if ((one_hot.row(i).array() > 0.5).any()) {
      ++positive_locations;
    }
  }
  const double norm = static_cast<double>(std::max<std::size_t>(positive_locations, 1));

  FocalResult out;
  out.grad = Eigen::MatrixXd::Zero(probabilities.rows(), probabilities.cols());
  constexpr double lo = kProbabilityClamp;
  constexpr double hi = 1.0 - kProbabilityClamp;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    for (Eigen::Index j = 0; j < probabilities.cols(); ++j) {
      const double raw = probabilities(i, j);
      const double p = std::clamp(raw, lo, hi);
      const bool clamped = raw < lo || raw > hi;
      double value, grad;
      if (one_hot(i, j) > 0.5) {
        const double q = 1.0 - p;
        value = -alpha * std::pow(q, gamma) * std::log(p);
        grad = alpha * (gamma * std::pow(q, gamma - 1.0) * std::log(p) -
                        std::pow(q, gamma) / p);
      } else {
        value = -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
        grad = -(1.0 - alpha) * (gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p) -
                                 std::pow(p, gamma) / (1.0 - p));
      }
      sum += value;
      out.grad(i, j) = clamped ? 0.0 : grad / norm;
    }
  }
  out.value = sum / norm;
  return out;
}

RegressionResult class_normalized_regression(const RegressionBatch& batch,
                                             double beta) {
  std::size_t contributing = 0;
  for (const auto& cls : batch.classes) {
    if (!cls.empty()) {
      ++contributing;
    }
  }
  if (contributing == 0) {
    throw EmptyBatch("class_normalized_regression: no class has locations");
  }
  const double a_prime = static_cast<double>(contributing);

  RegressionResult out;
  out.grads.resize(batch.classes.size());
  for (std::size_t i = 0; i < batch.classes.size(); ++i) {
    const auto& cls = batch.classes[i];
    out.grads[i].resize(cls.size());
    if (cls.empty()) {
      continue;
    }
    const double l_i = static_cast<double>(cls.size());
    double cls_sum = 0.0;
    for (std::size_t j = 0; j < cls.size(); ++j) {
      const auto& [pred, target] = cls[j];
      if (pred.size() != target.size()) {
        throw ShapeMismatch("class_normalized_regression: vector sizes disagree");
      }
      if (pred.size() == 0) {
        throw ShapeMismatch("class_normalized_regression: empty vectors");
      }
      Eigen::VectorXd grad;
      cls_sum += huber_mean(pred - target, beta, &grad);
      out.grads[i][j] = grad / (l_i * a_prime);
    }
    out.value += cls_sum / (l_i * a_prime);
  }
  return out;
}

SymmetryMinResult symmetry_min_keypoint_loss(
    const std::vector<Eigen::VectorXd>& predictions,
    const std::function<std::vector<Eigen::VectorXd>(std::size_t)>&
        targets_for_symmetry,
    std::size_t symmetry_count, double beta) {
  if (predictions.empty()) {
    throw EmptyBatch("symmetry_min_keypoint_loss: no predictions");
  }
  if (symmetry_count == 0) {
    throw DegenerateInput("symmetry_min_keypoint_loss: empty symmetry set");
  }

  SymmetryMinResult best;
  best.value = std::numeric_limits<double>::infinity();
  const double l = static_cast<double>(predictions.size());
  for (std::size_t s = 0; s < symmetry_count; ++s) {
    const std::vector<Eigen::VectorXd> targets = targets_for_symmetry(s);
    if (targets.size() != predictions.size()) {
      throw ShapeMismatch("symmetry_min_keypoint_loss: target count disagrees");
    }
    double value = 0.0;
    std::vector<Eigen::VectorXd> grads(predictions.size());
    for (std::size_t j = 0; j < predictions.size(); ++j) {
      if (predictions[j].size() != targets[j].size()) {
        throw ShapeMismatch("symmetry_min_keypoint_loss: vector sizes disagree");
      }
      Eigen::VectorXd grad;
      value += huber_mean(predictions[j] - targets[j], beta, &grad);
      grads[j] = grad / l;
    }
    value /= l;
    if (value < best.value) {  // strict: ties keep the lowest index
      best.value = value;
      best.selected_symmetry = s;
      best.grads = std::move(grads);
    }
  }
  return best;
}

RotTraResult rot_tra_loss(const Vec6& pred_rot6d, const Vec3& pred_translation,
                          const Pose& gt_pose, std::size_t selected_symmetry,
                          const SymmetrySet& symmetries, double beta) {
  if (selected_symmetry >= symmetries.size()) {
    throw IndexOutOfRange("rot_tra_loss: symmetry index " +
                          std::to_string(selected_symmetry) + " out of range");
  }
  const Pose target = gt_pose * symmetries[selected_symmetry];
  const Vec6 rot_target = matrix_to_rot6d(target.rotation).to_vector();

  RotTraResult out;
  Eigen::VectorXd grad;
  out.rot_value = huber_mean(pred_rot6d - rot_target, beta, &grad);
  out.rot_grad = grad;
  out.tra_value = huber_mean(pred_translation - target.translation, beta, &grad);
  out.tra_grad = grad;
  return out;
}

ProjectionResult projection_loss(const Vec6& pred_rot6d,
                                 const Vec3& pred_translation,
                                 const std::array<Vec3, 8>& model_corners,
                                 const std::array<Vec2, 8>& target_corners_px,
                                 const CameraIntrinsics& camera, double beta) {
  ProjectionResult out;
  out.value = reprojection_core(pred_rot6d, pred_translation, model_corners,
                                target_corners_px, camera, beta, &out.pose_grad,
                                nullptr);
  return out;
}

ConsistencyResult consistency_loss(const Vec6& pred_rot6d,
                                   const Vec3& pred_translation,
                                   const std::array<Vec3, 8>& model_corners,
                                   const std::array<Vec2, 8>& pred_corners_px,
                                   const CameraIntrinsics& camera, double beta) {
  ConsistencyResult out;
  out.value = reprojection_core(pred_rot6d, pred_translation, model_corners,
                                pred_corners_px, camera, beta, &out.pose_grad,
                                &out.corner_grad);
  return out;
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return w.alpha * c.cls + w.beta * c.box + w.gamma * c.key + w.delta * c.rot +
         w.epsilon * c.tra + w.zeta * c.proj + w.eta * c.cons;
}

}  // namespace gridpose
