#include "gridpose/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

#include "gridpose/errors.hpp"

namespace gridpose {

namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kDegenerateNorm = 1e-12;
constexpr double kMeanRankTol = 1e-8;

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Nearest rotation to `m` via SVD, flipping the smallest singular direction
// when needed to keep det = +1.
Mat3 project_to_rotation_svd(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Vec3 signs(1.0, 1.0, (u * v.transpose()).determinant());
  return u * signs.asDiagonal() * v.transpose();
}

// Polar projection by Newton-Schulz iteration: X <- X (3I - X^T X) / 2.
// Valid only when all singular values of `m` lie in (0, sqrt(3)); callers
// gate on ||m^T m - I|| being small, which also guarantees det(m) > 0 so the
// polar factor coincides with the det-corrected SVD projection.
Mat3 project_to_rotation_polar(const Mat3& m) {
  Mat3 x = m;
  for (int iter = 0; iter < 12; ++iter) {
    const Mat3 xtx = x.transpose() * x;
    const double gap = (xtx - Mat3::Identity()).norm();
    if (gap < 1e-15) {
      break;
    }
    x = 0.5 * x * (3.0 * Mat3::Identity() - xtx);
  }
  return x;
}

}  // namespace

Pose inverse(const Pose& p) {
  Mat3 rt = p.rotation.transpose();
  return {rt, -(rt * p.translation)};
}

Mat3 rot6d_to_matrix(const Rotation6d& r, Rot6dJacobian* jacobian) {
  const double n1 = r.a1.norm();
  if (n1 < kDegenerateNorm) {
    throw DegenerateInput("rot6d_to_matrix: first column has vanishing norm");
  }
  const Vec3 b1 = r.a1 / n1;

  const Vec3 u = r.a2 - b1.dot(r.a2) * b1;
  const double n2 = u.norm();
  if (n2 < kDegenerateNorm) {
    throw DegenerateInput("rot6d_to_matrix: columns are parallel");
  }
  const Vec3 b2 = u / n2;
  const Vec3 b3 = b1.cross(b2);

  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b3;

  if (jacobian != nullptr) {
    const Mat3 p1 = (Mat3::Identity() - b1 * b1.transpose()) / n1;
    const Mat3 p2 = (Mat3::Identity() - b2 * b2.transpose()) / n2;
    const Mat3 du_db1 =
        -(b1.dot(r.a2)) * Mat3::Identity() - b1 * r.a2.transpose();
    const Mat3 du_da2 = Mat3::Identity() - b1 * b1.transpose();
    jacobian->db1_da1 = p1;
    jacobian->db2_da1 = p2 * du_db1 * p1;
    jacobian->db2_da2 = p2 * du_da2;
    jacobian->db3_da1 = -skew(b2) * jacobian->db1_da1 + skew(b1) * jacobian->db2_da1;
    jacobian->db3_da2 = skew(b1) * jacobian->db2_da2;
  }
  return out;
}

Rotation6d matrix_to_rot6d(const Mat3& r) {
  return {r.col(0), r.col(1)};
}

bool is_rotation_matrix(const Mat3& r, double tol) {
  const Mat3 gram = r.transpose() * r - Mat3::Identity();
  return gram.cwiseAbs().maxCoeff() < tol && std::abs(r.determinant() - 1.0) < tol;
}

Vec2 project(const Vec3& point, const Pose& pose, const CameraIntrinsics& cam) {
  const Vec3 pc = pose.rotation * point + pose.translation;
  if (pc.z() <= kMinDepth) {
    throw BehindCamera("project: point depth " + std::to_string(pc.z()) +
                       " is at or behind the camera");
  }
  return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

std::array<Vec2, 8> project(const std::array<Vec3, 8>& points, const Pose& pose,
                            const CameraIntrinsics& cam) {
  std::array<Vec2, 8> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = project(points[i], pose, cam);
  }
  return out;
}

std::vector<Vec2> project(const std::vector<Vec3>& points, const Pose& pose,
                          const CameraIntrinsics& cam) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    out.push_back(project(p, pose, cam));
  }
  return out;
}

Mat3 view_rotation(const Vec3& translation) {
  const double n = translation.norm();
  if (n < kDegenerateNorm) {
    throw DegenerateInput("view_rotation: translation is zero");
  }
  const Vec3 bearing = translation / n;
  const Vec3 axis = Vec3::UnitZ().cross(bearing);
  const double s = axis.norm();
  const double c = Vec3::UnitZ().dot(bearing);
  if (s < 1e-15) {
    if (c > 0.0) {
      return Mat3::Identity();
    }
    // Bearing opposite the optical axis: any half-turn through the camera
    // plane is minimal; pick the x axis for determinism.
    return rotation_about_axis(Vec3::UnitX(), M_PI);
  }
  return rotation_about_axis(axis / s, std::atan2(s, c));
}

Pose allocentric_to_egocentric(const Pose& allocentric) {
  return {view_rotation(allocentric.translation) * allocentric.rotation,
          allocentric.translation};
}

Pose egocentric_to_allocentric(const Pose& egocentric) {
  return {view_rotation(egocentric.translation).transpose() * egocentric.rotation,
          egocentric.translation};
}

double geodesic_distance(const Mat3& a, const Mat3& b) {
  const double tr = (a * b.transpose()).trace();
  return std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0));
}

Mat3 chordal_mean_rotation(const std::vector<Mat3>& rotations) {
  if (rotations.empty()) {
    throw DegenerateInput("chordal_mean_rotation: empty input");
  }
  Mat3 mean = Mat3::Zero();
  for (const Mat3& r : rotations) {
    mean += r;
  }
  mean /= static_cast<double>(rotations.size());

  // Tight clusters of rotations average to a near-orthogonal matrix; the
  // quadratic polar iteration then reaches machine precision in a few 3x3
  // multiplies and skips the SVD entirely. Its convergence region also rules
  // out the rank-deficient case, so the degeneracy check lives on the SVD
  // branch only.
  if ((mean.transpose() * mean - Mat3::Identity()).norm() <= 0.5) {
    return project_to_rotation_polar(mean);
  }

  Eigen::JacobiSVD<Mat3> svd(mean, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(2) < kMeanRankTol) {
    throw DegenerateInput(
        "chordal_mean_rotation: mean is rank-deficient (dispersed or antipodal "
        "rotations)");
  }
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Vec3 signs(1.0, 1.0, (u * v.transpose()).determinant());
  return u * signs.asDiagonal() * v.transpose();
}

Mat3 orthonormalize_rotation(const Mat3& m) { return project_to_rotation_svd(m); }

Mat3 rotation_about_axis(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < kDegenerateNorm) {
    throw DegenerateInput("rotation_about_axis: zero axis");
  }
  return Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q = Eigen::Quaterniond(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
  } while (q.norm() < 1e-6);
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace gridpose
