#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <random>
#include <vector>

namespace gridpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Unconstrained 6D rotation parameterization: the first two columns of a
// rotation matrix before orthonormalization.
struct Rotation6d {
  Vec3 a1 = Vec3::UnitX();
  Vec3 a2 = Vec3::UnitY();

  // Packs as (a1, a2) into one 6-vector; the layout used by loss gradients.
  Vec6 to_vector() const {
    Vec6 v;
    v << a1, a2;
    return v;
  }
  static Rotation6d from_vector(const Vec6& v) {
    return {v.head<3>(), v.tail<3>()};
  }
};

// Rigid transform; used both for camera-frame object poses and for model
// symmetry transforms.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

// Composition: (a * b)(x) = a(b(x)).
inline Pose operator*(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Vec3 transform_point(const Pose& p, const Vec3& x) {
  return p.rotation * x + p.translation;
}

Pose inverse(const Pose& p);

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

// Axis-aligned image-space rectangle, (x1, y1) top-left, (x2, y2) exclusive
// bottom-right in pixels.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
};

// Partial derivatives of the orthonormal basis (b1, b2, b3) produced by
// rot6d_to_matrix with respect to the raw inputs (a1, a2); db1/da2 is zero.
struct Rot6dJacobian {
  Mat3 db1_da1, db2_da1, db2_da2, db3_da1, db3_da2;
};

// Gram-Schmidt: b1 = normalize(a1), b2 = normalize(a2 - (a2.b1) b1),
// b3 = b1 x b2; returns the matrix with columns (b1, b2, b3).
// Throws DegenerateInput when a1 vanishes or a2 is parallel to it.
Mat3 rot6d_to_matrix(const Rotation6d& r, Rot6dJacobian* jacobian = nullptr);

// Inverse embedding: first two columns of R.
Rotation6d matrix_to_rot6d(const Mat3& r);

bool is_rotation_matrix(const Mat3& r, double tol = 1e-9);

// Pinhole projection of an object point under a camera-frame pose.
// Throws BehindCamera when the transformed depth is <= 1e-9.
Vec2 project(const Vec3& point, const Pose& pose, const CameraIntrinsics& cam);
std::array<Vec2, 8> project(const std::array<Vec3, 8>& points, const Pose& pose,
                            const CameraIntrinsics& cam);
std::vector<Vec2> project(const std::vector<Vec3>& points, const Pose& pose,
                          const CameraIntrinsics& cam);

// Minimal rotation taking the optical axis (0,0,1) onto the bearing of t.
// Throws DegenerateInput when t is (numerically) zero.
Mat3 view_rotation(const Vec3& translation);

// Allocentric rotations are viewpoint-invariant; the egocentric (camera
// frame) rotation additionally bakes in the bearing of the translation.
Pose allocentric_to_egocentric(const Pose& allocentric);
Pose egocentric_to_allocentric(const Pose& egocentric);

// Angle of the relative rotation, arccos((trace(a b^T) - 1) / 2), in [0, pi].
double geodesic_distance(const Mat3& a, const Mat3& b);

// Chordal L2 mean: arithmetic matrix mean projected onto SO(3) via SVD with
// determinant-sign correction. Throws DegenerateInput on an empty set or when
// the mean is rank-deficient (antipodal / maximally dispersed inputs).
Mat3 chordal_mean_rotation(const std::vector<Mat3>& rotations);

// Nearest rotation matrix in Frobenius norm (SVD projection).
Mat3 orthonormalize_rotation(const Mat3& m);

// Rodrigues rotation about a (not necessarily unit) axis.
Mat3 rotation_about_axis(const Vec3& axis, double angle);

// Uniform sample from SO(3) via normalized Gaussian quaternions.
Mat3 random_rotation(std::mt19937_64& rng);

}  // namespace gridpose
