#include "gridpose/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gridpose/errors.hpp"

namespace gridpose {

namespace {

constexpr double kMinDepth = 1e-9;

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Rigid alignment camera = R * world + t over matched point sets.
Pose kabsch(const std::vector<Vec3>& world, const std::vector<Vec3>& cam) {
  Vec3 wc = Vec3::Zero(), cc = Vec3::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    wc += world[i];
    cc += cam[i];
  }
  wc /= static_cast<double>(world.size());
  cc /= static_cast<double>(world.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    h += (world[i] - wc) * (cam[i] - cc).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Vec3 signs(1.0, 1.0, (v * u.transpose()).determinant());
  const Mat3 r = v * signs.asDiagonal() * u.transpose();
  return {r, cc - r * wc};
}

double reprojection_sse(const Pose& pose, const CorrespondenceSet& corr) {
  double sse = 0.0;
  for (const Correspondence& c : corr.points) {
    const Vec3 pc = pose.rotation * c.object_point + pose.translation;
    if (pc.z() <= kMinDepth) {
      return std::numeric_limits<double>::infinity();
    }
    const double u = corr.camera.fx * pc.x() / pc.z() + corr.camera.cx;
    const double v = corr.camera.fy * pc.y() / pc.z() + corr.camera.cy;
    sse += (Vec2(u, v) - c.image_point).squaredNorm();
  }
  return sse;
}

// Levenberg-Marquardt on the reprojection error over an so(3) x R^3 update.
void refine_pose(Pose* pose, const CorrespondenceSet& corr, int max_iters = 30) {
  const std::size_t n = corr.points.size();
  double lambda = 1e-6;
  double cost = reprojection_sse(*pose, corr);
  if (!std::isfinite(cost)) {
    return;  // keep the algebraic solution; cheirality is checked by callers
  }
  Eigen::MatrixXd jac(2 * n, 6);
  Eigen::VectorXd res(2 * n);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 rotated = pose->rotation * corr.points[i].object_point;
      const Vec3 pc = rotated + pose->translation;
      const double inv_z = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> duv;
      duv << corr.camera.fx * inv_z, 0, -corr.camera.fx * pc.x() * inv_z * inv_z,
          0, corr.camera.fy * inv_z, -corr.camera.fy * pc.y() * inv_z * inv_z;
      res(2 * i) = corr.camera.fx * pc.x() * inv_z + corr.camera.cx -
                   corr.points[i].image_point.x();
      res(2 * i + 1) = corr.camera.fy * pc.y() * inv_z + corr.camera.cy -
                       corr.points[i].image_point.y();
      jac.block<2, 3>(2 * i, 0) = duv * (-skew(rotated));
      jac.block<2, 3>(2 * i, 3) = duv;
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * res;
    bool improved = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      damped.diagonal().array() += lambda;
      const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-jtr);
      Pose trial = *pose;
      const double angle = delta.head<3>().norm();
      if (angle > 1e-300) {
        trial.rotation =
            Eigen::AngleAxisd(angle, delta.head<3>() / angle).toRotationMatrix() *
            pose->rotation;
      }
      trial.translation += delta.tail<3>();
      const double trial_cost = reprojection_sse(trial, corr);
      if (trial_cost < cost) {
        *pose = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = delta.norm() > 1e-14;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      break;
    }
  }
  pose->rotation = orthonormalize_rotation(pose->rotation);
}

struct NullBasis {
  // Columns of the control-point stack: candidate camera-frame control
  // points are linear combinations of these.
  std::vector<Eigen::VectorXd> vectors;
};

std::vector<Vec3> control_points_from(const Eigen::VectorXd& x, int ncp) {
  std::vector<Vec3> ccs(ncp);
  for (int j = 0; j < ncp; ++j) {
    ccs[j] = x.segment<3>(3 * j);
  }
  return ccs;
}

}  // namespace

Pose epnp(const CorrespondenceSet& correspondences) {
  const auto& pts = correspondences.points;
  const CameraIntrinsics& cam = correspondences.camera;
  const std::size_t n = pts.size();
  if (n < 4) {
    throw InsufficientPoints("epnp: need at least 4 correspondences, got " +
                             std::to_string(n));
  }

  Vec3 centroid = Vec3::Zero();
  for (const Correspondence& c : pts) {
    centroid += c.object_point;
  }
  centroid /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  for (const Correspondence& c : pts) {
    const Vec3 d = c.object_point - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 evals = es.eigenvalues();  // ascending
  if (evals(2) <= 0.0 || !std::isfinite(evals(2))) {
    throw SingularConfiguration("epnp: coincident object points");
  }
  if (evals(1) / evals(2) < 1e-12) {
    throw SingularConfiguration("epnp: collinear object points");
  }
  const bool planar = evals(0) / evals(2) < 1e-8;
  const int ncp = planar ? 3 : 4;

  // Control points: centroid plus principal directions (largest spread first).
  std::vector<Vec3> cw(ncp);
  cw[0] = centroid;
  for (int j = 1; j < ncp; ++j) {
    const int axis = 3 - j;  // eigenvalues ascend; take the largest first
    cw[j] = centroid +
            std::sqrt(evals(axis) / static_cast<double>(n)) * es.eigenvectors().col(axis);
  }

  // Barycentric coordinates of every object point in the control frame.
  Eigen::MatrixXd alphas(n, ncp);
  Eigen::Matrix3d basis3;
  Eigen::Matrix<double, 3, 2> basis2;
  if (planar) {
    basis2.col(0) = cw[1] - cw[0];
    basis2.col(1) = cw[2] - cw[0];
  } else {
    basis3.col(0) = cw[1] - cw[0];
    basis3.col(1) = cw[2] - cw[0];
    basis3.col(2) = cw[3] - cw[0];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 rhs = pts[i].object_point - cw[0];
    if (planar) {
      const Eigen::Vector2d a =
          (basis2.transpose() * basis2).ldlt().solve(basis2.transpose() * rhs);
      alphas(i, 1) = a(0);
      alphas(i, 2) = a(1);
      alphas(i, 0) = 1.0 - a.sum();
    } else {
      const Vec3 a = basis3.partialPivLu().solve(rhs);
      alphas(i, 1) = a(0);
      alphas(i, 2) = a(1);
      alphas(i, 3) = a(2);
      alphas(i, 0) = 1.0 - a.sum();
    }
  }

  // The 2n x 3ncp projection system whose null space holds the camera-frame
  // control points.
  Eigen::MatrixXd m(2 * n, 3 * ncp);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = pts[i].image_point.x();
    const double v = pts[i].image_point.y();
    for (int j = 0; j < ncp; ++j) {
      const double a = alphas(i, j);
      m(2 * i, 3 * j) = a * cam.fx;
      m(2 * i, 3 * j + 1) = 0.0;
      m(2 * i, 3 * j + 2) = a * (cam.cx - u);
      m(2 * i + 1, 3 * j) = 0.0;
      m(2 * i + 1, 3 * j + 1) = a * cam.fy;
      m(2 * i + 1, 3 * j + 2) = a * (cam.cy - v);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> mes(m.transpose() * m);
  NullBasis basis;
  const int basis_count = planar ? 2 : 4;
  for (int k = 0; k < basis_count; ++k) {
    basis.vectors.push_back(mes.eigenvectors().col(k));
  }

  // Pairwise control-point distance constraints.
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < ncp; ++i) {
    for (int j = i + 1; j < ncp; ++j) {
      pairs.emplace_back(i, j);
    }
  }
  const int np = static_cast<int>(pairs.size());
  Eigen::VectorXd rho(np);
  for (int p = 0; p < np; ++p) {
    rho(p) = (cw[pairs[p].first] - cw[pairs[p].second]).squaredNorm();
  }
  // dv[k][p] = difference of control points p under basis vector k
  std::vector<std::vector<Vec3>> dv(basis.vectors.size(), std::vector<Vec3>(np));
  for (std::size_t k = 0; k < basis.vectors.size(); ++k) {
    const auto ccs = control_points_from(basis.vectors[k], ncp);
    for (int p = 0; p < np; ++p) {
      dv[k][p] = ccs[pairs[p].first] - ccs[pairs[p].second];
    }
  }

  std::vector<Eigen::VectorXd> candidates;
  if (planar) {
    // One-dimensional scale per basis vector.
    for (std::size_t k = 0; k < basis.vectors.size(); ++k) {
      double num = 0.0, den = 0.0;
      for (int p = 0; p < np; ++p) {
        num += dv[k][p].norm() * std::sqrt(rho(p));
        den += dv[k][p].squaredNorm();
      }
      if (den < 1e-300) {
        continue;
      }
      candidates.push_back((num / den) * basis.vectors[k]);
    }
  } else {
    // Quadratic system in the four mixing weights: L beta10 = rho with
    // beta10 = (b11, b12, b22, b13, b23, b33, b14, b24, b34, b44).
    Eigen::MatrixXd l(np, 10);
    for (int p = 0; p < np; ++p) {
      l(p, 0) = dv[0][p].squaredNorm();
      l(p, 1) = 2.0 * dv[0][p].dot(dv[1][p]);
      l(p, 2) = dv[1][p].squaredNorm();
      l(p, 3) = 2.0 * dv[0][p].dot(dv[2][p]);
      l(p, 4) = 2.0 * dv[1][p].dot(dv[2][p]);
      l(p, 5) = dv[2][p].squaredNorm();
      l(p, 6) = 2.0 * dv[0][p].dot(dv[3][p]);
      l(p, 7) = 2.0 * dv[1][p].dot(dv[3][p]);
      l(p, 8) = 2.0 * dv[2][p].dot(dv[3][p]);
      l(p, 9) = dv[3][p].squaredNorm();
    }

    auto solve_cols = [&](const std::vector<int>& cols) {
      Eigen::MatrixXd sub(np, cols.size());
      for (std::size_t c = 0; c < cols.size(); ++c) {
        sub.col(c) = l.col(cols[c]);
      }
      return Eigen::VectorXd(
          sub.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rho));
    };

    std::vector<Eigen::Vector4d> betas;
    {  // assume dominated by the first vector: (b11, b12, b13, b14)
      const Eigen::VectorXd x = solve_cols({0, 1, 3, 6});
      Eigen::Vector4d b;
      const double s = x(0) < 0 ? -1.0 : 1.0;
      b(0) = std::sqrt(s * x(0));
      b(1) = b(0) > 0 ? s * x(1) / b(0) : 0.0;
      b(2) = b(0) > 0 ? s * x(2) / b(0) : 0.0;
      b(3) = b(0) > 0 ? s * x(3) / b(0) : 0.0;
      betas.push_back(b);
    }
    {  // two vectors: (b11, b12, b22)
      const Eigen::VectorXd x = solve_cols({0, 1, 2});
      Eigen::Vector4d b = Eigen::Vector4d::Zero();
      if (x(0) < 0) {
        b(0) = std::sqrt(-x(0));
        b(1) = x(2) < 0 ? std::sqrt(-x(2)) : 0.0;
      } else {
        b(0) = std::sqrt(x(0));
        b(1) = x(2) > 0 ? std::sqrt(x(2)) : 0.0;
      }
      if (x(1) < 0) {
        b(0) = -b(0);
      }
      betas.push_back(b);
    }
    {  // three vectors: (b11, b12, b22, b13, b23)
      const Eigen::VectorXd x = solve_cols({0, 1, 2, 3, 4});
      Eigen::Vector4d b = Eigen::Vector4d::Zero();
      if (x(0) < 0) {
        b(0) = std::sqrt(-x(0));
        b(1) = x(2) < 0 ? std::sqrt(-x(2)) : 0.0;
      } else {
        b(0) = std::sqrt(x(0));
        b(1) = x(2) > 0 ? std::sqrt(x(2)) : 0.0;
      }
      if (x(1) < 0) {
        b(0) = -b(0);
      }
      b(2) = b(0) != 0.0 ? x(3) / b(0) : 0.0;
      betas.push_back(b);
    }

    // Gauss-Newton on the distance constraints for each starting point.
    for (Eigen::Vector4d b : betas) {
      for (int iter = 0; iter < 6; ++iter) {
        Eigen::MatrixXd a(np, 4);
        Eigen::VectorXd r(np);
        for (int p = 0; p < np; ++p) {
          Vec3 acc = Vec3::Zero();
          for (int k = 0; k < 4; ++k) {
            acc += b(k) * dv[k][p];
          }
          for (int k = 0; k < 4; ++k) {
            a(p, k) = 2.0 * acc.dot(dv[k][p]);
          }
          r(p) = rho(p) - acc.squaredNorm();
        }
        b += a.colPivHouseholderQr().solve(r);
      }
      Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * ncp);
      for (int k = 0; k < 4; ++k) {
        x += b(k) * basis.vectors[k];
      }
      candidates.push_back(x);
    }
  }

  // Score every candidate by reprojection after rigid alignment.
  std::vector<Vec3> world(n);
  for (std::size_t i = 0; i < n; ++i) {
    world[i] = pts[i].object_point;
  }
  Pose best;
  double best_sse = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& x : candidates) {
    auto ccs = control_points_from(x, ncp);
    std::vector<Vec3> pcs(n);
    double zsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < ncp; ++j) {
        p += alphas(i, j) * ccs[j];
      }
      pcs[i] = p;
      zsum += p.z();
    }
    if (zsum < 0.0) {
      for (Vec3& p : pcs) {
        p = -p;
      }
    }
    const Pose pose = kabsch(world, pcs);
    if (!pose.rotation.allFinite() || !pose.translation.allFinite()) {
      continue;
    }
    const double sse = reprojection_sse(pose, correspondences);
    if (sse < best_sse) {
      best_sse = sse;
      best = pose;
    }
  }
  if (!std::isfinite(best_sse)) {
    throw SingularConfiguration("epnp: no candidate places the points in front of the camera");
  }

  refine_pose(&best, correspondences);

  for (const Correspondence& c : pts) {
    if ((best.rotation * c.object_point + best.translation).z() <= kMinDepth) {
      throw SingularConfiguration("epnp: refined pose violates cheirality");
    }
  }
  return best;
}

RansacResult ransac_pnp(const CorrespondenceSet& correspondences,
                        const RansacConfig& config) {
  const std::size_t n = correspondences.points.size();
  if (n < 4) {
    throw InsufficientPoints("ransac_pnp: need at least 4 correspondences, got " +
                             std::to_string(n));
  }
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  const double thresh_sq = config.inlier_threshold_px * config.inlier_threshold_px;
  auto score = [&](const Pose& pose, std::vector<bool>* mask) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Correspondence& c = correspondences.points[i];
      const Vec3 pc = pose.rotation * c.object_point + pose.translation;
      bool in = false;
      if (pc.z() > kMinDepth) {
        const double u = correspondences.camera.fx * pc.x() / pc.z() +
                         correspondences.camera.cx;
        const double v = correspondences.camera.fy * pc.y() / pc.z() +
                         correspondences.camera.cy;
        in = (Vec2(u, v) - c.image_point).squaredNorm() <= thresh_sq;
      }
      if (mask != nullptr) {
        (*mask)[i] = in;
      }
      count += in;
    }
    return count;
  };

  std::vector<bool> mask(n, false), best_mask(n, false);
  std::size_t best_count = 0;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4;) {
      const std::size_t cand = pick(rng);
      bool dup = false;
      for (int j = 0; j < k; ++j) {
        dup |= idx[j] == cand;
      }
      if (!dup) {
        idx[k++] = cand;
      }
    }
    CorrespondenceSet sample;
    sample.camera = correspondences.camera;
    for (std::size_t i : idx) {
      sample.points.push_back(correspondences.points[i]);
    }
    Pose pose;
    try {
      pose = epnp(sample);
    } catch (const Error&) {
      continue;  // degenerate sample
    }
    const std::size_t count = score(pose, &mask);
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
      if (best_count == n) {
        break;
      }
    }
  }

  const std::size_t need = static_cast<std::size_t>(std::max(config.min_inliers, 4));
  if (best_count < need) {
    throw NoConsensus("ransac_pnp: best sample explains " +
                      std::to_string(best_count) + " of " + std::to_string(n) +
                      " points (need " + std::to_string(need) + ")");
  }

  CorrespondenceSet consensus;
  consensus.camera = correspondences.camera;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask[i]) {
      consensus.points.push_back(correspondences.points[i]);
    }
  }
  RansacResult result;
  result.pose = epnp(consensus);
  result.inliers.assign(n, false);
  score(result.pose, &result.inliers);
  return result;
}

}  // namespace gridpose
