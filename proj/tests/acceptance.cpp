// Acceptance gate for the pose pipeline. Each numbered criterion prints one
// [PASS]/[FAIL] line with its tolerances pinned in the code below; the
// process exits nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <gridpose/bop_io.hpp>
#include <gridpose/encoding.hpp>
#include <gridpose/errors.hpp>
#include <gridpose/geometry.hpp>
#include <gridpose/harness.hpp>
#include <gridpose/losses.hpp>
#include <gridpose/mesh.hpp>
#include <gridpose/metrics.hpp>
#include <gridpose/pnp.hpp>
#include <gridpose/postprocess.hpp>
#include <gridpose/scene.hpp>

namespace {

using namespace gridpose;

std::string strf(const char* format, ...) {
  char buffer[1024];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buffer, sizeof buffer, format, args);
  va_end(args);
  return buffer;
}

bool report(int criterion, bool ok, const char* what, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion,
              what, detail.c_str());
  std::fflush(stdout);
  return ok;
}

CameraIntrinsics make_camera() {
  CameraIntrinsics camera;
  camera.fx = 500.0;
  camera.fy = 480.0;
  camera.cx = 320.0;
  camera.cy = 240.0;
  camera.width = 640;
  camera.height = 480;
  return camera;
}

// Half turn about z written out exactly so symmetry compositions cancel
// bitwise (no residual sin(pi) term).
Mat3 exact_half_turn_z() {
  Mat3 m;
  m << -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0;
  return m;
}

SymmetrySet half_turn_symmetries() {
  SymmetrySet sym;
  sym.transforms.push_back(Pose{exact_half_turn_z(), Vec3::Zero()});
  return sym;
}

ObjectModel acceptance_box_model() {
  return make_object_model(1, make_box_mesh(Vec3(0.06, 0.045, 0.03)));
}

Pose random_front_pose(std::mt19937_64& rng, double z_min = 0.7,
                       double z_max = 1.3) {
  std::uniform_real_distribution<double> xy(-0.1, 0.1);
  std::uniform_real_distribution<double> z(z_min, z_max);
  return Pose{random_rotation(rng), Vec3(xy(rng), xy(rng), z(rng))};
}

// Signed residual whose magnitude keeps a margin to the huber knee, so a
// finite-difference step cannot cross between the quadratic and linear
// branches.
double residual_off_knee(std::mt19937_64& rng, double limit, double margin) {
  std::uniform_real_distribution<double> magnitude(0.0, limit);
  std::bernoulli_distribution negate(0.5);
  for (;;) {
    const double m = magnitude(rng);
    if (std::abs(m - kDefaultHuberBeta) <= margin) continue;
    return negate(rng) ? -m : m;
  }
}

template <typename F>
double central_difference(F&& f) {
  constexpr double kStep = 1e-5;
  return (f(kStep) - f(-kStep)) / (2.0 * kStep);
}

struct GradientTally {
  double max_rel = 0.0;
  void add(double analytic, double fd) {
    constexpr double kFloor = 1e-3;  // below this, compare absolutely
    const double denom = std::max({std::abs(analytic), std::abs(fd), kFloor});
    max_rel = std::max(max_rel, std::abs(analytic - fd) / denom);
  }
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Box projected_cuboid_box(const ObjectModel& model, const Pose& pose,
                         const CameraIntrinsics& camera) {
  const auto px = project(model.cuboid, pose, camera);
  Box box{px[0].x(), px[0].y(), px[0].x(), px[0].y()};
  for (const Vec2& p : px) {
    box.x1 = std::min(box.x1, p.x());
    box.y1 = std::min(box.y1, p.y());
    box.x2 = std::max(box.x2, p.x());
    box.y2 = std::max(box.y2, p.y());
  }
  return box;
}

double adds_brute_force(const Pose& est, const Pose& gt,
                        const ObjectModel& model) {
  double total = 0.0;
  for (const Vec3& p : model.mesh.vertices) {
    const Vec3 gt_point = gt.rotation * p + gt.translation;
    double nearest = std::numeric_limits<double>::infinity();
    for (const Vec3& q : model.mesh.vertices) {
      nearest = std::min(nearest,
                         (est.rotation * q + est.translation - gt_point).norm());
    }
    total += nearest;
  }
  return total / static_cast<double>(model.mesh.vertices.size());
}

// One-sided sign test: probability of at least `wins` successes out of `n`
// fair coin flips.
double sign_test_p(int n, int wins) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                  std::lgamma(n - k + 1.0) - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

// --------------------------------------------------------------------------
// 1. Analytic gradients of all seven loss components against central
//    differences.
bool criterion_gradients() {
  constexpr double kTolerance = 1e-4;
  constexpr double kBudgetSeconds = 30.0;
  constexpr int kBatches = 100;

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  const CameraIntrinsics camera = make_camera();
  const ObjectModel model = acceptance_box_model();
  const SymmetrySet sym = half_turn_symmetries();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  GradientTally cls, box, key, rot, tra, proj, cons;

  for (int batch = 0; batch < kBatches; ++batch) {
    {  // focal classification
      const int rows = 4, cols = 3;
      Eigen::MatrixXd p(rows, cols);
      Eigen::MatrixXd one_hot = Eigen::MatrixXd::Zero(rows, cols);
      std::uniform_real_distribution<double> prob(0.05, 0.95);
      std::uniform_int_distribution<int> pick(0, cols - 1);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) p(i, j) = prob(rng);
      }
      for (int i = 0; i < rows; ++i) {
        if (i == 0 || unit(rng) < 0.5) one_hot(i, pick(rng)) = 1.0;
      }
      const FocalResult res = focal_loss(p, one_hot);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          const double fd = central_difference([&](double eps) {
            Eigen::MatrixXd shifted = p;
            shifted(i, j) += eps;
            return focal_loss(shifted, one_hot).value;
          });
          cls.add(res.grad(i, j), fd);
        }
      }
    }

    {  // class-balanced regression (one class deliberately empty)
      RegressionBatch reg;
      reg.classes.resize(3);
      const std::size_t sizes[3] = {2, 0, 1};
      std::uniform_real_distribution<double> tgt(-1.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        for (std::size_t n = 0; n < sizes[c]; ++n) {
          Eigen::VectorXd target(4), pred(4);
          for (int k = 0; k < 4; ++k) {
            target(k) = tgt(rng);
            pred(k) = target(k) + residual_off_knee(rng, 0.45, 2e-3);
          }
          reg.classes[c].push_back({pred, target});
        }
      }
      const RegressionResult res = class_normalized_regression(reg);
      for (std::size_t c = 0; c < reg.classes.size(); ++c) {
        for (std::size_t j = 0; j < reg.classes[c].size(); ++j) {
          for (int k = 0; k < 4; ++k) {
            const double fd = central_difference([&](double eps) {
              RegressionBatch shifted = reg;
              shifted.classes[c][j].first(k) += eps;
              return class_normalized_regression(shifted).value;
            });
            box.add(res.grads[c][j](k), fd);
          }
        }
      }
    }

    {  // symmetry-minimized keypoints, winning branch alternating
      std::uniform_real_distribution<double> px(80.0, 560.0);
      std::uniform_real_distribution<double> py(60.0, 420.0);
      for (;;) {  // regenerate until the two branches are clearly separated
        const Pose gt = random_front_pose(rng);
        const int locations = 3;
        std::vector<Vec2> centers;
        double delta = projected_diameter_px(model.diameter,
                                             gt.translation.z(), camera.fx);
        for (int j = 0; j < locations; ++j) centers.emplace_back(px(rng), py(rng));
        const auto targets_for = [&](std::size_t s) {
          const auto corners = project(model.cuboid, gt * sym[s], camera);
          std::vector<Eigen::VectorXd> out;
          for (int j = 0; j < locations; ++j) {
            out.push_back(standardize(corners, centers[j], delta));
          }
          return out;
        };
        const std::size_t winner = static_cast<std::size_t>(batch % 2);
        const auto base = targets_for(winner);
        std::vector<Eigen::VectorXd> preds;
        for (int j = 0; j < locations; ++j) {
          Eigen::VectorXd v = base[j];
          for (int k = 0; k < 16; ++k) v(k) += residual_off_knee(rng, 0.45, 2e-3);
          preds.push_back(v);
        }
        const auto branch_value = [&](std::size_t s) {
          const auto targets = targets_for(s);
          double total = 0.0;
          for (int j = 0; j < locations; ++j) {
            double mean = 0.0;
            for (int k = 0; k < 16; ++k) {
              mean += huber(preds[j](k) - targets[j](k)).value;
            }
            total += mean / 16.0;
          }
          return total / locations;
        };
        if (std::abs(branch_value(0) - branch_value(1)) < 1e-2) continue;

        const SymmetryMinResult res =
            symmetry_min_keypoint_loss(preds, targets_for, sym.size());
        for (int j = 0; j < locations; ++j) {
          for (int k = 0; k < 16; ++k) {
            const double fd = central_difference([&](double eps) {
              auto shifted = preds;
              shifted[j](k) += eps;
              return symmetry_min_keypoint_loss(shifted, targets_for, sym.size())
                  .value;
            });
            key.add(res.grads[j](k), fd);
          }
        }
        break;
      }
    }

    {  // direct rotation / translation against the selected symmetry
      const Pose gt = random_front_pose(rng);
      const std::size_t selected = static_cast<std::size_t>(batch % 2);
      const Vec6 rot_target =
          matrix_to_rot6d((gt * sym[selected]).rotation).to_vector();
      Vec6 pred6;
      for (int k = 0; k < 6; ++k) {
        pred6(k) = rot_target(k) + residual_off_knee(rng, 0.45, 2e-3);
      }
      Vec3 predt;
      for (int k = 0; k < 3; ++k) {
        predt(k) = gt.translation(k) + residual_off_knee(rng, 0.45, 2e-3);
      }
      const RotTraResult res = rot_tra_loss(pred6, predt, gt, selected, sym);
      for (int k = 0; k < 6; ++k) {
        const double fd = central_difference([&](double eps) {
          Vec6 shifted = pred6;
          shifted(k) += eps;
          return rot_tra_loss(shifted, predt, gt, selected, sym).rot_value;
        });
        rot.add(res.rot_grad(k), fd);
      }
      for (int k = 0; k < 3; ++k) {
        const double fd = central_difference([&](double eps) {
          Vec3 shifted = predt;
          shifted(k) += eps;
          return rot_tra_loss(pred6, shifted, gt, selected, sym).tra_value;
        });
        tra.add(res.tra_grad(k), fd);
      }
    }

    {  // reprojected corners against given target pixels
      const Pose gt = random_front_pose(rng);
      std::uniform_real_distribution<double> rot_noise(-0.05, 0.05);
      std::uniform_real_distribution<double> tra_noise(-0.01, 0.01);
      Vec6 pred6 = matrix_to_rot6d(gt.rotation).to_vector();
      for (int k = 0; k < 6; ++k) pred6(k) += rot_noise(rng);
      Vec3 predt = gt.translation;
      for (int k = 0; k < 3; ++k) predt(k) += tra_noise(rng);
      const Pose pred{rot6d_to_matrix(Rotation6d::from_vector(pred6)), predt};
      const auto projected = project(model.cuboid, pred, camera);
      std::array<Vec2, 8> targets{};
      for (int c = 0; c < 8; ++c) {
        for (int d = 0; d < 2; ++d) {
          targets[c](d) = projected[c](d) + residual_off_knee(rng, 2.0, 5e-3);
        }
      }
      const ProjectionResult res =
          projection_loss(pred6, predt, model.cuboid, targets, camera);
      for (int k = 0; k < 6; ++k) {
        const double fd = central_difference([&](double eps) {
          Vec6 shifted = pred6;
          shifted(k) += eps;
          return projection_loss(shifted, predt, model.cuboid, targets, camera)
              .value;
        });
        proj.add(res.pose_grad.rot6d(k), fd);
      }
      for (int k = 0; k < 3; ++k) {
        const double fd = central_difference([&](double eps) {
          Vec3 shifted = predt;
          shifted(k) += eps;
          return projection_loss(pred6, shifted, model.cuboid, targets, camera)
              .value;
        });
        proj.add(res.pose_grad.translation(k), fd);
      }
    }

    {  // pose/corner self-consistency, gradients on both paths
      const Pose gt = random_front_pose(rng);
      std::uniform_real_distribution<double> rot_noise(-0.05, 0.05);
      std::uniform_real_distribution<double> tra_noise(-0.01, 0.01);
      Vec6 pred6 = matrix_to_rot6d(gt.rotation).to_vector();
      for (int k = 0; k < 6; ++k) pred6(k) += rot_noise(rng);
      Vec3 predt = gt.translation;
      for (int k = 0; k < 3; ++k) predt(k) += tra_noise(rng);
      const Pose pred{rot6d_to_matrix(Rotation6d::from_vector(pred6)), predt};
      const auto projected = project(model.cuboid, pred, camera);
      std::array<Vec2, 8> corners{};
      for (int c = 0; c < 8; ++c) {
        for (int d = 0; d < 2; ++d) {
          corners[c](d) = projected[c](d) + residual_off_knee(rng, 2.0, 5e-3);
        }
      }
      const ConsistencyResult res =
          consistency_loss(pred6, predt, model.cuboid, corners, camera);
      for (int k = 0; k < 6; ++k) {
        const double fd = central_difference([&](double eps) {
          Vec6 shifted = pred6;
          shifted(k) += eps;
          return consistency_loss(shifted, predt, model.cuboid, corners, camera)
              .value;
        });
        cons.add(res.pose_grad.rot6d(k), fd);
      }
      for (int k = 0; k < 3; ++k) {
        const double fd = central_difference([&](double eps) {
          Vec3 shifted = predt;
          shifted(k) += eps;
          return consistency_loss(pred6, shifted, model.cuboid, corners, camera)
              .value;
        });
        cons.add(res.pose_grad.translation(k), fd);
      }
      for (int c = 0; c < 8; ++c) {
        for (int d = 0; d < 2; ++d) {
          const double fd = central_difference([&](double eps) {
            auto shifted = corners;
            shifted[c](d) += eps;
            return consistency_loss(pred6, predt, model.cuboid, shifted, camera)
                .value;
          });
          cons.add(res.corner_grad[c](d), fd);
        }
      }
    }
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  const double worst =
      std::max({cls.max_rel, box.max_rel, key.max_rel, rot.max_rel,
                tra.max_rel, proj.max_rel, cons.max_rel});
  const bool ok = worst < kTolerance && elapsed < kBudgetSeconds;
  return report(
      1, ok, "loss gradients match central differences",
      strf("max rel err %.2e over %d batches [cls %.1e box %.1e key %.1e "
           "rot %.1e tra %.1e proj %.1e cons %.1e], %.1f s; tol %g, budget %gs",
           worst, kBatches, cls.max_rel, box.max_rel, key.max_rel, rot.max_rel,
           tra.max_rel, proj.max_rel, cons.max_rel, elapsed, kTolerance,
           kBudgetSeconds));
}

// --------------------------------------------------------------------------
// 2. Replacing the ground truth by a symmetry-equivalent pose leaves the
//    keypoint loss and the selection-shared pose losses unchanged.
bool criterion_symmetry_invariance() {
  constexpr double kTolerance = 1e-9;
  constexpr int kTrials = 50;

  std::mt19937_64 rng(202);
  const CameraIntrinsics camera = make_camera();
  const ObjectModel model = acceptance_box_model();
  const SymmetrySet sym = half_turn_symmetries();
  const Pose flip{exact_half_turn_z(), Vec3::Zero()};

  std::uniform_real_distribution<double> comp(-0.6, 0.6);
  std::uniform_real_distribution<double> px(80.0, 560.0);
  std::uniform_real_distribution<double> py(60.0, 420.0);

  double worst = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const Pose gt = random_front_pose(rng);
    const Pose replaced = gt * flip;
    const Vec2 center(px(rng), py(rng));
    const double delta =
        projected_diameter_px(model.diameter, gt.translation.z(), camera.fx);

    const auto targets_about = [&](const Pose& base) {
      return [&, base](std::size_t s) {
        const auto corners = project(model.cuboid, base * sym[s], camera);
        return std::vector<Eigen::VectorXd>{standardize(corners, center, delta)};
      };
    };
    Eigen::VectorXd pred(16);
    for (int k = 0; k < 16; ++k) pred(k) = comp(rng);
    const std::vector<Eigen::VectorXd> preds{pred};

    const SymmetryMinResult ka =
        symmetry_min_keypoint_loss(preds, targets_about(gt), sym.size());
    const SymmetryMinResult kb =
        symmetry_min_keypoint_loss(preds, targets_about(replaced), sym.size());
    worst = std::max(worst, std::abs(ka.value - kb.value));

    const Vec6 pred6 = matrix_to_rot6d(random_rotation(rng)).to_vector();
    const Vec3 predt = gt.translation + Vec3(0.02, -0.01, 0.03);
    const RotTraResult ra =
        rot_tra_loss(pred6, predt, gt, ka.selected_symmetry, sym);
    const RotTraResult rb =
        rot_tra_loss(pred6, predt, replaced, kb.selected_symmetry, sym);
    worst = std::max({worst, std::abs(ra.rot_value - rb.rot_value),
                      std::abs(ra.tra_value - rb.tra_value)});
  }

  const bool ok = worst < kTolerance;
  return report(2, ok, "half-turn ground-truth swap leaves losses unchanged",
                strf("max |change| %.2e over %d trials; tol %g", worst, kTrials,
                     kTolerance));
}

// --------------------------------------------------------------------------
// 3. Duplicating one class's locations must not move the class-balanced
//    regression value.
bool criterion_class_balance() {
  constexpr double kTolerance = 1e-12;
  constexpr int kDuplication = 10;
  constexpr int kTrials = 20;

  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> tgt(-1.0, 1.0);
  std::uniform_real_distribution<double> res(-0.4, 0.4);

  double worst = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const auto make_pair = [&]() {
      Eigen::VectorXd target(3), pred(3);
      for (int k = 0; k < 3; ++k) {
        target(k) = tgt(rng);
        pred(k) = target(k) + res(rng);
      }
      return std::pair<Eigen::VectorXd, Eigen::VectorXd>{pred, target};
    };
    RegressionBatch base;
    base.classes = {{make_pair()}, {make_pair()}};

    RegressionBatch duplicated = base;
    const auto copy = duplicated.classes[0][0];
    for (int extra = 1; extra < kDuplication; ++extra) {
      duplicated.classes[0].push_back(copy);
    }
    const double v1 = class_normalized_regression(base).value;
    const double v2 = class_normalized_regression(duplicated).value;
    worst = std::max(worst, std::abs(v1 - v2));
  }

  const bool ok = worst < kTolerance;
  return report(3, ok, "10x location duplication leaves the class mean fixed",
                strf("max |change| %.2e over %d trials; tol %g", worst, kTrials,
                     kTolerance));
}

// --------------------------------------------------------------------------
// 4. Noise-free minimal-solver round trips and exact outlier rejection.
bool criterion_pnp_round_trip() {
  constexpr double kPoseTolerance = 1e-6;
  constexpr int kTrials = 1000;
  constexpr int kSeeds = 100;
  constexpr int kRequiredSeeds = 99;

  std::mt19937_64 rng(404);
  const CameraIntrinsics camera = make_camera();
  const ObjectModel model = acceptance_box_model();
  std::uniform_real_distribution<double> xy(-0.1, 0.1);
  std::uniform_real_distribution<double> z(0.5, 1.5);

  int exact = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const Pose gt{random_rotation(rng), Vec3(xy(rng), xy(rng), z(rng))};
    CorrespondenceSet set;
    set.camera = camera;
    for (const Vec3& p : model.cuboid) {
      set.points.push_back({p, project(p, gt, camera)});
    }
    const Pose est = epnp(set);
    if (geodesic_distance(est.rotation, gt.rotation) < kPoseTolerance &&
        (est.translation - gt.translation).norm() < kPoseTolerance) {
      ++exact;
    }
  }

  int recovered = 0;
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_real_distribution<double> push(30.0, 80.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  for (int seed = 0; seed < kSeeds; ++seed) {
    const Pose gt{random_rotation(rng), Vec3(xy(rng), xy(rng), z(rng))};
    std::vector<Vec3> object_points(model.cuboid.begin(), model.cuboid.end());
    object_points.push_back(Vec3::Zero());
    object_points.emplace_back(0.02, -0.015, 0.01);
    CorrespondenceSet set;
    set.camera = camera;
    for (const Vec3& p : object_points) {
      set.points.push_back({p, project(p, gt, camera)});
    }
    const int first = pick(rng);
    int second = pick(rng);
    while (second == first) second = pick(rng);
    for (const int corrupt : {first, second}) {
      const double a = angle(rng), r = push(rng);
      set.points[corrupt].image_point += Vec2(r * std::cos(a), r * std::sin(a));
    }
    RansacConfig config;
    config.rng_seed = 4040 + static_cast<std::uint64_t>(seed);
    try {
      const RansacResult result = ransac_pnp(set, config);
      std::vector<bool> expected(set.points.size(), true);
      expected[first] = expected[second] = false;
      const bool pose_ok =
          geodesic_distance(result.pose.rotation, gt.rotation) <
              kPoseTolerance &&
          (result.pose.translation - gt.translation).norm() < kPoseTolerance;
      if (result.inliers == expected && pose_ok) ++recovered;
    } catch (const NoConsensus&) {
    }
  }

  const bool ok = exact == kTrials && recovered >= kRequiredSeeds;
  return report(4, ok, "minimal solver round trip and outlier rejection",
                strf("exact poses %d/%d (tol %g), exact inlier sets %d/%d "
                     "(need >= %d)",
                     exact, kTrials, kPoseTolerance, recovered, kSeeds,
                     kRequiredSeeds));
}

// --------------------------------------------------------------------------
// 5. Zero-noise scenes decode back to every instance with perfect scores.
bool criterion_end_to_end_identity() {
  constexpr double kPoseTolerance = 1e-9;
  const std::vector<int> counts{10, 40, 70, 100};

  const auto models = default_test_models();
  const CameraIntrinsics camera = default_camera();

  bool recovered_all = true;
  std::size_t total_instances = 0;
  std::vector<SceneGroundTruth> gts;
  std::vector<SceneEstimate> ests;
  for (const int n : counts) {
    SceneGenConfig gen;
    gen.count_range = {n, n};
    const SceneGroundTruth scene =
        generate_scene(models, camera, 1000 + static_cast<std::uint64_t>(n), gen);
    NoiseSpec zero;
    zero.rng_seed = 11 + static_cast<std::uint64_t>(n);
    const std::vector<Hypothesis> hyps = mock_predict(scene, models, zero);
    const std::vector<InstanceEstimate> estimates =
        postprocess_image(hyps, PostprocessConfig{});

    recovered_all = recovered_all && estimates.size() == scene.instances.size();
    std::vector<bool> claimed(scene.instances.size(), false);
    SceneEstimate est;
    est.camera = camera;
    for (const InstanceEstimate& e : estimates) {
      bool matched = false;
      for (std::size_t g = 0; g < scene.instances.size(); ++g) {
        const GroundTruthInstance& inst = scene.instances[g];
        if (claimed[g] || inst.object_id != e.class_id) continue;
        if ((inst.pose.translation - e.pose.translation).norm() <
                kPoseTolerance &&
            (inst.pose.rotation - e.pose.rotation).norm() < kPoseTolerance) {
          claimed[g] = true;
          matched = true;
          break;
        }
      }
      recovered_all = recovered_all && matched;
      est.instances.push_back({e.class_id, e.score, e.pose});
    }
    total_instances += scene.instances.size();
    gts.push_back(scene);
    ests.push_back(est);
  }

  const AverageRecallReport ar = bop_average_recall(gts, ests, models);
  const DetectionMapReport map_report =
      detection_map(detection_records_from_scenes(gts, ests, models));
  const bool ok = recovered_all && ar.ar_mean == 1.0 && ar.ar_vsd == 1.0 &&
                  ar.ar_mssd == 1.0 && ar.ar_mspd == 1.0 &&
                  map_report.value == 1.0;
  return report(5, ok, "zero-noise scenes decode to perfect scores",
                strf("%zu instances over %zu scenes, AR %.17g, mAP %.17g "
                     "(both must equal 1 exactly)",
                     total_instances, gts.size(), ar.ar_mean,
                     map_report.value));
}

// --------------------------------------------------------------------------
// 6. Decoding cost stays near-constant in the instance count.
bool criterion_constant_runtime() {
  constexpr double kRatioLimit = 3.0;
  constexpr double kBudgetMs = 41.6;  // one frame at 24 fps
  constexpr int kRepeats = 5;
  constexpr std::uint64_t kSeed = 75;

  const auto models = default_test_models();
  const CameraIntrinsics camera = default_camera();
  NoiseSpec noise;
  noise.corner_sigma_px = 2.0;
  noise.rotation_sigma_rad = 5.0 * M_PI / 180.0;
  noise.translation_sigma_m = 0.005;

  const BenchmarkReport bench = benchmark_postprocess(
      {10, 70, 100}, kRepeats, models, camera, noise, PostprocessConfig{},
      kSeed);
  const double t10 = bench.buckets[0].mean_ms;
  const double t70 = bench.buckets[1].mean_ms;
  const double t100 = bench.buckets[2].mean_ms;

  const bool ok = t70 <= kRatioLimit * t10 && t100 < kBudgetMs;
  return report(6, ok, "postprocess cost stays flat as instances grow",
                strf("mean of %d runs: %.3f ms @10, %.3f ms @70 (ratio %.2f, "
                     "limit %.1f), %.3f ms @100 (budget %.1f ms)",
                     kRepeats, t10, t70, t70 / t10, kRatioLimit, t100,
                     kBudgetMs));
}

// --------------------------------------------------------------------------
// 7. Averaging the ten most self-consistent poses beats the single best.
bool criterion_topn_trend() {
  constexpr double kPValueLimit = 0.05;
  constexpr int kScenes = 100;

  const auto models = default_test_models();
  const CameraIntrinsics camera = default_camera();
  PostprocessConfig top10;
  top10.top_n = 10;
  PostprocessConfig top1;
  top1.top_n = 1;

  std::vector<double> scene_err10, scene_err1;
  for (int s = 0; s < kScenes; ++s) {
    SceneGenConfig gen;
    gen.count_range = {10, 20};
    const SceneGroundTruth scene =
        generate_scene(models, camera, 5000 + static_cast<std::uint64_t>(s), gen);
    NoiseSpec noise;
    noise.corner_sigma_px = 2.0;
    noise.rotation_sigma_rad = 5.0 * M_PI / 180.0;
    noise.translation_sigma_m = 0.005;
    noise.rng_seed = 9000 + static_cast<std::uint64_t>(s);
    const std::vector<Hypothesis> hyps = mock_predict(scene, models, noise);

    // top_n only affects aggregation, so both runs share cluster order.
    const auto est10 = postprocess_image(hyps, top10);
    const auto est1 = postprocess_image(hyps, top1);
    if (est10.size() != est1.size() || est10.empty()) continue;

    double sum10 = 0.0, sum1 = 0.0;
    int counted = 0;
    for (std::size_t i = 0; i < est10.size(); ++i) {
      const GroundTruthInstance* best = nullptr;
      double best_d = std::numeric_limits<double>::infinity();
      for (const GroundTruthInstance& inst : scene.instances) {
        if (inst.object_id != est10[i].class_id) continue;
        const double d =
            (inst.pose.translation - est10[i].pose.translation).norm();
        if (d < best_d) {
          best_d = d;
          best = &inst;
        }
      }
      if (best == nullptr || best_d > 0.05) continue;
      const SymmetrySet& sym = models.at(best->object_id).symmetries;
      const auto rotation_error = [&](const Mat3& rotation) {
        double err = std::numeric_limits<double>::infinity();
        for (const Pose& t : sym.transforms) {
          err = std::min(
              err, geodesic_distance(rotation, best->pose.rotation * t.rotation));
        }
        return err;
      };
      sum10 += rotation_error(est10[i].pose.rotation);
      sum1 += rotation_error(est1[i].pose.rotation);
      ++counted;
    }
    if (counted == 0) continue;
    scene_err10.push_back(sum10 / counted);
    scene_err1.push_back(sum1 / counted);
  }

  int wins = 0, losses = 0;
  double mean10 = 0.0, mean1 = 0.0;
  for (std::size_t i = 0; i < scene_err10.size(); ++i) {
    mean10 += scene_err10[i];
    mean1 += scene_err1[i];
    if (scene_err10[i] < scene_err1[i]) {
      ++wins;
    } else if (scene_err10[i] > scene_err1[i]) {
      ++losses;
    }
  }
  mean10 /= static_cast<double>(scene_err10.size());
  mean1 /= static_cast<double>(scene_err1.size());
  const double p = sign_test_p(wins + losses, wins);

  const bool ok = scene_err10.size() == kScenes && mean10 <= mean1 &&
                  p < kPValueLimit;
  return report(7, ok, "top-10 pose averaging beats the single best pose",
                strf("mean rot err %.4f rad (n=10) vs %.4f rad (n=1) over "
                     "%zu scenes, sign test %d/%d wins, p %.2e (limit %g)",
                     mean10, mean1, scene_err10.size(), wins, wins + losses, p,
                     kPValueLimit));
}

// --------------------------------------------------------------------------
// 8. With a log base of 3, tripling the depth moves the unclamped pyramid
//    level down by exactly one.
bool criterion_level_shift() {
  constexpr int kPairs = 1000;

  std::mt19937_64 rng(808);
  const PyramidSpec spec;  // log base 3
  std::uniform_real_distribution<double> log_delta(std::log(0.01),
                                                   std::log(0.6));
  std::uniform_real_distribution<double> log_depth(std::log(0.2), std::log(4.0));

  int shifted = 0;
  for (int i = 0; i < kPairs; ++i) {
    const double delta = std::exp(log_delta(rng));
    const double depth = std::exp(log_depth(rng));
    if (assign_level_unclamped(delta, 3.0 * depth, spec) ==
        assign_level_unclamped(delta, depth, spec) - 1) {
      ++shifted;
    }
  }

  const bool ok = shifted == kPairs;
  return report(8, ok, "tripled depth drops the unclamped level by one",
                strf("%d/%d random (size, depth) pairs shifted exactly -1",
                     shifted, kPairs));
}

// --------------------------------------------------------------------------
// 9. Metric oracles: exact closest-point distances, depth-discrepancy
//    identities, and a constructed half-correct recall.
bool criterion_metric_oracles() {
  constexpr double kRecallTolerance = 1e-12;
  constexpr int kTrialsPerMesh = 20;

  std::mt19937_64 rng(909);
  const CameraIntrinsics camera = make_camera();

  const std::vector<ObjectModel> small_meshes = {
      make_object_model(1, make_box_mesh(Vec3(0.05, 0.04, 0.03))),
      make_object_model(2, make_icosphere(0.04, 1)),
      make_object_model(3, make_icosphere(0.035, 2))};
  std::uniform_real_distribution<double> shift(-0.03, 0.03);
  bool adds_exact = true;
  std::size_t largest = 0;
  for (const ObjectModel& model : small_meshes) {
    largest = std::max(largest, model.mesh.vertices.size());
    for (int trial = 0; trial < kTrialsPerMesh; ++trial) {
      const Pose gt = random_front_pose(rng);
      const Pose est{random_rotation(rng),
                     gt.translation + Vec3(shift(rng), shift(rng), shift(rng))};
      adds_exact = adds_exact && adds_error(est, gt, model, -1) ==
                                     adds_brute_force(est, gt, model);
    }
  }

  const ObjectModel box = acceptance_box_model();
  const MetricConfig config = MetricConfig::standard();
  const Pose pose{rotation_about_axis(Vec3(0.3, 1.0, 0.2), 0.7),
                  Vec3(0.02, -0.03, 1.0)};
  bool vsd_ok = true;
  for (const double tau : config.vsd_taus) {
    vsd_ok = vsd_ok && vsd_error(pose, pose, box, camera, tau) == 0.0;
  }
  Pose perturbed = pose;
  perturbed.rotation = rotation_about_axis(Vec3::UnitY(), 0.25) * pose.rotation;
  perturbed.translation += Vec3(0.01, 0.004, 0.02);
  const std::vector<double> curve =
      vsd_errors(perturbed, pose, box, camera, config.vsd_taus);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    vsd_ok = vsd_ok && curve[i] <= curve[i - 1];
  }

  std::map<int, ObjectModel> models;
  models.emplace(1, small_meshes[0]);
  models.emplace(2, small_meshes[1]);
  SceneGroundTruth scene;
  scene.camera = camera;
  const Pose pose_a{rotation_about_axis(Vec3(1.0, 0.4, -0.2), 0.5),
                    Vec3(-0.06, 0.02, 0.9)};
  const Pose pose_b{rotation_about_axis(Vec3(-0.3, 1.0, 0.8), 1.1),
                    Vec3(0.05, -0.04, 1.1)};
  for (const auto& [id, p] : {std::pair<int, Pose>{1, pose_a}, {2, pose_b}}) {
    GroundTruthInstance inst;
    inst.object_id = id;
    inst.pose = p;
    inst.amodal_box = projected_cuboid_box(models.at(id), p, camera);
    scene.instances.push_back(inst);
  }
  SceneEstimate est;
  est.camera = camera;
  est.instances.push_back({1, 0.9, pose_a});
  Pose displaced = pose_b;
  displaced.translation.x() += 10.0 * models.at(2).diameter;
  est.instances.push_back({2, 0.9, displaced});
  const AverageRecallReport ar = bop_average_recall({scene}, {est}, models);
  const bool ar_ok = std::abs(ar.ar_mean - 0.5) < kRecallTolerance &&
                     std::abs(ar.ar_vsd - 0.5) < kRecallTolerance &&
                     std::abs(ar.ar_mssd - 0.5) < kRecallTolerance &&
                     std::abs(ar.ar_mspd - 0.5) < kRecallTolerance;

  const bool ok = adds_exact && vsd_ok && ar_ok;
  return report(9, ok, "metric oracles hold",
                strf("closest-point distance exact on meshes up to %zu "
                     "vertices; self-discrepancy 0 and non-increasing over "
                     "%zu taus; half-correct recall %.17g (want 0.5 +/- %g)",
                     largest, config.vsd_taus.size(), ar.ar_mean,
                     kRecallTolerance));
}

// --------------------------------------------------------------------------
// 10. Ground truth exported as results re-evaluates perfectly and the CSV
//     round trip is bit-identical.
bool criterion_io_fidelity() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gridpose_acceptance_gate";
  fs::create_directories(dir);

  const auto models = default_test_models();
  const CameraIntrinsics camera = default_camera();
  std::vector<SceneGroundTruth> gts;
  std::map<int, SceneEstimate> images;
  int im_id = 1;
  for (const int n : {5, 8, 12}) {
    SceneGenConfig gen;
    gen.count_range = {n, n};
    const SceneGroundTruth scene =
        generate_scene(models, camera, 300 + static_cast<std::uint64_t>(n), gen);
    SceneEstimate est;
    est.camera = camera;
    for (const GroundTruthInstance& inst : scene.instances) {
      est.instances.push_back({inst.object_id, 1.0, inst.pose});
    }
    gts.push_back(scene);
    images[im_id++] = est;
  }

  const std::vector<ResultRow> rows = results_from_estimates(3, images, 0.25);
  const fs::path first = dir / "estimates.csv";
  const fs::path second = dir / "estimates_rewrite.csv";
  write_results_csv(first, rows);
  const std::vector<ResultRow> reread = read_results_csv(first);

  bool fields_exact = reread.size() == rows.size();
  for (std::size_t i = 0; fields_exact && i < rows.size(); ++i) {
    fields_exact =
        reread[i].scene_id == rows[i].scene_id &&
        reread[i].im_id == rows[i].im_id &&
        reread[i].obj_id == rows[i].obj_id &&
        reread[i].score == rows[i].score &&
        (reread[i].rotation - rows[i].rotation).cwiseAbs().maxCoeff() == 0.0 &&
        (reread[i].translation_mm - rows[i].translation_mm)
                .cwiseAbs()
                .maxCoeff() == 0.0 &&
        reread[i].time_s == rows[i].time_s;
  }
  write_results_csv(second, reread);
  const bool bytes_exact = slurp(first) == slurp(second);

  const std::map<int, SceneEstimate> decoded =
      estimates_from_results(reread, camera);
  std::vector<SceneEstimate> est_scenes;
  for (const auto& [id, est] : decoded) est_scenes.push_back(est);
  const AverageRecallReport ar = bop_average_recall(gts, est_scenes, models);
  const DetectionMapReport map_report =
      detection_map(detection_records_from_scenes(gts, est_scenes, models));
  const bool perfect = ar.ar_mean == 1.0 && ar.ar_vsd == 1.0 &&
                       ar.ar_mssd == 1.0 && ar.ar_mspd == 1.0 &&
                       map_report.value == 1.0;

  fs::remove_all(dir);
  const bool ok = fields_exact && bytes_exact && perfect;
  return report(10, ok, "results io is faithful",
                strf("%zu rows: fields %s, rewrite %s, re-evaluated AR %.17g "
                     "mAP %.17g (both must equal 1 exactly)",
                     rows.size(), fields_exact ? "exact" : "DIFFER",
                     bytes_exact ? "byte-identical" : "DIFFERS", ar.ar_mean,
                     map_report.value));
}

}  // namespace

int main() {
  std::printf("acceptance gate: grid pose pipeline\n");
  bool all = true;
  all &= criterion_gradients();
  all &= criterion_symmetry_invariance();
  all &= criterion_class_balance();
  all &= criterion_pnp_round_trip();
  all &= criterion_end_to_end_identity();
  all &= criterion_constant_runtime();
  all &= criterion_topn_trend();
  all &= criterion_level_shift();
  all &= criterion_metric_oracles();
  all &= criterion_io_fidelity();
  std::printf(all ? "acceptance: all 10 criteria passed\n"
                  : "acceptance: FAILURES reported above\n");
  return all ? 0 : 1;
}
