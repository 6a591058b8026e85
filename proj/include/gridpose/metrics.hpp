#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "gridpose/geometry.hpp"
#include "gridpose/mesh.hpp"
#include "gridpose/scene.hpp"

namespace gridpose {

// Dense depth image over a pixel window; 0 marks uncovered pixels. A window
// origin lets object renders stay small while comparing in image coordinates.
struct DepthMap {
  int x0 = 0, y0 = 0;
  int width = 0, height = 0;
  std::vector<double> data;  // row-major, meters

  double at(int px, int py) const {
    const int ix = px - x0, iy = py - y0;
    if (ix < 0 || iy < 0 || ix >= width || iy >= height) return 0.0;
    return data[static_cast<std::size_t>(iy) * width + ix];
  }
};

// Threshold grids and sampling controls for the benchmark-style evaluation.
struct MetricConfig {
  std::vector<double> vsd_taus;            // misalignment tolerances, fractions of diameter
  std::vector<double> vsd_thresholds;      // on the vsd error value in [0, 1]
  std::vector<double> mssd_thresholds;     // fractions of diameter
  std::vector<double> mspd_thresholds_px;  // pixels at 640 px width, scaled by width/640
  int vertex_subsample = 1000;
  std::uint64_t subsample_seed = 0;
  double vsd_occlusion_tolerance = 0.015;  // meters, against a scene depth

  // 0.05..0.50 step 0.05 everywhere; 5r..50r pixels for the projective one.
  static MetricConfig standard();
};

// Deterministic farthest-point subsample (returns the input when count covers
// it). Used to bound the vertex sets the distance metrics walk.
std::vector<Vec3> farthest_point_subsample(const std::vector<Vec3>& points,
                                           int count, std::uint64_t seed = 0);

// Average / average-closest / symmetry-aware max distances between the model
// under two poses. max_vertices <= 0 disables subsampling.
double add_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                 int max_vertices = 1000);
double adds_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                  int max_vertices = 1000);
double mssd_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                  int max_vertices = 1000);
double mspd_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                  const CameraIntrinsics& camera, int max_vertices = 1000);

// Z-buffer rasterization of the model into the given pixel window (pixel
// centers, perspective-correct depth, nearest wins). The full-image variant
// uses the camera's width and height.
DepthMap render_depth_window(const ObjectModel& model, const Pose& pose,
                             const CameraIntrinsics& camera, int x0, int y0,
                             int width, int height);
DepthMap render_depth(const ObjectModel& model, const Pose& pose,
                      const CameraIntrinsics& camera);

// Visible-surface discrepancy between two depth maps: over the union of
// covered pixels, the fraction that are not covered by both within tau.
// An optional scene depth restricts coverage to pixels not occluded by the
// scene (object depth <= scene depth + occlusion_tolerance).
// Throws EmptyUnion when neither map covers anything.
double vsd_from_depth_maps(const DepthMap& estimate, const DepthMap& gt,
                           double tau, const DepthMap* scene_depth = nullptr,
                           double occlusion_tolerance = 0.015);

double vsd_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                 const CameraIntrinsics& camera, double tau,
                 const DepthMap* scene_depth = nullptr,
                 double occlusion_tolerance = 0.015);

// One render pair evaluated at several taus.
std::vector<double> vsd_errors(const Pose& estimate, const Pose& gt,
                               const ObjectModel& model,
                               const CameraIntrinsics& camera,
                               const std::vector<double>& taus,
                               const DepthMap* scene_depth = nullptr,
                               double occlusion_tolerance = 0.015);

struct ObjectRecall {
  double vsd = 0.0, mssd = 0.0, mspd = 0.0;
  double mean() const { return (vsd + mssd + mspd) / 3.0; }
};

struct AverageRecallReport {
  double ar_vsd = 0.0, ar_mssd = 0.0, ar_mspd = 0.0;
  double ar_mean = 0.0;
  std::map<int, ObjectRecall> per_object;
};

// Benchmark-style pose evaluation: per image and class, estimates in score
// order greedily claim the unmatched ground truth with the lowest error;
// each recall is the fraction of all GT instances whose matched error clears
// the threshold, averaged over the threshold grid (and tau grid for the
// depth metric).
AverageRecallReport bop_average_recall(
    const std::vector<SceneGroundTruth>& gt_scenes,
    const std::vector<SceneEstimate>& est_scenes,
    const std::map<int, ObjectModel>& models, const MetricConfig& config = MetricConfig::standard());

// Classic distance recall: fraction of GT instances whose matched estimate
// has add_error (adds_error for objects with a nontrivial symmetry set)
// below threshold_fraction * diameter.
double add_recall(const std::vector<SceneGroundTruth>& gt_scenes,
                  const std::vector<SceneEstimate>& est_scenes,
                  const std::map<int, ObjectModel>& models,
                  double threshold_fraction = 0.1, int max_vertices = 1000);

// Detection-style mAP over axis-aligned boxes, IoU 0.50:0.05:0.95,
// 101-point interpolated precision, averaged over classes present in GT.
struct DetectionRecord {
  struct Det {
    int class_id = 0;
    double score = 0.0;
    Box box;
  };
  struct Gt {
    int class_id = 0;
    Box box;
  };
  std::vector<Det> detections;
  std::vector<Gt> ground_truths;
};

struct DetectionMapReport {
  double value = 0.0;
  std::map<int, double> per_class_ap;
};

DetectionMapReport detection_map(const std::vector<DetectionRecord>& records);

// Boxes for pose-only estimates: the bounding box of the cuboid corners
// projected under each pose (GT boxes use the annotated amodal box).
std::vector<DetectionRecord> detection_records_from_scenes(
    const std::vector<SceneGroundTruth>& gt_scenes,
    const std::vector<SceneEstimate>& est_scenes,
    const std::map<int, ObjectModel>& models);

}  // namespace gridpose
