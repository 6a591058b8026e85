#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "gridpose/geometry.hpp"

namespace gridpose {

// One dense-grid prediction: everything a detection head emits at one
// feature location, already decoded to image/camera units.
struct Hypothesis {
  int index = 0;                    // stable identity within the image
  Eigen::VectorXd class_scores;     // per-class confidence in [0, 1]
  Box box;                          // pixels
  std::array<Vec2, 8> corners{};    // decoded cuboid corners, pixels
  Pose pose;                        // egocentric
  double consistency = 0.0;         // lower is better
};

struct PostprocessConfig {
  double detection_threshold = 0.5;
  double cluster_iou = 0.5;
  std::size_t top_n = 10;            // consistency-ranked poses to average
  std::size_t max_instances = 100;   // per image
  bool discard_singletons = true;
};

// A hypothesis after class selection; carries only what clustering and
// aggregation read (corners have already been folded into consistency).
struct FilteredHypothesis {
  int index = 0;  // original Hypothesis::index
  int class_id = 0;
  double score = 0.0;
  Box box;
  Pose pose;
  double consistency = 0.0;
};

struct InstanceEstimate {
  int class_id = 0;
  double score = 0.0;  // seed (highest member) score
  Pose pose;
  std::vector<int> members;  // original hypothesis indices, seed first
};

// Mean reprojection distance between claimed corners and the corners the
// claimed pose actually produces; the self-consistency measure used to rank
// cluster members.
double consistency_score(const std::array<Vec2, 8>& corners, const Pose& pose,
                         const std::array<Vec3, 8>& model_corners,
                         const CameraIntrinsics& camera);

// Intersection over union of two boxes; zero-area inputs throw InvalidBox.
double iou(const Box& a, const Box& b);

// Argmax class per hypothesis, pruning scores below the detection threshold.
std::vector<FilteredHypothesis> filter_hypotheses(
    const std::vector<Hypothesis>& hypotheses, const PostprocessConfig& config);

// Greedy same-class grouping: highest-score unassigned hypothesis seeds a
// cluster and absorbs every unassigned hypothesis of its class whose box IoU
// with the seed reaches cluster_iou. Returns clusters as indices into the
// filtered list (seed first, members by descending score). At most
// max_instances clusters are seeded per image (by score); singleton clusters
// are dropped afterwards when configured, so overflowing images can return
// fewer. Requires cluster_iou in (0, 1] and positive-area boxes.
std::vector<std::vector<int>> cluster_instances(
    const std::vector<FilteredHypothesis>& filtered,
    const PostprocessConfig& config);

// Pose of a cluster: members ranked by (consistency, index), the top_n
// lowest-consistency poses averaged — translations arithmetically, rotations
// by the chordal mean.
Pose aggregate_pose(const std::vector<FilteredHypothesis>& filtered,
                    const std::vector<int>& cluster,
                    const PostprocessConfig& config);

// Full fixed-cost decode of one image's hypothesis set.
std::vector<InstanceEstimate> postprocess_image(
    const std::vector<Hypothesis>& hypotheses, const PostprocessConfig& config);

}  // namespace gridpose
