#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "gridpose/encoding.hpp"
#include "gridpose/mesh.hpp"
#include "gridpose/postprocess.hpp"
#include "gridpose/scene.hpp"

namespace gridpose {

// Perturbation model of the mock predictor; all draws come from the "noise"
// substream of rng_seed.
struct NoiseSpec {
  double corner_sigma_px = 0.0;
  double rotation_sigma_rad = 0.0;   // Gaussian angle about a random axis
  double translation_sigma_m = 0.0;  // per-axis Gaussian
  std::pair<double, double> score_range{0.8, 1.0};
  double miss_rate = 0.0;            // per-instance dropout probability
  double false_positive_rate = 0.0;  // expected spurious hypotheses per instance
  std::uint64_t rng_seed = 0;
};

// Placement rules for synthetic scenes. Uniform pose proposals are rejected
// until every instance keeps separable-by-box clustering (same-class IoU
// below the cap), stays visible above the floor, and covers enough grid
// cells to be supported by more than one hypothesis.
struct SceneGenConfig {
  std::pair<int, int> count_range{10, 100};
  std::pair<double, double> depth_range{0.5, 2.0};  // t_z, meters
  double max_same_class_iou = 0.35;
  double min_visible_fraction = 0.6;
  int min_visible_cells = 3;
  int max_placement_tries = 4000;
  double image_margin_px = 4.0;
};

// Random multi-instance scene: uniform rotations, frustum-interior uniform
// translations, visibility from back-to-front box-footprint occlusion
// (later instances win depth ties). Deterministic in (seed); throws
// DegenerateInput when an instance cannot be placed under the constraints.
SceneGroundTruth generate_scene(const std::map<int, ObjectModel>& models,
                                const CameraIntrinsics& camera,
                                std::uint64_t seed,
                                const SceneGenConfig& config = {},
                                const PyramidSpec& pyramid = {});

// Stand-in for a dense prediction head: every visible grid cell of every
// instance emits one hypothesis around the ground truth under NoiseSpec,
// plus optional per-instance misses and uniform false positives. Consistency
// is computed, not faked, so it reflects the injected noise.
std::vector<Hypothesis> mock_predict(const SceneGroundTruth& scene,
                                     const std::map<int, ObjectModel>& models,
                                     const NoiseSpec& noise,
                                     const PyramidSpec& pyramid = {});

struct BenchmarkBucket {
  int instance_count = 0;
  std::size_t hypothesis_count = 0;
  std::size_t detected_instances = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::vector<double> samples_ms;
};

struct BenchmarkReport {
  std::vector<BenchmarkBucket> buckets;
  int repeats = 0;
};

// Times postprocess_image alone (scene generation and mock prediction are
// excluded; one warm-up run per bucket is discarded). Mean and sample
// standard deviation over `repeats` timed runs.
BenchmarkReport benchmark_postprocess(const std::vector<int>& instance_counts,
                                      int repeats,
                                      const std::map<int, ObjectModel>& models,
                                      const CameraIntrinsics& camera,
                                      const NoiseSpec& noise,
                                      const PostprocessConfig& post,
                                      std::uint64_t seed,
                                      const SceneGenConfig& gen = {},
                                      const PyramidSpec& pyramid = {});

// Small object bank and camera used by tests, the benchmark, and the CLI
// defaults: three tabletop-scale shapes, one with a half-turn symmetry.
std::map<int, ObjectModel> default_test_models();
CameraIntrinsics default_camera();

}  // namespace gridpose
