#pragma once

#include <array>
#include <vector>

#include "gridpose/geometry.hpp"
#include "gridpose/mesh.hpp"
#include "gridpose/scene.hpp"

namespace gridpose {

using Vec16 = Eigen::Matrix<double, 16, 1>;

// Feature-pyramid geometry plus the scale-assignment constants: an instance
// with apparent size ratio delta_o / t_z lands on level
// round(level_offset + log_base^-1(delta_o / t_z)), clamped to valid levels.
struct PyramidSpec {
  std::vector<int> strides{8, 16, 32};
  double level_offset = 2.0;  // "f"
  double log_base = 3.0;      // "d"
};

struct FeatureLocation {
  int level = 0;
  int row = 0, col = 0;
  Vec2 center = Vec2::Zero();  // pixels: ((col + .5) * stride, (row + .5) * stride)
};

// One supervised grid location of one instance.
struct TrainingTarget {
  FeatureLocation location;
  int class_id = 0;
  Box box;                          // amodal, raw pixels
  Vec16 corner_offsets;             // standardized cuboid-corner offsets y_G
  Vec6 rot6d;                       // allocentric rotation target
  Vec3 translation = Vec3::Zero();  // meters
  bool use_for_cls = false;
  bool use_for_reg = false;
  bool footprint_from_box = false;  // mask was a rasterized-box stand-in
};

// Unrounded pyramid level for an apparent size; no clamping.
double assign_level_real(double delta_o, double t_z, const PyramidSpec& spec);

// Round-half-up of the above; still unclamped (may be negative or past the
// last level).
int assign_level_unclamped(double delta_o, double t_z, const PyramidSpec& spec);

// Clamped to [0, strides.size() - 1]. Throws DegenerateInput for
// non-positive delta_o or t_z.
int assign_level(double delta_o, double t_z, const PyramidSpec& spec);

// Projected-diameter normalizer delta_o_px = focal * delta_o / t_z.
double projected_diameter_px(double delta_o, double t_z, double focal);

// Standardized corner offsets y_G = (center - corner) / delta_o_px, packed
// (dx0, dy0, dx1, dy1, ...). destandardize inverts exactly.
Vec16 standardize(const std::array<Vec2, 8>& corners_px, const Vec2& center,
                  double delta_o_px);
std::array<Vec2, 8> destandardize(const Vec16& offsets, const Vec2& center,
                                  double delta_o_px);

Vec16 corners_to_vec16(const std::array<Vec2, 8>& corners);
std::array<Vec2, 8> vec16_to_corners(const Vec16& v);

// Visibility cutoffs: below cls_visibility an instance contributes nothing;
// between the two it supervises classification only.
struct SamplingThresholds {
  double cls_visibility = 0.25;
  double reg_visibility = 0.5;
};

// All grid cells of the assigned level whose center falls inside the visible
// footprint, each carrying the full target tuple for its instance. When the
// instance has no footprint mask, the amodal box is rasterized in its place
// and the targets are flagged accordingly.
std::vector<TrainingTarget> sample_true_locations(
    const GroundTruthInstance& instance, const ObjectModel& model,
    const CameraIntrinsics& camera, const PyramidSpec& spec = {},
    const SamplingThresholds& thresholds = {});

// Rasterizes a box into a mask whose pixels are those with center inside it.
PixelMask rasterize_box(const Box& box, int image_width, int image_height);

}  // namespace gridpose
