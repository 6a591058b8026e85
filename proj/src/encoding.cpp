#include "gridpose/encoding.hpp"

#include <algorithm>
#include <cmath>

#include "gridpose/errors.hpp"

namespace gridpose {

double assign_level_real(double delta_o, double t_z, const PyramidSpec& spec) {
  if (delta_o <= 0.0 || t_z <= 0.0) {
    throw DegenerateInput("assign_level: delta_o and t_z must be positive");
  }
  if (spec.strides.empty() || spec.log_base <= 1.0) {
    throw DegenerateInput("assign_level: invalid pyramid spec");
  }
  return spec.level_offset + std::log(delta_o / t_z) / std::log(spec.log_base);
}

int assign_level_unclamped(double delta_o, double t_z, const PyramidSpec& spec) {
  // round half up, including for negative values: round(-0.5) == 0
  return static_cast<int>(std::floor(assign_level_real(delta_o, t_z, spec) + 0.5));
}

int assign_level(double delta_o, double t_z, const PyramidSpec& spec) {
  const int raw = assign_level_unclamped(delta_o, t_z, spec);
  return std::clamp(raw, 0, static_cast<int>(spec.strides.size()) - 1);
}

double projected_diameter_px(double delta_o, double t_z, double focal) {
  if (delta_o <= 0.0 || t_z <= 0.0 || focal <= 0.0) {
    throw DegenerateInput("projected_diameter_px: inputs must be positive");
  }
  return focal * delta_o / t_z;
}

Vec16 corners_to_vec16(const std::array<Vec2, 8>& corners) {
  Vec16 v;
  for (int i = 0; i < 8; ++i) {
    v(2 * i) = corners[i].x();
    v(2 * i + 1) = corners[i].y();
  }
  return v;
}

std::array<Vec2, 8> vec16_to_corners(const Vec16& v) {
  std::array<Vec2, 8> corners;
  for (int i = 0; i < 8; ++i) {
    corners[i] = Vec2(v(2 * i), v(2 * i + 1));
  }
  return corners;
}

Vec16 standardize(const std::array<Vec2, 8>& corners_px, const Vec2& center,
                  double delta_o_px) {
  if (delta_o_px <= 0.0) {
    throw DegenerateInput("standardize: delta_o_px must be positive");
  }
  Vec16 out;
  for (int i = 0; i < 8; ++i) {
    out(2 * i) = (center.x() - corners_px[i].x()) / delta_o_px;
    out(2 * i + 1) = (center.y() - corners_px[i].y()) / delta_o_px;
  }
  return out;
}

std::array<Vec2, 8> destandardize(const Vec16& offsets, const Vec2& center,
                                  double delta_o_px) {
  if (delta_o_px <= 0.0) {
    throw DegenerateInput("destandardize: delta_o_px must be positive");
  }
  std::array<Vec2, 8> corners;
  for (int i = 0; i < 8; ++i) {
    corners[i] = Vec2(center.x() - offsets(2 * i) * delta_o_px,
                      center.y() - offsets(2 * i + 1) * delta_o_px);
  }
  return corners;
}

PixelMask rasterize_box(const Box& box, int image_width, int image_height) {
  PixelMask mask;
  // pixels whose center (ix + .5, iy + .5) lies inside the box
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x1 - 0.5)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y1 - 0.5)) + 1);
  const int x1 = std::min(image_width - 1, static_cast<int>(std::ceil(box.x2 - 0.5)) - 1);
  const int y1 = std::min(image_height - 1, static_cast<int>(std::ceil(box.y2 - 0.5)) - 1);
  if (x1 < x0 || y1 < y0) {
    return mask;
  }
  mask.x0 = x0;
  mask.y0 = y0;
  mask.width = x1 - x0 + 1;
  mask.height = y1 - y0 + 1;
  mask.data.assign(static_cast<std::size_t>(mask.width) * mask.height, 1);
  return mask;
}

std::vector<TrainingTarget> sample_true_locations(
    const GroundTruthInstance& instance, const ObjectModel& model,
    const CameraIntrinsics& camera, const PyramidSpec& spec,
    const SamplingThresholds& thresholds) {
  std::vector<TrainingTarget> targets;
  const double visib = instance.visibility.visible_fraction;
  if (visib < thresholds.cls_visibility) {
    return targets;  // too occluded to supervise anything
  }

  const double t_z = instance.pose.translation.z();
  const int level = assign_level(model.diameter, t_z, spec);
  const int stride = spec.strides[level];

  PixelMask fallback;
  const PixelMask* footprint = &instance.visibility.footprint;
  bool from_box = instance.visibility.footprint_from_box;
  if (footprint->empty()) {
    fallback = rasterize_box(instance.amodal_box, camera.width, camera.height);
    footprint = &fallback;
    from_box = true;
  }

  const std::array<Vec2, 8> corners = project(model.cuboid, instance.pose, camera);
  const double delta_px = projected_diameter_px(model.diameter, t_z, camera.fx);
  const Pose allocentric = egocentric_to_allocentric(instance.pose);
  const Vec6 rot6d = matrix_to_rot6d(allocentric.rotation).to_vector();

  const int grid_cols = (camera.width + stride - 1) / stride;
  const int grid_rows = (camera.height + stride - 1) / stride;
  const int col0 = std::clamp(footprint->x0 / stride, 0, grid_cols - 1);
  const int col1 = std::clamp((footprint->x0 + footprint->width) / stride, 0, grid_cols - 1);
  const int row0 = std::clamp(footprint->y0 / stride, 0, grid_rows - 1);
  const int row1 = std::clamp((footprint->y0 + footprint->height) / stride, 0, grid_rows - 1);

  for (int row = row0; row <= row1; ++row) {
    for (int col = col0; col <= col1; ++col) {
      const Vec2 center((col + 0.5) * stride, (row + 0.5) * stride);
      if (!footprint->contains(center.x(), center.y())) {
        continue;
      }
      TrainingTarget t;
      t.location = {level, row, col, center};
      t.class_id = instance.object_id;
      t.box = instance.amodal_box;
      t.corner_offsets = standardize(corners, center, delta_px);
      t.rot6d = rot6d;
      t.translation = instance.pose.translation;
      t.use_for_cls = true;  // visib >= cls threshold, checked above
      t.use_for_reg = visib >= thresholds.reg_visibility;
      t.footprint_from_box = from_box;
      targets.push_back(std::move(t));
    }
  }
  return targets;
}

}  // namespace gridpose
