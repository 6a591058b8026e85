#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gridpose/geometry.hpp"

namespace gridpose {

// Binary visibility mask over a rectangular pixel window of the image.
struct PixelMask {
  int x0 = 0, y0 = 0;  // window origin, pixels
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;  // row-major, width * height

  bool empty() const { return width <= 0 || height <= 0; }

  bool contains(double px, double py) const {
    const int ix = static_cast<int>(std::floor(px)) - x0;
    const int iy = static_cast<int>(std::floor(py)) - y0;
    if (ix < 0 || iy < 0 || ix >= width || iy >= height) return false;
    return data[static_cast<std::size_t>(iy) * width + ix] != 0;
  }

  void set(int px, int py) {
    data[static_cast<std::size_t>(py - y0) * width + (px - x0)] = 1;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (std::uint8_t v : data) n += (v != 0);
    return n;
  }
};

// Per-instance occlusion summary: the unoccluded fraction of the projected
// footprint and (when available) the visible-pixel mask itself. A mask
// rasterized from a bounding box stands in when no real mask exists; that
// provenance is carried through to sampled targets.
struct VisibilityInfo {
  double visible_fraction = 1.0;
  PixelMask footprint;
  bool footprint_from_box = false;
};

struct GroundTruthInstance {
  int object_id = 0;
  Pose pose;  // egocentric, camera frame, meters
  VisibilityInfo visibility;
  Box amodal_box;  // full projected extent, pixels
};

struct SceneGroundTruth {
  CameraIntrinsics camera;
  std::vector<GroundTruthInstance> instances;
};

struct EstimatedInstance {
  int object_id = 0;
  double score = 0.0;
  Pose pose;
};

struct SceneEstimate {
  CameraIntrinsics camera;
  std::vector<EstimatedInstance> instances;
};

}  // namespace gridpose
