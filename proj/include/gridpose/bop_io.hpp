#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gridpose/mesh.hpp"
#include "gridpose/scene.hpp"

namespace gridpose {

// Scene ground truth in the benchmark JSON layout: a directory holding
// scene_gt.json, scene_gt_info.json and scene_camera.json keyed by image id.
// Rotations are row-major 3x3, translations millimeters; boxes [x, y, w, h].
// Missing per-instance info entries raise MissingAnnotation; the visible
// bounding box stands in for the (absent) pixel mask and is flagged as such.
std::map<int, SceneGroundTruth> load_bop_scene(const std::filesystem::path& dir,
                                               int default_width = 640,
                                               int default_height = 480);

void save_bop_scene(const std::filesystem::path& dir,
                    const std::map<int, SceneGroundTruth>& images);

// Pose results CSV: header scene_id,im_id,obj_id,score,R,t,time with R as 9
// space-separated row-major floats, t in millimeters, time in seconds.
// Fields are kept in file units so a read/write cycle is byte-identical.
struct ResultRow {
  int scene_id = 0;
  int im_id = 0;
  int obj_id = 0;
  double score = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation_mm = Vec3::Zero();
  double time_s = -1.0;
};

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
void write_results_csv(const std::filesystem::path& path,
                       const std::vector<ResultRow>& rows);

// Conversions between result rows and in-memory estimates (meters).
std::vector<ResultRow> results_from_estimates(
    int scene_id, const std::map<int, SceneEstimate>& images, double time_s = -1.0);
std::map<int, SceneEstimate> estimates_from_results(
    const std::vector<ResultRow>& rows, const CameraIntrinsics& camera);

// Model bank: obj_XXXXXX.ply meshes (millimeters by convention) with an
// optional models_info.json supplying diameters (mm) and symmetries
// (discrete 4x4 row-major with mm translations, continuous axes discretized).
// Info entries override computed values.
std::map<int, ObjectModel> load_models_dir(const std::filesystem::path& models_dir,
                                           bool millimeter_units = true,
                                           int symmetry_steps = kDefaultSymmetrySteps);

void write_models_info_json(const std::filesystem::path& path,
                            const std::map<int, ObjectModel>& models);

// Whole-file atomic write (temp file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace gridpose
