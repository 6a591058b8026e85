#include "gridpose/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "gridpose/errors.hpp"
#include "gridpose/random.hpp"

namespace gridpose {

namespace {

struct PlacedInstance {
  int object_id = 0;
  Pose pose;
  Box box;                 // amodal, raw pixels
  int ix0 = 0, iy0 = 0;    // solid pixel window of the box
  int ix1 = -1, iy1 = -1;  // inclusive
  std::size_t area_px = 0;
  std::size_t visible_px = 0;
  int level = 0;
};

// Pixel window of a box under pixel-center semantics (same cells a solid
// rasterization would set).
void pixel_window(const Box& box, int width, int height, int* x0, int* y0,
                  int* x1, int* y1) {
  *x0 = std::max(0, static_cast<int>(std::floor(box.x1 - 0.5)) + 1);
  *y0 = std::max(0, static_cast<int>(std::floor(box.y1 - 0.5)) + 1);
  *x1 = std::min(width - 1, static_cast<int>(std::ceil(box.x2 - 0.5)) - 1);
  *y1 = std::min(height - 1, static_cast<int>(std::ceil(box.y2 - 0.5)) - 1);
}

// Depth competition: nearer instance owns the pixel, later placement wins ties.
bool beats(double new_tz, int owner, const std::vector<PlacedInstance>& placed) {
  return owner < 0 || new_tz <= placed[owner].pose.translation.z();
}

// Grid cells of `level` whose center pixel the instance owns.
int count_visible_cells(const PlacedInstance& inst, int self_index,
                        const std::vector<int>& owner, int width,
                        const PyramidSpec& pyramid,
                        const PlacedInstance* challenger) {
  const int stride = pyramid.strides[inst.level];
  int cells = 0;
  const int col0 = inst.ix0 / stride, col1 = inst.ix1 / stride;
  const int row0 = inst.iy0 / stride, row1 = inst.iy1 / stride;
  for (int row = row0; row <= row1; ++row) {
    for (int col = col0; col <= col1; ++col) {
      const double cx = (col + 0.5) * stride;
      const double cy = (row + 0.5) * stride;
      const int px = static_cast<int>(cx), py = static_cast<int>(cy);
      if (px < inst.ix0 || px > inst.ix1 || py < inst.iy0 || py > inst.iy1) {
        continue;
      }
      if (owner[static_cast<std::size_t>(py) * width + px] != self_index) {
        continue;
      }
      if (challenger != nullptr && px >= challenger->ix0 && px <= challenger->ix1 &&
          py >= challenger->iy0 && py <= challenger->iy1 &&
          challenger->pose.translation.z() <= inst.pose.translation.z()) {
        continue;  // the tentative instance would take this pixel
      }
      ++cells;
    }
  }
  return cells;
}

}  // namespace

SceneGroundTruth generate_scene(const std::map<int, ObjectModel>& models,
                                const CameraIntrinsics& camera,
                                std::uint64_t seed, const SceneGenConfig& config,
                                const PyramidSpec& pyramid) {
  if (models.empty()) {
    throw EmptyBatch("generate_scene: no models");
  }
  if (camera.width <= 0 || camera.height <= 0 || camera.fx <= 0 || camera.fy <= 0) {
    throw DegenerateInput("generate_scene: invalid camera");
  }
  auto rng = make_rng(seed, "scene");

  std::vector<const ObjectModel*> bank;
  for (const auto& [id, model] : models) {
    bank.push_back(&model);
  }
  std::uniform_int_distribution<std::size_t> pick_model(0, bank.size() - 1);
  std::uniform_int_distribution<int> pick_count(config.count_range.first,
                                                config.count_range.second);
  std::uniform_real_distribution<double> pick_depth(config.depth_range.first,
                                                    config.depth_range.second);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int count = pick_count(rng);
  const int width = camera.width, height = camera.height;
  std::vector<int> owner(static_cast<std::size_t>(width) * height, -1);
  std::vector<PlacedInstance> placed;
  placed.reserve(count);

  for (int k = 0; k < count; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < config.max_placement_tries && !ok; ++attempt) {
      const ObjectModel& model = *bank[pick_model(rng)];
      PlacedInstance cand;
      cand.object_id = model.object_id;
      cand.pose.rotation = random_rotation(rng);
      const double tz = pick_depth(rng);

      // Aim the projected center inside the margins, then verify exactly.
      const double radius_px = camera.fx * (model.diameter / 2.0) / tz;
      const double lo_u = config.image_margin_px + radius_px;
      const double hi_u = width - config.image_margin_px - radius_px;
      const double lo_v = config.image_margin_px + radius_px;
      const double hi_v = height - config.image_margin_px - radius_px;
      if (lo_u >= hi_u || lo_v >= hi_v) {
        continue;  // object too large at this depth
      }
      const double u = lo_u + unit(rng) * (hi_u - lo_u);
      const double v = lo_v + unit(rng) * (hi_v - lo_v);
      cand.pose.translation =
          Vec3((u - camera.cx) * tz / camera.fx, (v - camera.cy) * tz / camera.fy, tz);

      std::array<Vec2, 8> corners;
      try {
        corners = project(model.cuboid, cand.pose, camera);
      } catch (const BehindCamera&) {
        continue;
      }
      double u_min = corners[0].x(), u_max = corners[0].x();
      double v_min = corners[0].y(), v_max = corners[0].y();
      for (const Vec2& c : corners) {
        u_min = std::min(u_min, c.x());
        u_max = std::max(u_max, c.x());
        v_min = std::min(v_min, c.y());
        v_max = std::max(v_max, c.y());
      }
      if (u_min < config.image_margin_px || v_min < config.image_margin_px ||
          u_max > width - config.image_margin_px ||
          v_max > height - config.image_margin_px) {
        continue;
      }
      cand.box = Box{u_min, v_min, u_max, v_max};
      pixel_window(cand.box, width, height, &cand.ix0, &cand.iy0, &cand.ix1,
                   &cand.iy1);
      if (cand.ix1 < cand.ix0 || cand.iy1 < cand.iy0) {
        continue;
      }
      cand.area_px = static_cast<std::size_t>(cand.ix1 - cand.ix0 + 1) *
                     (cand.iy1 - cand.iy0 + 1);
      cand.level = assign_level(model.diameter, tz, pyramid);

      // Same-class separability keeps box clustering from merging instances.
      bool separable = true;
      for (const PlacedInstance& other : placed) {
        if (other.object_id == cand.object_id &&
            iou(cand.box, other.box) >= config.max_same_class_iou) {
          separable = false;
          break;
        }
      }
      if (!separable) {
        continue;
      }

      // Pixels the candidate would take, and from whom.
      std::size_t taken_total = 0;
      std::vector<std::size_t> taken(placed.size(), 0);
      for (int py = cand.iy0; py <= cand.iy1; ++py) {
        for (int px = cand.ix0; px <= cand.ix1; ++px) {
          const int o = owner[static_cast<std::size_t>(py) * width + px];
          if (beats(tz, o, placed)) {
            ++taken_total;
            if (o >= 0) {
              ++taken[o];
            }
          }
        }
      }
      if (static_cast<double>(taken_total) / static_cast<double>(cand.area_px) <
          config.min_visible_fraction) {
        continue;
      }

      // The candidate's own grid support, evaluated against the current map.
      {
        const int stride = pyramid.strides[cand.level];
        int cells = 0;
        for (int row = cand.iy0 / stride; row <= cand.iy1 / stride; ++row) {
          for (int col = cand.ix0 / stride; col <= cand.ix1 / stride; ++col) {
            const int px = static_cast<int>((col + 0.5) * stride);
            const int py = static_cast<int>((row + 0.5) * stride);
            if (px < cand.ix0 || px > cand.ix1 || py < cand.iy0 ||
                py > cand.iy1) {
              continue;
            }
            cells += beats(tz, owner[static_cast<std::size_t>(py) * width + px],
                           placed);
          }
        }
        if (cells < config.min_visible_cells) {
          continue;
        }
      }

      // Everyone who loses pixels must stay visible and supported.
      bool viable = true;
      for (std::size_t i = 0; i < placed.size() && viable; ++i) {
        if (taken[i] == 0) {
          continue;
        }
        const std::size_t remaining = placed[i].visible_px - taken[i];
        if (static_cast<double>(remaining) /
                static_cast<double>(placed[i].area_px) <
            config.min_visible_fraction) {
          viable = false;
          break;
        }
        if (count_visible_cells(placed[i], static_cast<int>(i), owner, width,
                                pyramid, &cand) < config.min_visible_cells) {
          viable = false;
        }
      }
      if (!viable) {
        continue;
      }

      // Commit.
      const int self = static_cast<int>(placed.size());
      for (int py = cand.iy0; py <= cand.iy1; ++py) {
        for (int px = cand.ix0; px <= cand.ix1; ++px) {
          int& o = owner[static_cast<std::size_t>(py) * width + px];
          if (beats(tz, o, placed)) {
            o = self;
          }
        }
      }
      cand.visible_px = taken_total;
      for (std::size_t i = 0; i < placed.size(); ++i) {
        placed[i].visible_px -= taken[i];
      }
      placed.push_back(cand);
      ok = true;
    }
    if (!ok) {
      throw DegenerateInput("generate_scene: could not place instance " +
                            std::to_string(k) + " of " + std::to_string(count) +
                            " within " +
                            std::to_string(config.max_placement_tries) +
                            " tries");
    }
  }

  // Owner map -> per-instance footprints.
  SceneGroundTruth scene;
  scene.camera = camera;
  scene.instances.resize(placed.size());
  for (std::size_t i = 0; i < placed.size(); ++i) {
    GroundTruthInstance& inst = scene.instances[i];
    inst.object_id = placed[i].object_id;
    inst.pose = placed[i].pose;
    inst.amodal_box = placed[i].box;
    PixelMask& mask = inst.visibility.footprint;
    mask.x0 = placed[i].ix0;
    mask.y0 = placed[i].iy0;
    mask.width = placed[i].ix1 - placed[i].ix0 + 1;
    mask.height = placed[i].iy1 - placed[i].iy0 + 1;
    mask.data.assign(static_cast<std::size_t>(mask.width) * mask.height, 0);
    inst.visibility.footprint_from_box = false;
  }
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      const int o = owner[static_cast<std::size_t>(py) * width + px];
      if (o >= 0) {
        scene.instances[o].visibility.footprint.set(px, py);
      }
    }
  }
  for (std::size_t i = 0; i < placed.size(); ++i) {
    scene.instances[i].visibility.visible_fraction =
        static_cast<double>(placed[i].visible_px) /
        static_cast<double>(placed[i].area_px);
  }
  return scene;
}

std::vector<Hypothesis> mock_predict(const SceneGroundTruth& scene,
                                     const std::map<int, ObjectModel>& models,
                                     const NoiseSpec& noise,
                                     const PyramidSpec& pyramid) {
  auto rng = make_rng(noise.rng_seed, "noise");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> score_draw(noise.score_range.first,
                                                    noise.score_range.second);
  std::bernoulli_distribution miss(std::clamp(noise.miss_rate, 0.0, 1.0));

  int num_classes = 1;
  for (const auto& [id, model] : models) {
    num_classes = std::max(num_classes, id + 1);
  }

  int index = 0;
  std::vector<Hypothesis> hypotheses;
  auto emit = [&](const ObjectModel& model, const Pose& gt_pose, const Box& box) {
    Hypothesis h;
    h.index = index++;
    // Pose noise: Gaussian angle about a uniform axis, per-axis Gaussian shift.
    Pose noisy = gt_pose;
    if (noise.rotation_sigma_rad > 0.0) {
      Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
      while (axis.norm() < 1e-12) {
        axis = Vec3(gauss(rng), gauss(rng), gauss(rng));
      }
      const double angle = noise.rotation_sigma_rad * gauss(rng);
      noisy.rotation =
          Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix() *
          gt_pose.rotation;
    }
    if (noise.translation_sigma_m > 0.0) {
      noisy.translation += noise.translation_sigma_m *
                           Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    h.pose = noisy;
    h.box = box;
    std::array<Vec2, 8> exact = project(model.cuboid, gt_pose, scene.camera);
    for (std::size_t c = 0; c < 8; ++c) {
      h.corners[c] = exact[c] + noise.corner_sigma_px * Vec2(gauss(rng), gauss(rng));
    }
    try {
      h.consistency =
          consistency_score(h.corners, h.pose, model.cuboid, scene.camera);
    } catch (const BehindCamera&) {
      h.consistency = 1e9;  // a pose this wrong never ranks into the average
    }
    h.class_scores = Eigen::VectorXd::Zero(num_classes);
    const double s = score_draw(rng);
    h.class_scores(model.object_id) = s;
    hypotheses.push_back(std::move(h));
  };

  for (const GroundTruthInstance& inst : scene.instances) {
    const auto it = models.find(inst.object_id);
    if (it == models.end()) {
      throw MissingAnnotation("mock_predict: no model for object " +
                              std::to_string(inst.object_id));
    }
    if (miss(rng)) {
      continue;
    }
    const auto targets =
        sample_true_locations(inst, it->second, scene.camera, pyramid);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      emit(it->second, inst.pose, inst.amodal_box);
    }
  }

  // Spurious hypotheses, uniform over the frustum.
  const double expected =
      noise.false_positive_rate * static_cast<double>(scene.instances.size());
  if (expected > 0.0) {
    std::poisson_distribution<int> spurious(expected);
    const int fp_count = spurious(rng);
    std::uniform_int_distribution<std::size_t> pick_model(0, models.size() - 1);
    std::vector<const ObjectModel*> bank;
    for (const auto& [id, model] : models) {
      bank.push_back(&model);
    }
    for (int f = 0; f < fp_count; ++f) {
      const ObjectModel& model = *bank[pick_model(rng)];
      Pose pose;
      pose.rotation = random_rotation(rng);
      const double tz = 0.5 + 1.5 * unit(rng);
      const double u = scene.camera.width * unit(rng);
      const double v = scene.camera.height * unit(rng);
      pose.translation = Vec3((u - scene.camera.cx) * tz / scene.camera.fx,
                              (v - scene.camera.cy) * tz / scene.camera.fy, tz);
      std::array<Vec2, 8> corners;
      try {
        corners = project(model.cuboid, pose, scene.camera);
      } catch (const BehindCamera&) {
        continue;
      }
      double u_min = corners[0].x(), u_max = corners[0].x();
      double v_min = corners[0].y(), v_max = corners[0].y();
      for (const Vec2& c : corners) {
        u_min = std::min(u_min, c.x());
        u_max = std::max(u_max, c.x());
        v_min = std::min(v_min, c.y());
        v_max = std::max(v_max, c.y());
      }
      if (u_max <= u_min || v_max <= v_min) {
        continue;
      }
      emit(model, pose, Box{u_min, v_min, u_max, v_max});
    }
  }
  return hypotheses;
}

BenchmarkReport benchmark_postprocess(const std::vector<int>& instance_counts,
                                      int repeats,
                                      const std::map<int, ObjectModel>& models,
                                      const CameraIntrinsics& camera,
                                      const NoiseSpec& noise,
                                      const PostprocessConfig& post,
                                      std::uint64_t seed,
                                      const SceneGenConfig& gen,
                                      const PyramidSpec& pyramid) {
  if (repeats < 1) {
    throw DegenerateInput("benchmark_postprocess: repeats must be >= 1");
  }
  BenchmarkReport report;
  report.repeats = repeats;
  for (int count : instance_counts) {
    SceneGenConfig bucket_gen = gen;
    bucket_gen.count_range = {count, count};
    const std::string tag = std::to_string(count);
    const SceneGroundTruth scene = generate_scene(
        models, camera, substream_seed(seed, "bench-scene-" + tag), bucket_gen,
        pyramid);
    NoiseSpec bucket_noise = noise;
    bucket_noise.rng_seed = substream_seed(seed, "bench-noise-" + tag);
    const std::vector<Hypothesis> hypotheses =
        mock_predict(scene, models, bucket_noise, pyramid);

    BenchmarkBucket bucket;
    bucket.instance_count = count;
    bucket.hypothesis_count = hypotheses.size();

    // Warm-up run, also used to calibrate how many iterations one timing
    // sample needs: sub-millisecond decodes are timed over enough iterations
    // to amortize clock granularity and scheduler jitter.
    const auto warm_start = std::chrono::steady_clock::now();
    bucket.detected_instances = postprocess_image(hypotheses, post).size();
    const double warm_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - warm_start)
                               .count();
    constexpr double kTargetSampleMs = 5.0;
    const int iters_per_sample = static_cast<int>(std::clamp(
        std::ceil(kTargetSampleMs / std::max(warm_ms, 1e-4)), 1.0, 10000.0));

    bucket.samples_ms.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      for (int it = 0; it < iters_per_sample; ++it) {
        const auto result = postprocess_image(hypotheses, post);
        static_cast<void>(result);
      }
      const auto stop = std::chrono::steady_clock::now();
      bucket.samples_ms.push_back(
          std::chrono::duration<double, std::milli>(stop - start).count() /
          iters_per_sample);
    }
    double mean = 0.0;
    for (double s : bucket.samples_ms) {
      mean += s;
    }
    mean /= static_cast<double>(repeats);
    double var = 0.0;
    for (double s : bucket.samples_ms) {
      var += (s - mean) * (s - mean);
    }
    bucket.mean_ms = mean;
    bucket.std_ms = repeats > 1 ? std::sqrt(var / (repeats - 1)) : 0.0;
    report.buckets.push_back(std::move(bucket));
  }
  return report;
}

std::map<int, ObjectModel> default_test_models() {
  // Household-object scale with deliberately mixed diameters (~0.24, 0.16,
  // 0.12 m). Sparse scenes draw all classes equally, so the big class makes
  // even a handful of instances cover a sizable part of the image; in crowded
  // scenes the per-try class redraw drifts placement toward the small
  // classes. Both effects push hypothesis counts toward the image-area bound
  // instead of scaling with the instance count, which is the regime the
  // runtime benchmark is about.
  std::map<int, ObjectModel> models;
  models.emplace(1, make_object_model(1, make_box_mesh(Vec3(0.095, 0.06, 0.045))));
  models.emplace(2, make_object_model(2, make_icosphere(0.08, 2)));
  // Elongated bar with a half-turn symmetry about z; exercises the
  // symmetry-aware metric paths.
  models.emplace(
      3, make_object_model(
             3, make_box_mesh(Vec3(0.055, 0.016, 0.016)),
             build_symmetry_set(
                 {Pose{rotation_about_axis(Vec3::UnitZ(), std::numbers::pi),
                       Vec3::Zero()}},
                 {})));
  return models;
}

CameraIntrinsics default_camera() {
  CameraIntrinsics cam;
  cam.fx = 575.0;
  cam.fy = 575.0;
  cam.cx = 320.0;
  cam.cy = 240.0;
  cam.width = 640;
  cam.height = 480;
  return cam;
}

}  // namespace gridpose
