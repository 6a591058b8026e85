#include "gridpose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <utility>

#include "gridpose/errors.hpp"
#include "gridpose/postprocess.hpp"

namespace gridpose {

namespace {

constexpr double kMinDepth = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Nearest-neighbour queries for the average-closest-point distance.
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) {
      throw EmptyBatch("KdTree3: no points");
    }
    index_.resize(points_.size());
    std::iota(index_.begin(), index_.end(), 0);
    nodes_.reserve(points_.size());
    root_ = build(0, static_cast<int>(points_.size()), 0);
  }

  double nearest_distance(const Vec3& query) const {
    double best = kInf;
    search(root_, query, &best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    int point = 0;
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end, int depth) {
    if (begin >= end) {
      return -1;
    }
    const int axis = depth % 3;
    const int mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid,
                     index_.begin() + end, [&](int a, int b) {
                       return points_[a](axis) < points_[b](axis);
                     });
    Node node;
    node.point = index_[mid];
    node.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    nodes_[self].left = build(begin, mid, depth + 1);
    nodes_[self].right = build(mid + 1, end, depth + 1);
    return self;
  }

  void search(int id, const Vec3& query, double* best) const {
    if (id < 0) {
      return;
    }
    const Node& node = nodes_[id];
    const Vec3& p = points_[node.point];
    *best = std::min(*best, (p - query).squaredNorm());
    const double plane = query(node.axis) - p(node.axis);
    const int near = plane <= 0.0 ? node.left : node.right;
    const int far = plane <= 0.0 ? node.right : node.left;
    search(near, query, best);
    if (plane * plane < *best) {
      search(far, query, best);
    }
  }

  std::vector<Vec3> points_;
  std::vector<int> index_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

std::vector<Vec3> metric_vertices(const ObjectModel& model, int max_vertices) {
  if (model.mesh.vertices.empty()) {
    throw EmptyBatch("metrics: model has no vertices");
  }
  if (max_vertices > 0 &&
      model.mesh.vertices.size() > static_cast<std::size_t>(max_vertices)) {
    return farthest_point_subsample(model.mesh.vertices, max_vertices);
  }
  return model.mesh.vertices;
}

std::vector<Vec3> transform_all(const std::vector<Vec3>& points, const Pose& pose) {
  std::vector<Vec3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = pose.rotation * points[i] + pose.translation;
  }
  return out;
}

// Pixel position, or nothing when the point lies at/behind the camera plane.
std::optional<Vec2> project_or_skip(const Vec3& camera_point,
                                    const CameraIntrinsics& cam) {
  if (camera_point.z() <= kMinDepth) {
    return std::nullopt;
  }
  return Vec2(cam.fx * camera_point.x() / camera_point.z() + cam.cx,
              cam.fy * camera_point.y() / camera_point.z() + cam.cy);
}

// Per-tau mismatch fractions in one pass over the union window.
std::vector<double> vsd_against_taus(const DepthMap& estimate, const DepthMap& gt,
                                     const std::vector<double>& taus,
                                     const DepthMap* scene_depth,
                                     double occlusion_tolerance) {
  const int x_lo = std::min(estimate.x0, gt.x0);
  const int y_lo = std::min(estimate.y0, gt.y0);
  const int x_hi = std::max(estimate.x0 + estimate.width, gt.x0 + gt.width);
  const int y_hi = std::max(estimate.y0 + estimate.height, gt.y0 + gt.height);

  auto visible = [&](double d, int px, int py) {
    if (d <= 0.0) {
      return false;
    }
    if (scene_depth != nullptr) {
      const double s = scene_depth->at(px, py);
      if (s > 0.0 && d > s + occlusion_tolerance) {
        return false;  // occluded by the scene surface
      }
    }
    return true;
  };

  std::size_t union_count = 0;
  std::vector<std::size_t> mismatch(taus.size(), 0);
  for (int py = y_lo; py < y_hi; ++py) {
    for (int px = x_lo; px < x_hi; ++px) {
      const double de = estimate.at(px, py);
      const double dg = gt.at(px, py);
      const bool ve = visible(de, px, py);
      const bool vg = visible(dg, px, py);
      if (!ve && !vg) {
        continue;
      }
      ++union_count;
      if (ve && vg) {
        const double diff = std::abs(de - dg);
        for (std::size_t t = 0; t < taus.size(); ++t) {
          mismatch[t] += diff > taus[t];
        }
      } else {
        for (std::size_t t = 0; t < taus.size(); ++t) {
          ++mismatch[t];
        }
      }
    }
  }
  if (union_count == 0) {
    throw EmptyUnion("vsd: neither depth map covers any pixel");
  }
  std::vector<double> errors(taus.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    errors[t] = static_cast<double>(mismatch[t]) / static_cast<double>(union_count);
  }
  return errors;
}

// Window that covers the projected cuboid, padded and clamped to the image.
struct Window {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

Window cuboid_window(const ObjectModel& model, const Pose& pose,
                     const CameraIntrinsics& cam) {
  double u_min = kInf, u_max = -kInf, v_min = kInf, v_max = -kInf;
  for (const Vec3& c : model.cuboid) {
    const auto uv = project_or_skip(pose.rotation * c + pose.translation, cam);
    if (!uv) {
      // Fall back to the whole image when the cuboid pierces the camera plane.
      return {0, 0, cam.width, cam.height};
    }
    u_min = std::min(u_min, uv->x());
    u_max = std::max(u_max, uv->x());
    v_min = std::min(v_min, uv->y());
    v_max = std::max(v_max, uv->y());
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(u_min)) - 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(v_min)) - 1);
  const int x1 = std::min(cam.width, static_cast<int>(std::ceil(u_max)) + 2);
  const int y1 = std::min(cam.height, static_cast<int>(std::ceil(v_max)) + 2);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

}  // namespace

MetricConfig MetricConfig::standard() {
  MetricConfig config;
  for (int i = 1; i <= 10; ++i) {
    config.vsd_taus.push_back(0.05 * i);
    config.vsd_thresholds.push_back(0.05 * i);
    config.mssd_thresholds.push_back(0.05 * i);
    config.mspd_thresholds_px.push_back(5.0 * i);
  }
  return config;
}

std::vector<Vec3> farthest_point_subsample(const std::vector<Vec3>& points,
                                           int count, std::uint64_t seed) {
  if (count <= 0) {
    throw DegenerateInput("farthest_point_subsample: count must be positive");
  }
  if (points.size() <= static_cast<std::size_t>(count)) {
    return points;
  }
  const std::size_t n = points.size();
  std::vector<Vec3> chosen;
  chosen.reserve(count);
  std::vector<double> min_dist(n, kInf);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t next = pick(rng);
  for (int k = 0; k < count; ++k) {
    chosen.push_back(points[next]);
    double best = -1.0;
    std::size_t best_index = 0;
    for (std::size_t i = 0; i < n; ++i) {
      min_dist[i] = std::min(min_dist[i], (points[i] - chosen.back()).squaredNorm());
      if (min_dist[i] > best) {
        best = min_dist[i];
        best_index = i;
      }
    }
    next = best_index;
  }
  return chosen;
}

double add_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                 int max_vertices) {
  const std::vector<Vec3> verts = metric_vertices(model, max_vertices);
  double total = 0.0;
  for (const Vec3& p : verts) {
    total += ((estimate.rotation * p + estimate.translation) -
              (gt.rotation * p + gt.translation))
                 .norm();
  }
  return total / static_cast<double>(verts.size());
}

double adds_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                  int max_vertices) {
  const std::vector<Vec3> verts = metric_vertices(model, max_vertices);
  const KdTree3 tree(transform_all(verts, estimate));
  double total = 0.0;
  for (const Vec3& p : verts) {
    total += tree.nearest_distance(gt.rotation * p + gt.translation);
  }
  return total / static_cast<double>(verts.size());
}

double mssd_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                  int max_vertices) {
  const std::vector<Vec3> verts = metric_vertices(model, max_vertices);
  const std::vector<Vec3> est_pts = transform_all(verts, estimate);
  double best = kInf;
  for (std::size_t s = 0; s < model.symmetries.size(); ++s) {
    const Pose gt_sym = gt * model.symmetries[s];
    double worst = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
      worst = std::max(
          worst, (est_pts[i] - (gt_sym.rotation * verts[i] + gt_sym.translation))
                     .norm());
    }
    best = std::min(best, worst);
  }
  return best;
}

double mspd_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                  const CameraIntrinsics& camera, int max_vertices) {
  const std::vector<Vec3> verts = metric_vertices(model, max_vertices);
  std::vector<Vec2> est_px(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const auto uv =
        project_or_skip(estimate.rotation * verts[i] + estimate.translation, camera);
    if (!uv) {
      return kInf;  // not scoreable; fails every threshold
    }
    est_px[i] = *uv;
  }
  double best = kInf;
  for (std::size_t s = 0; s < model.symmetries.size(); ++s) {
    const Pose gt_sym = gt * model.symmetries[s];
    double worst = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
      const auto uv = project_or_skip(
          gt_sym.rotation * verts[i] + gt_sym.translation, camera);
      if (!uv) {
        worst = kInf;
        break;
      }
      worst = std::max(worst, (est_px[i] - *uv).norm());
    }
    best = std::min(best, worst);
  }
  return best;
}

DepthMap render_depth_window(const ObjectModel& model, const Pose& pose,
                             const CameraIntrinsics& camera, int x0, int y0,
                             int width, int height) {
  DepthMap map;
  map.x0 = x0;
  map.y0 = y0;
  map.width = std::max(0, width);
  map.height = std::max(0, height);
  map.data.assign(static_cast<std::size_t>(map.width) * map.height, 0.0);
  if (map.width == 0 || map.height == 0) {
    return map;
  }

  const std::vector<Vec3> cam_pts =
      transform_all(model.mesh.vertices, pose);
  for (const auto& tri : model.mesh.triangles) {
    const Vec3& p0 = cam_pts[tri[0]];
    const Vec3& p1 = cam_pts[tri[1]];
    const Vec3& p2 = cam_pts[tri[2]];
    if (p0.z() <= kMinDepth || p1.z() <= kMinDepth || p2.z() <= kMinDepth) {
      continue;  // no near-plane clipping; triangles touching it are dropped
    }
    const Vec2 a(camera.fx * p0.x() / p0.z() + camera.cx,
                 camera.fy * p0.y() / p0.z() + camera.cy);
    const Vec2 b(camera.fx * p1.x() / p1.z() + camera.cx,
                 camera.fy * p1.y() / p1.z() + camera.cy);
    const Vec2 c(camera.fx * p2.x() / p2.z() + camera.cx,
                 camera.fy * p2.y() / p2.z() + camera.cy);

    double area = (b.x() - a.x()) * (c.y() - a.y()) -
                  (b.y() - a.y()) * (c.x() - a.x());
    if (area == 0.0) {
      continue;
    }
    const double sign = area > 0.0 ? 1.0 : -1.0;
    area *= sign;

    const double u_min = std::min({a.x(), b.x(), c.x()});
    const double u_max = std::max({a.x(), b.x(), c.x()});
    const double v_min = std::min({a.y(), b.y(), c.y()});
    const double v_max = std::max({a.y(), b.y(), c.y()});
    // Pixel (px, py) samples at center (px + 0.5, py + 0.5).
    const int px_lo = std::max(x0, static_cast<int>(std::ceil(u_min - 0.5)));
    const int px_hi = std::min(x0 + map.width - 1,
                               static_cast<int>(std::floor(u_max - 0.5)));
    const int py_lo = std::max(y0, static_cast<int>(std::ceil(v_min - 0.5)));
    const int py_hi = std::min(y0 + map.height - 1,
                               static_cast<int>(std::floor(v_max - 0.5)));

    for (int py = py_lo; py <= py_hi; ++py) {
      for (int px = px_lo; px <= px_hi; ++px) {
        const Vec2 s(px + 0.5, py + 0.5);
        const double w0 = sign * ((c.x() - b.x()) * (s.y() - b.y()) -
                                  (c.y() - b.y()) * (s.x() - b.x()));
        const double w1 = sign * ((a.x() - c.x()) * (s.y() - c.y()) -
                                  (a.y() - c.y()) * (s.x() - c.x()));
        const double w2 = sign * ((b.x() - a.x()) * (s.y() - a.y()) -
                                  (b.y() - a.y()) * (s.x() - a.x()));
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) {
          continue;
        }
        // Perspective-correct: 1/z is linear in screen space.
        const double inv_z =
            (w0 / p0.z() + w1 / p1.z() + w2 / p2.z()) / area;
        const double z = 1.0 / inv_z;
        double& cell = map.data[static_cast<std::size_t>(py - y0) * map.width +
                                (px - x0)];
        if (cell == 0.0 || z < cell) {
          cell = z;
        }
      }
    }
  }
  return map;
}

DepthMap render_depth(const ObjectModel& model, const Pose& pose,
                      const CameraIntrinsics& camera) {
  return render_depth_window(model, pose, camera, 0, 0, camera.width,
                             camera.height);
}

double vsd_from_depth_maps(const DepthMap& estimate, const DepthMap& gt,
                           double tau, const DepthMap* scene_depth,
                           double occlusion_tolerance) {
  return vsd_against_taus(estimate, gt, {tau}, scene_depth,
                          occlusion_tolerance)[0];
}

double vsd_error(const Pose& estimate, const Pose& gt, const ObjectModel& model,
                 const CameraIntrinsics& camera, double tau,
                 const DepthMap* scene_depth, double occlusion_tolerance) {
  return vsd_errors(estimate, gt, model, camera, {tau}, scene_depth,
                    occlusion_tolerance)[0];
}

std::vector<double> vsd_errors(const Pose& estimate, const Pose& gt,
                               const ObjectModel& model,
                               const CameraIntrinsics& camera,
                               const std::vector<double>& taus,
                               const DepthMap* scene_depth,
                               double occlusion_tolerance) {
  const Window we = cuboid_window(model, estimate, camera);
  const Window wg = cuboid_window(model, gt, camera);
  const DepthMap de =
      render_depth_window(model, estimate, camera, we.x0, we.y0, we.width, we.height);
  const DepthMap dg =
      render_depth_window(model, gt, camera, wg.x0, wg.y0, wg.width, wg.height);
  return vsd_against_taus(de, dg, taus, scene_depth, occlusion_tolerance);
}

namespace {

// Greedy benchmark matching shared by the recall metrics: estimates in score
// order claim the unmatched same-class ground truth with the lowest error.
// Returns, per GT instance (flattened over scenes), the matched error or
// +inf; `errors` is called as errors(scene, est_index, gt_index).
template <typename ErrorFn>
std::vector<std::pair<int, double>> match_greedy(
    const std::vector<SceneGroundTruth>& gt_scenes,
    const std::vector<SceneEstimate>& est_scenes, ErrorFn&& errors) {
  std::vector<std::pair<int, double>> matched;  // (object_id, error) per GT
  for (std::size_t s = 0; s < gt_scenes.size(); ++s) {
    const auto& gts = gt_scenes[s].instances;
    const auto& ests = est_scenes[s].instances;
    std::vector<int> order(ests.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return ests[a].score > ests[b].score;
    });
    std::vector<double> gt_error(gts.size(), kInf);
    std::vector<bool> taken(gts.size(), false);
    for (int e : order) {
      int best_gt = -1;
      double best_err = kInf;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g] || gts[g].object_id != ests[e].object_id) {
          continue;
        }
        const double err = errors(s, e, static_cast<int>(g));
        if (err < best_err) {
          best_err = err;
          best_gt = static_cast<int>(g);
        }
      }
      if (best_gt >= 0) {
        taken[best_gt] = true;
        gt_error[best_gt] = best_err;
      }
    }
    for (std::size_t g = 0; g < gts.size(); ++g) {
      matched.emplace_back(gts[g].object_id, gt_error[g]);
    }
  }
  return matched;
}

const ObjectModel& model_for(const std::map<int, ObjectModel>& models, int id) {
  const auto it = models.find(id);
  if (it == models.end()) {
    throw MissingAnnotation("metrics: no model for object " + std::to_string(id));
  }
  return it->second;
}

}  // namespace

AverageRecallReport bop_average_recall(
    const std::vector<SceneGroundTruth>& gt_scenes,
    const std::vector<SceneEstimate>& est_scenes,
    const std::map<int, ObjectModel>& models, const MetricConfig& config) {
  if (gt_scenes.size() != est_scenes.size()) {
    throw ShapeMismatch("bop_average_recall: scene count mismatch");
  }
  std::size_t total_gt = 0;
  for (const auto& s : gt_scenes) {
    total_gt += s.instances.size();
  }
  if (total_gt == 0) {
    throw EmptyBatch("bop_average_recall: no ground-truth instances");
  }

  std::vector<std::pair<int, double>> matched_mssd =
      match_greedy(gt_scenes, est_scenes, [&](std::size_t s, int e, int g) {
        const auto& est = est_scenes[s].instances[e];
        const auto& gt = gt_scenes[s].instances[g];
        return mssd_error(est.pose, gt.pose, model_for(models, gt.object_id),
                          config.vertex_subsample);
      });

  std::vector<std::pair<int, double>> matched_mspd =
      match_greedy(gt_scenes, est_scenes, [&](std::size_t s, int e, int g) {
        const auto& est = est_scenes[s].instances[e];
        const auto& gt = gt_scenes[s].instances[g];
        return mspd_error(est.pose, gt.pose, model_for(models, gt.object_id),
                          gt_scenes[s].camera, config.vertex_subsample);
      });

  // VSD: cache per-pair tau vectors while matching on the mean.
  std::vector<std::map<std::pair<int, int>, std::vector<double>>> vsd_cache(
      gt_scenes.size());
  auto vsd_vector_for = [&](std::size_t s, int e, int g) -> const std::vector<double>& {
    auto& cache = vsd_cache[s];
    const auto key = std::make_pair(e, g);
    auto it = cache.find(key);
    if (it == cache.end()) {
      const auto& est = est_scenes[s].instances[e];
      const auto& gt = gt_scenes[s].instances[g];
      const ObjectModel& model = model_for(models, gt.object_id);
      std::vector<double> taus_m;
      taus_m.reserve(config.vsd_taus.size());
      for (double t : config.vsd_taus) {
        taus_m.push_back(t * model.diameter);
      }
      std::vector<double> errs;
      try {
        errs = vsd_errors(est.pose, gt.pose, model, gt_scenes[s].camera, taus_m);
      } catch (const EmptyUnion&) {
        errs.assign(config.vsd_taus.size(), kInf);
      }
      it = cache.emplace(key, std::move(errs)).first;
    }
    return it->second;
  };
  // The depth metric matches on its mean error over the tau grid but
  // thresholds each (tau, theta) pair, so record the winning estimate per GT
  // instead of a scalar.
  std::vector<std::vector<int>> vsd_match(gt_scenes.size());
  for (std::size_t s = 0; s < gt_scenes.size(); ++s) {
    vsd_match[s].assign(gt_scenes[s].instances.size(), -1);
  }
  {
    auto mean_of = [&](std::size_t s, int e, int g) {
      const auto& v = vsd_vector_for(s, e, g);
      return std::accumulate(v.begin(), v.end(), 0.0) /
             static_cast<double>(v.size());
    };
    for (std::size_t s = 0; s < gt_scenes.size(); ++s) {
      const auto& gts = gt_scenes[s].instances;
      const auto& ests = est_scenes[s].instances;
      std::vector<int> order(ests.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return ests[a].score > ests[b].score;
      });
      std::vector<bool> taken(gts.size(), false);
      for (int e : order) {
        int best_gt = -1;
        double best_err = kInf;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (taken[g] || gts[g].object_id != ests[e].object_id) {
            continue;
          }
          const double err = mean_of(s, e, static_cast<int>(g));
          if (err < best_err) {
            best_err = err;
            best_gt = static_cast<int>(g);
          }
        }
        if (best_gt >= 0) {
          taken[best_gt] = true;
          vsd_match[s][best_gt] = e;
        }
      }
    }
  }

  // Recall accumulation.
  struct Tally {
    std::size_t gt = 0;
    std::size_t vsd_hits = 0, mssd_hits = 0, mspd_hits = 0;
    std::size_t vsd_cells = 0, mssd_cells = 0, mspd_cells = 0;
  };
  std::map<int, Tally> per_object;
  {
    std::size_t flat = 0;
    for (std::size_t s = 0; s < gt_scenes.size(); ++s) {
      const double pixel_scale =
          static_cast<double>(gt_scenes[s].camera.width) / 640.0;
      for (std::size_t g = 0; g < gt_scenes[s].instances.size(); ++g, ++flat) {
        const auto& gt = gt_scenes[s].instances[g];
        Tally& tally = per_object[gt.object_id];
        ++tally.gt;
        const ObjectModel& model = model_for(models, gt.object_id);

        const double e_mssd = matched_mssd[flat].second;
        for (double t : config.mssd_thresholds) {
          tally.mssd_hits += e_mssd < t * model.diameter;
        }
        tally.mssd_cells += config.mssd_thresholds.size();

        const double e_mspd = matched_mspd[flat].second;
        for (double t : config.mspd_thresholds_px) {
          tally.mspd_hits += e_mspd < t * pixel_scale;
        }
        tally.mspd_cells += config.mspd_thresholds_px.size();

        if (vsd_match[s][g] >= 0) {
          const auto& v = vsd_vector_for(s, vsd_match[s][g], static_cast<int>(g));
          for (double err : v) {
            for (double t : config.vsd_thresholds) {
              tally.vsd_hits += err < t;
            }
          }
        }
        tally.vsd_cells += config.vsd_taus.size() * config.vsd_thresholds.size();
      }
    }
  }

  AverageRecallReport report;
  std::size_t all_vsd_hits = 0, all_vsd_cells = 0;
  std::size_t all_mssd_hits = 0, all_mssd_cells = 0;
  std::size_t all_mspd_hits = 0, all_mspd_cells = 0;
  for (const auto& [object_id, tally] : per_object) {
    ObjectRecall recall;
    recall.vsd = static_cast<double>(tally.vsd_hits) / tally.vsd_cells;
    recall.mssd = static_cast<double>(tally.mssd_hits) / tally.mssd_cells;
    recall.mspd = static_cast<double>(tally.mspd_hits) / tally.mspd_cells;
    report.per_object[object_id] = recall;
    all_vsd_hits += tally.vsd_hits;
    all_vsd_cells += tally.vsd_cells;
    all_mssd_hits += tally.mssd_hits;
    all_mssd_cells += tally.mssd_cells;
    all_mspd_hits += tally.mspd_hits;
    all_mspd_cells += tally.mspd_cells;
  }
  report.ar_vsd = static_cast<double>(all_vsd_hits) / all_vsd_cells;
  report.ar_mssd = static_cast<double>(all_mssd_hits) / all_mssd_cells;
  report.ar_mspd = static_cast<double>(all_mspd_hits) / all_mspd_cells;
  report.ar_mean = (report.ar_vsd + report.ar_mssd + report.ar_mspd) / 3.0;
  return report;
}

double add_recall(const std::vector<SceneGroundTruth>& gt_scenes,
                  const std::vector<SceneEstimate>& est_scenes,
                  const std::map<int, ObjectModel>& models,
                  double threshold_fraction, int max_vertices) {
  if (gt_scenes.size() != est_scenes.size()) {
    throw ShapeMismatch("add_recall: scene count mismatch");
  }
  const auto matched =
      match_greedy(gt_scenes, est_scenes, [&](std::size_t s, int e, int g) {
        const auto& est = est_scenes[s].instances[e];
        const auto& gt = gt_scenes[s].instances[g];
        const ObjectModel& model = model_for(models, gt.object_id);
        return model.symmetries.trivial()
                   ? add_error(est.pose, gt.pose, model, max_vertices)
                   : adds_error(est.pose, gt.pose, model, max_vertices);
      });
  if (matched.empty()) {
    throw EmptyBatch("add_recall: no ground-truth instances");
  }
  std::size_t hits = 0;
  for (const auto& [object_id, err] : matched) {
    hits += err < threshold_fraction * model_for(models, object_id).diameter;
  }
  return static_cast<double>(hits) / static_cast<double>(matched.size());
}

DetectionMapReport detection_map(const std::vector<DetectionRecord>& records) {
  std::map<int, std::size_t> gt_per_class;
  for (const auto& record : records) {
    for (const auto& gt : record.ground_truths) {
      ++gt_per_class[gt.class_id];
    }
  }
  if (gt_per_class.empty()) {
    throw EmptyBatch("detection_map: no ground-truth boxes");
  }

  DetectionMapReport report;
  for (const auto& [class_id, gt_count] : gt_per_class) {
    // All detections of this class across records, score-descending.
    struct Flat {
      std::size_t record;
      double score;
      const Box* box;
    };
    std::vector<Flat> dets;
    for (std::size_t r = 0; r < records.size(); ++r) {
      for (const auto& det : records[r].detections) {
        if (det.class_id == class_id) {
          dets.push_back({r, det.score, &det.box});
        }
      }
    }
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Flat& a, const Flat& b) { return a.score > b.score; });

    double ap_sum = 0.0;
    int iou_steps = 0;
    for (int step = 0; step < 10; ++step) {
      const double iou_threshold = 0.5 + 0.05 * step;
      ++iou_steps;
      // Greedy matching at this IoU level.
      std::vector<std::vector<bool>> taken(records.size());
      for (std::size_t r = 0; r < records.size(); ++r) {
        taken[r].assign(records[r].ground_truths.size(), false);
      }
      std::vector<bool> is_tp(dets.size(), false);
      for (std::size_t d = 0; d < dets.size(); ++d) {
        const auto& record = records[dets[d].record];
        double best_iou = iou_threshold;
        int best_gt = -1;
        for (std::size_t g = 0; g < record.ground_truths.size(); ++g) {
          if (taken[dets[d].record][g] ||
              record.ground_truths[g].class_id != class_id) {
            continue;
          }
          const double overlap = iou(*dets[d].box, record.ground_truths[g].box);
          if (overlap >= best_iou) {
            best_iou = overlap;
            best_gt = static_cast<int>(g);
          }
        }
        if (best_gt >= 0) {
          taken[dets[d].record][best_gt] = true;
          is_tp[d] = true;
        }
      }
      // Precision-recall curve, 101-point interpolated.
      std::vector<double> precision(dets.size()), recall(dets.size());
      std::size_t tp = 0;
      for (std::size_t d = 0; d < dets.size(); ++d) {
        tp += is_tp[d];
        precision[d] = static_cast<double>(tp) / static_cast<double>(d + 1);
        recall[d] = static_cast<double>(tp) / static_cast<double>(gt_count);
      }
      for (int d = static_cast<int>(dets.size()) - 2; d >= 0; --d) {
        precision[d] = std::max(precision[d], precision[d + 1]);
      }
      double ap = 0.0;
      for (int r = 0; r <= 100; ++r) {
        const double want = r / 100.0;
        double p = 0.0;
        for (std::size_t d = 0; d < dets.size(); ++d) {
          if (recall[d] >= want) {
            p = precision[d];
            break;
          }
        }
        ap += p;
      }
      ap_sum += ap / 101.0;
    }
    report.per_class_ap[class_id] = ap_sum / iou_steps;
  }
  double total = 0.0;
  for (const auto& [class_id, ap] : report.per_class_ap) {
    total += ap;
  }
  report.value = total / static_cast<double>(report.per_class_ap.size());
  return report;
}

std::vector<DetectionRecord> detection_records_from_scenes(
    const std::vector<SceneGroundTruth>& gt_scenes,
    const std::vector<SceneEstimate>& est_scenes,
    const std::map<int, ObjectModel>& models) {
  if (gt_scenes.size() != est_scenes.size()) {
    throw ShapeMismatch("detection_records_from_scenes: scene count mismatch");
  }
  std::vector<DetectionRecord> records(gt_scenes.size());
  for (std::size_t s = 0; s < gt_scenes.size(); ++s) {
    for (const auto& gt : gt_scenes[s].instances) {
      records[s].ground_truths.push_back({gt.object_id, gt.amodal_box});
    }
    for (const auto& est : est_scenes[s].instances) {
      const ObjectModel& model = model_for(models, est.object_id);
      Box box;
      bool valid = true;
      double u_min = kInf, u_max = -kInf, v_min = kInf, v_max = -kInf;
      for (const Vec3& c : model.cuboid) {
        const auto uv = project_or_skip(
            est.pose.rotation * c + est.pose.translation, gt_scenes[s].camera);
        if (!uv) {
          valid = false;
          break;
        }
        u_min = std::min(u_min, uv->x());
        u_max = std::max(u_max, uv->x());
        v_min = std::min(v_min, uv->y());
        v_max = std::max(v_max, uv->y());
      }
      if (!valid || u_max <= u_min || v_max <= v_min) {
        continue;  // not representable as an image box
      }
      box.x1 = u_min;
      box.y1 = v_min;
      box.x2 = u_max;
      box.y2 = v_max;
      records[s].detections.push_back({est.object_id, est.score, box});
    }
  }
  return records;
}

}  // namespace gridpose
