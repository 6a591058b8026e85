#include "gridpose/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridpose/errors.hpp"

namespace gridpose {

double consistency_score(const std::array<Vec2, 8>& corners, const Pose& pose,
                         const std::array<Vec3, 8>& model_corners,
                         const CameraIntrinsics& camera) {
  double total = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    total += (project(model_corners[k], pose, camera) - corners[k]).norm();
  }
  return total / 8.0;
}

double iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) {
    throw InvalidBox("iou: zero-area box");
  }
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

std::vector<FilteredHypothesis> filter_hypotheses(
    const std::vector<Hypothesis>& hypotheses, const PostprocessConfig& config) {
  std::vector<FilteredHypothesis> kept;
  kept.reserve(hypotheses.size());
  for (const Hypothesis& h : hypotheses) {
    if (h.class_scores.size() == 0) {
      throw ShapeMismatch("filter_hypotheses: hypothesis without class scores");
    }
    Eigen::Index best = 0;
    const double score = h.class_scores.maxCoeff(&best);
    if (score < config.detection_threshold) {
      continue;
    }
    FilteredHypothesis f;
    f.index = h.index;
    f.class_id = static_cast<int>(best);
    f.score = score;
    f.box = h.box;
    f.pose = h.pose;
    f.consistency = h.consistency;
    kept.push_back(f);
  }
  return kept;
}

namespace {

// Uniform grid over box extents so each hypothesis only probes seeds whose
// boxes could overlap its own. Cell size trades index fan-out against
// list length; boxes here are tens to a couple hundred pixels.
constexpr double kClusterCellPx = 64.0;
// Class ids get their own grid planes when they form a small dense range
// (the argmax ids from filter_hypotheses always do); pathological id ranges
// fall back to a single plane with the per-probe class check doing the work.
constexpr int kMaxClassPlanes = 64;
// Rank ordering is a counting sort over score buckets spread across the
// batch's actual score range; runs of equal buckets get an exact fix-up so
// the result matches a full (score desc, index asc) sort while touching
// memory sequentially and keeping runs short however many hypotheses share
// a narrow score band.
constexpr int kScoreBuckets = 4096;

// The per-hypothesis fields every hot loop reads, packed into one cache line
// so a probe costs one memory access instead of six.
struct alignas(64) HypProbe {
  double x1, y1, x2, y2;
  double area;
  double score;
  int cls;
  int index;  // position in the filtered list, the deterministic tie-break
};
static_assert(sizeof(HypProbe) == 64);

// Inline seed-id capacity of one grid cell before spilling to the shared
// side list; per-cell-per-class seed density is tiny because matching seeds
// would have merged instead.
constexpr int kCellSlots = 8;

}  // namespace

std::vector<std::vector<int>> cluster_instances(
    const std::vector<FilteredHypothesis>& filtered,
    const PostprocessConfig& config) {
  if (config.cluster_iou <= 0.0 || config.cluster_iou > 1.0) {
    throw DegenerateInput("cluster_instances: cluster_iou must lie in (0, 1]");
  }
  const int n = static_cast<int>(filtered.size());
  if (n == 0) {
    return {};
  }

  // One sequential pass over the fat input entries builds a one-cache-line
  // digest per hypothesis (and validates boxes / records grid extents); every
  // later pass works on this compact array so the working set stays
  // cache-resident as images get crowded. HypProbe::index is the position in
  // the filtered list — filter_hypotheses preserves input order, so ranking
  // by it ties exactly like ranking by the original hypothesis index.
  std::vector<HypProbe> probe_in(static_cast<std::size_t>(n));
  double min_x = filtered[0].box.x1;
  double min_y = filtered[0].box.y1;
  double max_x = filtered[0].box.x2;
  double max_y = filtered[0].box.y2;
  double min_score = filtered[0].score;
  double max_score = filtered[0].score;
  int min_class = filtered[0].class_id;
  int max_class = filtered[0].class_id;
  for (int i = 0; i < n; ++i) {
    const FilteredHypothesis& f = filtered[i];
    if (f.box.area() <= 0.0) {
      throw InvalidBox("cluster_instances: zero-area hypothesis box");
    }
    probe_in[static_cast<std::size_t>(i)] = {f.box.x1,   f.box.y1,     f.box.x2,
                                             f.box.y2,   f.box.area(), f.score,
                                             f.class_id, i};
    min_x = std::min(min_x, f.box.x1);
    min_y = std::min(min_y, f.box.y1);
    max_x = std::max(max_x, f.box.x2);
    max_y = std::max(max_y, f.box.y2);
    min_score = std::min(min_score, f.score);
    max_score = std::max(max_score, f.score);
    min_class = std::min(min_class, f.class_id);
    max_class = std::max(max_class, f.class_id);
  }

  // Rank order (score desc, index asc) without a comparison sort: bucket by
  // score, prefix-sum, scatter the digests into place, then repair each
  // bucket's run with the exact comparator. Equal-score runs are tiny in
  // practice; a large run is handed to std::sort so adversarial inputs stay
  // O(n log n).
  const double score_scale =
      max_score > min_score ? kScoreBuckets / (max_score - min_score) : 0.0;
  const auto bucket_of = [&](double score) {
    const int raw = static_cast<int>((max_score - score) * score_scale);
    return std::clamp(raw, 0, kScoreBuckets - 1);
  };
  std::vector<HypProbe> probe(static_cast<std::size_t>(n));
  std::vector<int> start(kScoreBuckets + 1, 0);
  for (int i = 0; i < n; ++i) {
    ++start[static_cast<std::size_t>(
        bucket_of(probe_in[static_cast<std::size_t>(i)].score)) + 1];
  }
  for (int b = 0; b < kScoreBuckets; ++b) {
    start[static_cast<std::size_t>(b) + 1] += start[static_cast<std::size_t>(b)];
  }
  {
    std::vector<int> cursor(start.begin(), start.end() - 1);
    for (int i = 0; i < n; ++i) {
      const HypProbe& h = probe_in[static_cast<std::size_t>(i)];
      probe[static_cast<std::size_t>(cursor[static_cast<std::size_t>(
          bucket_of(h.score))]++)] = h;
    }
  }
  probe_in.clear();
  probe_in.shrink_to_fit();
  const auto rank_before = [](const HypProbe& a, const HypProbe& b) {
    if (a.score != b.score) {
      return a.score > b.score;
    }
    return a.index < b.index;
  };
  for (int b = 0; b < kScoreBuckets; ++b) {
    const int lo = start[static_cast<std::size_t>(b)];
    const int hi = start[static_cast<std::size_t>(b) + 1];
    if (hi - lo < 2) {
      continue;
    }
    if (hi - lo > 64) {
      std::sort(probe.begin() + lo, probe.begin() + hi, rank_before);
      continue;
    }
    for (int p = lo + 1; p < hi; ++p) {
      const HypProbe moved = probe[static_cast<std::size_t>(p)];
      int q = p;
      while (q > lo && rank_before(moved, probe[static_cast<std::size_t>(q) - 1])) {
        probe[static_cast<std::size_t>(q)] = probe[static_cast<std::size_t>(q) - 1];
        --q;
      }
      probe[static_cast<std::size_t>(q)] = moved;
    }
  }

  const int gx =
      static_cast<int>(std::floor((max_x - min_x) / kClusterCellPx)) + 1;
  const int gy =
      static_cast<int>(std::floor((max_y - min_y) / kClusterCellPx)) + 1;
  const long class_span = static_cast<long>(max_class) - min_class + 1;
  const int planes =
      class_span <= kMaxClassPlanes ? static_cast<int>(class_span) : 1;

  // Single pass in rank order, equivalent to the greedy scan: a hypothesis
  // joins the earliest-seeded cluster whose seed box matches it (when it was
  // still unassigned, every earlier seed had already had its chance at it),
  // and otherwise becomes a seed itself while the seed budget lasts. Seeds
  // live in per-class grid cells; same-class seeds never match each other's
  // boxes, so only a bounded number of them can overlap any one hypothesis
  // and probe work per hypothesis stays flat no matter how crowded the image
  // is. The seed array is small (max_instances defaults to 100) and stays
  // cache-hot.
  struct SeedBox {
    double x1, y1, x2, y2;
    double area;
    int cls;
    int probed_at;  // dedupe stamp, position of the last hypothesis to probe
  };
  // Grid cells hold a handful of seed ids inline (same-class seeds never
  // match each other, so per-cell-per-class density stays small); the rare
  // spill goes to one shared side list. No per-cell containers, so the pass
  // allocates nothing.
  const std::size_t cell_count =
      static_cast<std::size_t>(gx) * static_cast<std::size_t>(gy) *
      static_cast<std::size_t>(planes);
  std::vector<int> cell_len(cell_count, 0);
  std::vector<int> cell_slot(cell_count * kCellSlots);
  std::vector<std::pair<int, int>> spill;  // (cell, seed id)
  std::vector<SeedBox> seeds;
  seeds.reserve(std::min<std::size_t>(config.max_instances, 256));
  // The hot loop only writes a flat per-hypothesis cluster id; member lists
  // are materialized afterwards so no container grows inside the pass.
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<int> sizes;
  sizes.reserve(seeds.capacity());
  for (int pos = 0; pos < n; ++pos) {
    const HypProbe& h = probe[static_cast<std::size_t>(pos)];
    const int cx0 = static_cast<int>(std::floor((h.x1 - min_x) / kClusterCellPx));
    const int cx1 = static_cast<int>(std::floor((h.x2 - min_x) / kClusterCellPx));
    const int cy0 = static_cast<int>(std::floor((h.y1 - min_y) / kClusterCellPx));
    const int cy1 = static_cast<int>(std::floor((h.y2 - min_y) / kClusterCellPx));
    const int base = (planes == 1 ? 0 : h.cls - min_class) * gx * gy;
    int join = -1;  // earliest-created matching seed
    const auto probe_seed = [&](int sid) {
      SeedBox& s = seeds[static_cast<std::size_t>(sid)];
      if (s.probed_at == pos || (join != -1 && sid > join)) {
        return;
      }
      s.probed_at = pos;
      if (s.cls != h.cls) {
        return;
      }
      const double ix = std::min(s.x2, h.x2) - std::max(s.x1, h.x1);
      const double iy = std::min(s.y2, h.y2) - std::max(s.y1, h.y1);
      const double inter = std::max(0.0, ix) * std::max(0.0, iy);
      if (inter / (s.area + h.area - inter) >= config.cluster_iou) {
        join = sid;
      }
    };
    for (int cy = cy0; cy <= cy1; ++cy) {
      for (int cx = cx0; cx <= cx1; ++cx) {
        const std::size_t cell = static_cast<std::size_t>(base + cy * gx + cx);
        const int len = cell_len[cell];
        const int* slot = &cell_slot[cell * kCellSlots];
        for (int k = 0; k < std::min(len, kCellSlots); ++k) {
          probe_seed(slot[k]);
        }
        if (len > kCellSlots) {
          for (const auto& [sc, sid] : spill) {
            if (sc == static_cast<int>(cell)) {
              probe_seed(sid);
            }
          }
        }
      }
    }
    if (join >= 0) {
      assign[static_cast<std::size_t>(pos)] = join;
      ++sizes[static_cast<std::size_t>(join)];
    } else if (seeds.size() < config.max_instances) {
      const int sid = static_cast<int>(seeds.size());
      assign[static_cast<std::size_t>(pos)] = sid;
      sizes.push_back(1);
      seeds.push_back({h.x1, h.y1, h.x2, h.y2, h.area, h.cls, -1});
      for (int cy = cy0; cy <= cy1; ++cy) {
        for (int cx = cx0; cx <= cx1; ++cx) {
          const std::size_t cell = static_cast<std::size_t>(base + cy * gx + cx);
          const int len = cell_len[cell]++;
          if (len < kCellSlots) {
            cell_slot[cell * kCellSlots + static_cast<std::size_t>(len)] = sid;
          } else {
            spill.emplace_back(static_cast<int>(cell), sid);
          }
        }
      }
    }
  }

  std::vector<std::vector<int>> clusters(seeds.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    clusters[c].reserve(static_cast<std::size_t>(sizes[c]));
  }
  for (int pos = 0; pos < n; ++pos) {
    const int c = assign[static_cast<std::size_t>(pos)];
    if (c >= 0) {
      clusters[static_cast<std::size_t>(c)].push_back(
          probe[static_cast<std::size_t>(pos)].index);
    }
  }
  if (config.discard_singletons) {
    std::erase_if(clusters,
                  [](const std::vector<int>& c) { return c.size() < 2; });
  }
  return clusters;
}

namespace {

// Selection and averaging shared by the public entry point and the batched
// image path; `consistency_of(i)` returns member i's ranking value (the
// batched caller hands out a dense copy so ranking reads stay compact).
template <typename ConsistencyFn>
Pose aggregate_top(const std::vector<FilteredHypothesis>& filtered,
                   const std::vector<int>& cluster,
                   const PostprocessConfig& config,
                   ConsistencyFn&& consistency_of) {
  const std::size_t take = std::min(config.top_n, cluster.size());
  const auto better = [&](int a, int b) {
    if (consistency_of(a) != consistency_of(b)) {
      return consistency_of(a) < consistency_of(b);
    }
    return filtered[a].index < filtered[b].index;
  };

  // Keep the `take` best members in a small sorted selection buffer; clusters
  // are scanned once and the common top_n values never need a heap
  // allocation or a full sort.
  constexpr std::size_t kSelectionBuffer = 32;
  std::array<int, kSelectionBuffer> top_small{};
  std::vector<int> top_large;
  int* top = top_small.data();
  if (take > kSelectionBuffer) {
    top_large.resize(take);
    top = top_large.data();
  }
  std::size_t filled = 0;
  for (int i : cluster) {
    if (filled == take && !better(i, top[take - 1])) {
      continue;
    }
    std::size_t at = filled < take ? filled : take - 1;
    while (at > 0 && better(i, top[at - 1])) {
      top[at] = top[at - 1];
      --at;
    }
    top[at] = i;
    if (filled < take) {
      ++filled;
    }
  }

  if (take == 1) {
    return filtered[top[0]].pose;  // bitwise, not via the matrix mean
  }

  static thread_local std::vector<Mat3> rotations;  // reused scratch
  rotations.clear();
  rotations.reserve(take);
  Vec3 translation = Vec3::Zero();
  for (std::size_t k = 0; k < take; ++k) {
    rotations.push_back(filtered[top[k]].pose.rotation);
    translation += filtered[top[k]].pose.translation;
  }
  Pose pose;
  pose.rotation = chordal_mean_rotation(rotations);
  pose.translation = translation / static_cast<double>(take);
  return pose;
}

}  // namespace

Pose aggregate_pose(const std::vector<FilteredHypothesis>& filtered,
                    const std::vector<int>& cluster,
                    const PostprocessConfig& config) {
  if (cluster.empty()) {
    throw EmptyBatch("aggregate_pose: empty cluster");
  }
  if (config.top_n == 0) {
    throw DegenerateInput("aggregate_pose: top_n must be positive");
  }
  for (int i : cluster) {
    if (i < 0 || i >= static_cast<int>(filtered.size())) {
      throw IndexOutOfRange("aggregate_pose: member " + std::to_string(i) +
                            " outside filtered list");
    }
  }
  return aggregate_top(filtered, cluster, config,
                       [&](int i) { return filtered[i].consistency; });
}

std::vector<InstanceEstimate> postprocess_image(
    const std::vector<Hypothesis>& hypotheses, const PostprocessConfig& config) {
  const std::vector<FilteredHypothesis> filtered =
      filter_hypotheses(hypotheses, config);
  std::vector<std::vector<int>> clusters = cluster_instances(filtered, config);
  if (config.top_n == 0) {
    throw DegenerateInput("postprocess_image: top_n must be positive");
  }

  std::vector<double> consistency(filtered.size());
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    consistency[i] = filtered[i].consistency;
  }
  std::vector<InstanceEstimate> instances;
  instances.reserve(clusters.size());
  for (std::vector<int>& cluster : clusters) {
    InstanceEstimate inst;
    inst.class_id = filtered[cluster.front()].class_id;
    inst.score = filtered[cluster.front()].score;
    inst.pose = aggregate_top(filtered, cluster, config,
                              [&](int i) { return consistency[i]; });
    inst.members = std::move(cluster);  // rewrite in place, no second buffer
    for (int& i : inst.members) {
      i = filtered[i].index;
    }
    instances.push_back(std::move(inst));
  }
  return instances;
}

}  // namespace gridpose
