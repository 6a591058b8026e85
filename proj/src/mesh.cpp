#include "gridpose/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <utility>

#include <Eigen/Geometry>

#include "gridpose/errors.hpp"

namespace gridpose {

namespace {

std::uint64_t edge_key(int u, int v) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
         static_cast<std::uint32_t>(v);
}

struct HullFace {
  int a = 0, b = 0, c = 0;
  Vec3 normal = Vec3::Zero();  // outward, not normalized
  double offset = 0.0;         // normal . x = offset on the plane
  std::vector<int> outside;
  bool alive = true;

  double dist(const Vec3& p) const { return normal.dot(p) - offset; }
};

// 2D convex hull (monotone chain) of coplanar points, returning indices.
std::vector<int> planar_hull(const std::vector<Vec3>& pts, const Vec3& origin,
                             const Vec3& e1, const Vec3& e2) {
  std::vector<int> order(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) order[i] = static_cast<int>(i);
  auto u = [&](int i) { return e1.dot(pts[i] - origin); };
  auto v = [&](int i) { return e2.dot(pts[i] - origin); };
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::pair(u(i), v(i)) < std::pair(u(j), v(j));
  });
  auto cross = [&](int o, int p, int q) {
    return (u(p) - u(o)) * (v(q) - v(o)) - (v(p) - v(o)) * (u(q) - u(o));
  };
  std::vector<int> hull;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t base = hull.size();
    for (int idx : order) {
      while (hull.size() >= base + 2 &&
             cross(hull[hull.size() - 2], hull[hull.size() - 1], idx) <= 0) {
        hull.pop_back();
      }
      hull.push_back(idx);
    }
    hull.pop_back();
    std::reverse(order.begin(), order.end());
  }
  return hull;
}

}  // namespace

std::vector<int> convex_hull_vertices(const std::vector<Vec3>& points) {
  const std::size_t n = points.size();
  if (n == 0) {
    throw DegenerateInput("convex_hull_vertices: empty point set");
  }
  if (n <= 4) {
    std::vector<int> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<int>(i);
    return all;
  }

  double scale = 0.0;
  for (const Vec3& p : points) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  const double eps = std::max(scale, 1.0) * 1e-12 * 64;

  // Starting simplex from coordinate extremes.
  int ex[6] = {0, 0, 0, 0, 0, 0};
  for (std::size_t i = 1; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      if (points[i](a) < points[ex[2 * a]](a)) ex[2 * a] = static_cast<int>(i);
      if (points[i](a) > points[ex[2 * a + 1]](a)) ex[2 * a + 1] = static_cast<int>(i);
    }
  }
  int i0 = ex[0], i1 = ex[1];
  double best = 0.0;
  for (int a : ex) {
    for (int b : ex) {
      const double d = (points[a] - points[b]).squaredNorm();
      if (d > best) {
        best = d;
        i0 = a;
        i1 = b;
      }
    }
  }
  if (std::sqrt(best) < eps) {
    return {0};  // all points coincide
  }

  const Vec3 dir = (points[i1] - points[i0]).normalized();
  int i2 = -1;
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = points[i] - points[i0];
    const double off = (d - dir.dot(d) * dir).squaredNorm();
    if (off > best) {
      best = off;
      i2 = static_cast<int>(i);
    }
  }
  if (i2 < 0 || std::sqrt(best) < eps) {
    // Collinear: the extremes along the common direction are the hull.
    int lo = i0, hi = i0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = dir.dot(points[i] - points[i0]);
      if (t < dir.dot(points[lo] - points[i0])) lo = static_cast<int>(i);
      if (t > dir.dot(points[hi] - points[i0])) hi = static_cast<int>(i);
    }
    return {lo, hi};
  }

  Vec3 plane_n = (points[i1] - points[i0]).cross(points[i2] - points[i0]);
  plane_n.normalize();
  int i3 = -1;
  best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double off = std::abs(plane_n.dot(points[i] - points[i0]));
    if (off > best) {
      best = off;
      i3 = static_cast<int>(i);
    }
  }
  if (i3 < 0 || best < eps) {
    const Vec3 e1 = (points[i1] - points[i0]).normalized();
    const Vec3 e2 = plane_n.cross(e1);
    return planar_hull(points, points[i0], e1, e2);
  }

  std::vector<HullFace> faces;
  std::unordered_map<std::uint64_t, int> edge_face;  // directed edge -> face

  const Vec3 interior =
      (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;

  auto add_face = [&](int a, int b, int c) {
    HullFace f;
    f.a = a;
    f.b = b;
    f.c = c;
    f.normal = (points[b] - points[a]).cross(points[c] - points[a]);
    f.offset = f.normal.dot(points[a]);
    const int id = static_cast<int>(faces.size());
    faces.push_back(std::move(f));
    edge_face[edge_key(a, b)] = id;
    edge_face[edge_key(b, c)] = id;
    edge_face[edge_key(c, a)] = id;
    return id;
  };

  auto add_oriented = [&](int a, int b, int c) {
    Vec3 normal = (points[b] - points[a]).cross(points[c] - points[a]);
    if (normal.dot(interior - points[a]) > 0) std::swap(b, c);
    return add_face(a, b, c);
  };

  add_oriented(i0, i1, i2);
  add_oriented(i0, i1, i3);
  add_oriented(i0, i2, i3);
  add_oriented(i1, i2, i3);

  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) == i0 || static_cast<int>(i) == i1 ||
        static_cast<int>(i) == i2 || static_cast<int>(i) == i3) {
      continue;
    }
    int best_face = -1;
    double best_d = eps;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const double d = faces[f].dist(points[i]) / faces[f].normal.norm();
      if (d > best_d) {
        best_d = d;
        best_face = static_cast<int>(f);
      }
    }
    if (best_face >= 0) faces[best_face].outside.push_back(static_cast<int>(i));
  }

  std::vector<int> pending;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    if (!faces[f].outside.empty()) pending.push_back(static_cast<int>(f));
  }

  std::vector<int> visible, stack;
  std::vector<std::pair<int, int>> horizon;
  std::vector<int> candidates;
  while (!pending.empty()) {
    const int fid = pending.back();
    pending.pop_back();
    if (!faces[fid].alive || faces[fid].outside.empty()) continue;

    double far_d = -1.0;
    int far = -1;
    for (int idx : faces[fid].outside) {
      const double d = faces[fid].dist(points[idx]);
      if (d > far_d) {
        far_d = d;
        far = idx;
      }
    }
    const Vec3 p = points[far];

    // Flood over faces visible from p; edges to hidden faces form the horizon.
    visible.clear();
    stack.assign(1, fid);
    faces[fid].alive = false;
    visible.push_back(fid);
    horizon.clear();
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      const int vs[3] = {faces[cur].a, faces[cur].b, faces[cur].c};
      for (int e = 0; e < 3; ++e) {
        const int u = vs[e], v = vs[(e + 1) % 3];
        const auto it = edge_face.find(edge_key(v, u));
        if (it == edge_face.end()) continue;
        const int nb = it->second;
        if (!faces[nb].alive) continue;
        if (faces[nb].dist(p) > eps * faces[nb].normal.norm()) {
          faces[nb].alive = false;
          visible.push_back(nb);
          stack.push_back(nb);
        } else {
          horizon.emplace_back(u, v);
        }
      }
    }

    candidates.clear();
    for (int f : visible) {
      for (int idx : faces[f].outside) {
        if (idx != far) candidates.push_back(idx);
      }
      faces[f].outside.clear();
      edge_face.erase(edge_key(faces[f].a, faces[f].b));
      edge_face.erase(edge_key(faces[f].b, faces[f].c));
      edge_face.erase(edge_key(faces[f].c, faces[f].a));
    }

    for (const auto& [u, v] : horizon) {
      const int nf = add_face(u, v, far);
      for (int idx : candidates) {
        const double d = faces[nf].dist(points[idx]);
        if (d > eps * faces[nf].normal.norm()) {
          faces[nf].outside.push_back(idx);
        }
      }
      // A candidate can land in several new outside sets; that only costs a
      // few extra distance checks later.
      if (!faces[nf].outside.empty()) pending.push_back(nf);
    }
  }

  std::vector<int> result;
  std::vector<std::uint8_t> seen(n, 0);
  for (const HullFace& f : faces) {
    if (!f.alive) continue;
    for (int v : {f.a, f.b, f.c}) {
      if (!seen[v]) {
        seen[v] = 1;
        result.push_back(v);
      }
    }
  }
  std::sort(result.begin(), result.end());
  return result;
}

double diameter_brute_force(const std::vector<Vec3>& vertices) {
  if (vertices.empty()) {
    throw DegenerateInput("diameter: empty vertex set");
  }
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < vertices.size(); ++j) {
      best = std::max(best, (vertices[i] - vertices[j]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

double diameter_via_hull(const std::vector<Vec3>& vertices) {
  if (vertices.empty()) {
    throw DegenerateInput("diameter: empty vertex set");
  }
  const std::vector<int> hull = convex_hull_vertices(vertices);
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      best = std::max(best, (vertices[hull[i]] - vertices[hull[j]]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

double diameter(const TriangleMesh& mesh) {
  if (mesh.vertices.size() < kDiameterBruteForceLimit) {
    return diameter_brute_force(mesh.vertices);
  }
  return diameter_via_hull(mesh.vertices);
}

std::array<Vec3, 8> cuboid_corners(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) {
    throw DegenerateInput("cuboid_corners: empty vertex set");
  }
  Vec3 lo = mesh.vertices.front(), hi = mesh.vertices.front();
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  std::array<Vec3, 8> corners;
  for (int i = 0; i < 8; ++i) {
    corners[i] = Vec3((i & 4) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                      (i & 1) ? hi.z() : lo.z());
  }
  return corners;
}

SymmetrySet build_symmetry_set(const std::vector<Pose>& discrete,
                               const std::vector<Vec3>& continuous_axes,
                               int steps) {
  if (steps < 1) {
    throw DegenerateInput("build_symmetry_set: steps must be >= 1");
  }
  SymmetrySet set;
  set.transforms.reserve(1 + discrete.size() +
                         continuous_axes.size() * (steps - 1));
  for (const Pose& p : discrete) {
    set.transforms.push_back(p);
  }
  for (const Vec3& axis : continuous_axes) {
    for (int j = 1; j < steps; ++j) {
      Pose p;
      p.rotation = rotation_about_axis(axis, 2.0 * M_PI * j / steps);
      set.transforms.push_back(p);
    }
  }
  return set;
}

ObjectModel make_object_model(int object_id, TriangleMesh mesh,
                              SymmetrySet symmetries) {
  ObjectModel model;
  model.object_id = object_id;
  model.diameter = diameter(mesh);
  model.cuboid = cuboid_corners(mesh);
  model.mesh = std::move(mesh);
  model.symmetries = std::move(symmetries);
  return model;
}

TriangleMesh make_box_mesh(const Vec3& half_extents, const Vec3& center) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.push_back(center + Vec3(((i & 4) ? 1 : -1) * half_extents.x(),
                                          ((i & 2) ? 1 : -1) * half_extents.y(),
                                          ((i & 1) ? 1 : -1) * half_extents.z()));
  }
  // Two triangles per face; vertex order follows the sign-pattern indexing.
  const int quads[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                           {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
  for (const auto& q : quads) {
    mesh.triangles.push_back({q[0], q[1], q[2]});
    mesh.triangles.push_back({q[0], q[2], q[3]});
  }
  return mesh;
}

TriangleMesh make_icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> tris = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]) / 2.0);
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& tri : tris) {
      const int ab = mid(tri[0], tri[1]);
      const int bc = mid(tri[1], tri[2]);
      const int ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  TriangleMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (Vec3& v : verts) {
    mesh.vertices.push_back(v.normalized() * radius);
  }
  mesh.triangles = std::move(tris);
  return mesh;
}

}  // namespace gridpose
