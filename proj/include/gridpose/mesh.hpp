#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "gridpose/geometry.hpp"

namespace gridpose {

struct TriangleMesh {
  std::vector<Vec3> vertices;                 // meters
  std::vector<std::array<int, 3>> triangles;  // indices into vertices
};

// Finite set of rigid transforms under which the model shape is (close to)
// invariant. Always contains the identity at index 0; continuous axes are
// discretized.
struct SymmetrySet {
  std::vector<Pose> transforms{Pose{}};

  std::size_t size() const { return transforms.size(); }
  const Pose& operator[](std::size_t i) const { return transforms[i]; }
  bool trivial() const { return transforms.size() <= 1; }

  static SymmetrySet identity_only() { return SymmetrySet{}; }
};

// Mesh plus everything the pipeline derives from it once per object.
struct ObjectModel {
  int object_id = 0;
  TriangleMesh mesh;
  double diameter = 0.0;            // max pairwise vertex distance, meters
  std::array<Vec3, 8> cuboid{};     // axis-aligned bounding corners, G_3D
  SymmetrySet symmetries;
};

// Exact O(n^2) scan over all vertex pairs.
double diameter_brute_force(const std::vector<Vec3>& vertices);

// Convex-hull-then-pairwise; agrees with the brute force on shared inputs.
double diameter_via_hull(const std::vector<Vec3>& vertices);

// Dispatches on vertex count: brute force below kDiameterBruteForceLimit,
// hull-based above. Throws DegenerateInput on an empty vertex set.
inline constexpr std::size_t kDiameterBruteForceLimit = 10000;
double diameter(const TriangleMesh& mesh);

// Indices of the vertices on the convex hull (degenerate inputs fall back to
// lower-dimensional hulls or the full set).
std::vector<int> convex_hull_vertices(const std::vector<Vec3>& points);

// The 8 corners of the axis-aligned bounding cuboid, ordered by the
// lexicographic (x, y, z) sign pattern: index bit 2 selects max x, bit 1
// max y, bit 0 max z; corner 0 is (min, min, min), corner 7 (max, max, max).
std::array<Vec3, 8> cuboid_corners(const TriangleMesh& mesh);

// Identity, then the given discrete transforms, then each continuous axis
// discretized into `steps` rotations (angles 2*pi*j/steps, j = 1..steps-1).
inline constexpr int kDefaultSymmetrySteps = 64;
SymmetrySet build_symmetry_set(const std::vector<Pose>& discrete,
                               const std::vector<Vec3>& continuous_axes,
                               int steps = kDefaultSymmetrySteps);

// Bundles a mesh with its derived quantities.
ObjectModel make_object_model(int object_id, TriangleMesh mesh,
                              SymmetrySet symmetries = SymmetrySet::identity_only());

// Synthetic shapes for tests and the scene harness.
TriangleMesh make_box_mesh(const Vec3& half_extents, const Vec3& center = Vec3::Zero());
TriangleMesh make_icosphere(double radius, int subdivisions);

}  // namespace gridpose
