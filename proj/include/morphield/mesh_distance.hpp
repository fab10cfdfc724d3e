#pragma once

#include "morphield/bvh.hpp"
#include "morphield/mesh.hpp"

#include <unordered_map>

namespace morphield {

enum class ClosestFeature { face, edge, vertex };

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  double distance_sq = 0.0;
  std::uint32_t triangle = 0;
  ClosestFeature feature = ClosestFeature::face;
  // Local corner (vertex) or local edge start corner (edge) within the triangle.
  int local = 0;
};

// Closest point on triangle abc to p, with the feature it lies on.
ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Signed distance to a triangle mesh: BVH closest-point search, sign from
// the angle-weighted pseudo-normal of the closest feature. Exact for closed,
// consistently oriented meshes; best effort otherwise (see watertight()).
class MeshDistance {
 public:
  explicit MeshDistance(MeshData mesh);

  const MeshData& mesh() const { return mesh_; }
  const WatertightReport& watertight() const { return watertight_; }

  ClosestPoint closest(const Vec3& q) const;
  double signed_distance(const Vec3& q) const;

 private:
  Vec3 pseudo_normal(const ClosestPoint& cp) const;

  MeshData mesh_;
  Bvh bvh_;
  WatertightReport watertight_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_normals_;
  std::unordered_map<std::uint64_t, Vec3> edge_normals_;
};

}  // namespace morphield
