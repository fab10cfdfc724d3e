#include "morphield/mesh_distance.hpp"

#include <cmath>

namespace morphield {

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (std::uint64_t{a} << 32) | b;
}

}  // namespace

// Region classification after Ericson, "Real-Time Collision Detection" 5.1.5.
ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  ClosestPoint out;
  auto finish = [&](const Vec3& x, ClosestFeature feature, int local) {
    out.point = x;
    out.distance_sq = (p - x).squaredNorm();
    out.feature = feature;
    out.local = local;
    return out;
  };

  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return finish(a, ClosestFeature::vertex, 0);

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return finish(b, ClosestFeature::vertex, 1);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return finish(a + v * ab, ClosestFeature::edge, 0);
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return finish(c, ClosestFeature::vertex, 2);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return finish(a + w * ac, ClosestFeature::edge, 2);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return finish(b + w * (c - b), ClosestFeature::edge, 1);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return finish(a + ab * v + ac * w, ClosestFeature::face, 0);
}

MeshDistance::MeshDistance(MeshData mesh) : mesh_(std::move(mesh)), watertight_(check_watertight(mesh_)) {
  const auto& V = mesh_.vertices;
  const auto& T = mesh_.triangles;

  std::vector<Aabb> boxes(T.size());
  face_normals_.resize(T.size());
  vertex_normals_.assign(V.size(), Vec3::Zero());
  for (std::size_t f = 0; f < T.size(); ++f) {
    const Vec3 &a = V[T[f][0]], &b = V[T[f][1]], &c = V[T[f][2]];
    boxes[f].extend(a);
    boxes[f].extend(b);
    boxes[f].extend(c);
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    face_normals_[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();

    for (int k = 0; k < 3; ++k) {
      const Vec3& p = V[T[f][k]];
      const Vec3 e1 = V[T[f][(k + 1) % 3]] - p;
      const Vec3 e2 = V[T[f][(k + 2) % 3]] - p;
      const double angle = std::atan2(e1.cross(e2).norm(), e1.dot(e2));
      vertex_normals_[T[f][k]] += angle * face_normals_[f];
      edge_normals_.try_emplace(edge_key(T[f][k], T[f][(k + 1) % 3]), Vec3::Zero()).first->second += face_normals_[f];
    }
  }
  bvh_ = Bvh(boxes);
}

ClosestPoint MeshDistance::closest(const Vec3& q) const {
  const auto& V = mesh_.vertices;
  const auto& T = mesh_.triangles;
  ClosestPoint best;
  best.distance_sq = std::numeric_limits<double>::infinity();
  bvh_.nearest(q, [&](std::uint32_t f, const Vec3& p) {
    ClosestPoint cp = closest_point_on_triangle(p, V[T[f][0]], V[T[f][1]], V[T[f][2]]);
    cp.triangle = f;
    if (cp.distance_sq < best.distance_sq) best = cp;
    return cp.distance_sq;
  });
  return best;
}

Vec3 MeshDistance::pseudo_normal(const ClosestPoint& cp) const {
  const auto& t = mesh_.triangles[cp.triangle];
  switch (cp.feature) {
    case ClosestFeature::vertex:
      return vertex_normals_[t[cp.local]];
    case ClosestFeature::edge: {
      const auto it = edge_normals_.find(edge_key(t[cp.local], t[(cp.local + 1) % 3]));
      return it != edge_normals_.end() ? it->second : face_normals_[cp.triangle];
    }
    case ClosestFeature::face:
      break;
  }
  return face_normals_[cp.triangle];
}

double MeshDistance::signed_distance(const Vec3& q) const {
  const ClosestPoint cp = closest(q);
  const double distance = std::sqrt(cp.distance_sq);
  if (distance == 0.0) return 0.0;
  return pseudo_normal(cp).dot(q - cp.point) < 0.0 ? -distance : distance;
}

}  // namespace morphield
