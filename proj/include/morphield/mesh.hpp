#pragma once

#include "morphield/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace morphield {

using Triangle = std::array<std::uint32_t, 3>;

struct MeshData {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }
  Aabb bounds() const;
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Uniform map from model coordinates to unit-cube coordinates:
// q_unit = scale * q_model + offset.
struct NormalizationTransform {
  double scale = 1.0;
  Vec3 offset = Vec3::Zero();

  Vec3 apply(const Vec3& q) const { return scale * q + offset; }
  Vec3 invert(const Vec3& q) const { return (q - offset) / scale; }
};

// Reads OBJ (triangle faces only) or STL (ASCII or binary). STL corners are
// welded on exact coordinate equality. Unreferenced vertices are dropped.
MeshData load_mesh(const std::filesystem::path& path);
MeshData parse_obj(const std::string& text);
MeshData parse_stl(const std::string& bytes);

// Writes an OBJ. When `to_model` is given its inverse is applied to every
// vertex so the file lands in the original model coordinates.
void save_obj(const MeshData& mesh, const std::filesystem::path& path,
              const NormalizationTransform* to_model = nullptr);
std::string to_obj(const MeshData& mesh, const NormalizationTransform* to_model = nullptr);

// Fits the bounding box inside [margin, 1 - margin]^3, centered at 0.5, with
// the longest axis spanning exactly 1 - 2 * margin.
std::pair<MeshData, NormalizationTransform> normalize_to_unit(const MeshData& mesh, double margin);

MeshData transformed(const MeshData& mesh, const NormalizationTransform& transform);

// Same geometry with every triangle's winding reversed.
MeshData flipped(const MeshData& mesh);

// Removes vertices no triangle references, preserving order of the rest.
MeshData prune_unreferenced(const MeshData& mesh);

struct WatertightReport {
  std::size_t boundary_edges = 0;      // edges with one incident triangle
  std::size_t non_manifold_edges = 0;  // edges with three or more
  bool watertight() const { return boundary_edges == 0 && non_manifold_edges == 0; }
};

WatertightReport check_watertight(const MeshData& mesh);

}  // namespace morphield
