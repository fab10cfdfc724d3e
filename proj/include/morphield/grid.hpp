#pragma once

#include "morphield/mesh_distance.hpp"
#include "morphield/types.hpp"

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace morphield {

// Regular lattice over [0,1]^3 with n cells per axis, spacing 1/n and
// n + 1 vertices per axis. Vertex (i,j,k) sits at (i,j,k) / n.
class GridSpec {
 public:
  static constexpr int kMinCells = 8;

  GridSpec() = default;
  explicit GridSpec(int cells) : n_(cells) {
    if (cells < kMinCells) throw std::invalid_argument("grid needs at least 8 cells per axis");
  }

  int cells() const { return n_; }
  int vertices_per_axis() const { return n_ + 1; }
  double spacing() const { return 1.0 / n_; }
  std::size_t vertex_count() const {
    const auto m = static_cast<std::size_t>(n_ + 1);
    return m * m * m;
  }

  // x-fastest linear index.
  std::size_t index(int i, int j, int k) const {
    const auto m = static_cast<std::size_t>(n_ + 1);
    return static_cast<std::size_t>(i) + m * (static_cast<std::size_t>(j) + m * static_cast<std::size_t>(k));
  }

  Vec3 vertex(int i, int j, int k) const {
    return Vec3(static_cast<double>(i) / n_, static_cast<double>(j) / n_, static_cast<double>(k) / n_);
  }

  bool operator==(const GridSpec&) const = default;

 private:
  int n_ = kMinCells;
};

struct SdfGrid {
  GridSpec spec;
  std::vector<double> values;  // x-fastest, (n+1)^3 entries

  double at(int i, int j, int k) const { return values[spec.index(i, j, k)]; }
};

// Signed distance at every lattice vertex, parallel over z-slabs.
SdfGrid sample_grid(const MeshDistance& distance, const GridSpec& spec);

}  // namespace morphield
