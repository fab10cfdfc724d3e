#include "morphield/grid.hpp"

#include "morphield/parallel.hpp"

namespace morphield {

SdfGrid sample_grid(const MeshDistance& distance, const GridSpec& spec) {
  SdfGrid grid{spec, std::vector<double>(spec.vertex_count())};
  const int m = spec.vertices_per_axis();
  parallel_for(0, static_cast<std::size_t>(m) * m, [&](std::size_t row) {
    const int j = static_cast<int>(row % m);
    const int k = static_cast<int>(row / m);
    for (int i = 0; i < m; ++i) grid.values[spec.index(i, j, k)] = distance.signed_distance(spec.vertex(i, j, k));
  });
  return grid;
}

}  // namespace morphield
