#pragma once

#include "morphield/mesh.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace morphield {

inline constexpr std::uint64_t kDefaultSampleSeed = 20240611;
inline constexpr std::size_t kDefaultSampleCount = 100000;
inline constexpr double kDefaultFScoreThreshold = 0.01;

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // unit face normals of the sampled triangles
};

// Area-uniform random points (mt19937_64 with the given seed).
SurfaceSamples sample_surface(const MeshData& mesh, std::size_t count, std::uint64_t seed = kDefaultSampleSeed);

// Distance from each query point to its nearest point in `targets`, and the
// index of that point.
struct NearestResult {
  std::vector<double> distance;
  std::vector<std::uint32_t> index;
};
NearestResult nearest_points(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets);

struct MetricOptions {
  std::size_t samples = kDefaultSampleCount;
  std::uint64_t seed = kDefaultSampleSeed;
  double threshold = kDefaultFScoreThreshold;
};

// 1e3 * (mean_a d(a, B) + mean_b d(b, A)) / 2 over sampled point sets, with
// unsquared Euclidean nearest distances.
double chamfer_l1(const MeshData& a, const MeshData& b, const MetricOptions& options = {});
// Harmonic mean of precision and recall at the threshold, in percent.
double f_score(const MeshData& a, const MeshData& b, const MetricOptions& options = {});
// Mean |cos| between each sample normal and its nearest sample's normal on
// the other mesh, symmetrised, in percent. Orientation-agnostic.
double normal_consistency(const MeshData& a, const MeshData& b, const MetricOptions& options = {});

struct TopologyReport {
  std::size_t component_count = 0;
  std::vector<std::optional<int>> genus_per_component;  // empty when open, non-manifold or non-orientable
  std::size_t boundary_edges = 0;
  std::size_t non_manifold_edges = 0;
  std::size_t inconsistent_edges = 0;  // shared by two faces with the same direction
};

// Components by edge connectivity (ordered by first triangle), genus from the
// Euler characteristic of closed orientable components.
TopologyReport topology_counts(const MeshData& mesh);

struct MetricsReport {
  double chamfer = 0.0;
  double f_score = 0.0;
  double normal_consistency = 0.0;
  TopologyReport topology_a;
  TopologyReport topology_b;
  MetricOptions options;
};

MetricsReport evaluate_metrics(const MeshData& a, const MeshData& b, const MetricOptions& options = {});

}  // namespace morphield
