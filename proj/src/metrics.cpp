#include "morphield/metrics.hpp"

#include "morphield/bvh.hpp"
#include "morphield/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace morphield {

SurfaceSamples sample_surface(const MeshData& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw std::invalid_argument("cannot sample an empty mesh");
  const auto& V = mesh.vertices;
  std::vector<double> cumulative(mesh.triangles.size());
  std::vector<Vec3> normals(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    const Vec3 n = (V[t[1]] - V[t[0]]).cross(V[t[2]] - V[t[0]]);
    const double len = n.norm();
    total += 0.5 * len;
    cumulative[f] = total;
    normals[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }
  if (!(total > 0.0)) throw std::invalid_argument("cannot sample a mesh with zero area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SurfaceSamples out;
  out.points.reserve(count);
  out.normals.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double pick = unit(rng) * total;
    auto f = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    f = std::min(f, mesh.triangles.size() - 1);
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    const auto& t = mesh.triangles[f];
    out.points.push_back((1.0 - r1) * V[t[0]] + r1 * (1.0 - r2) * V[t[1]] + r1 * r2 * V[t[2]]);
    out.normals.push_back(normals[f]);
  }
  return out;
}

NearestResult nearest_points(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets) {
  if (targets.empty()) throw std::invalid_argument("nearest-point query against an empty set");
  std::vector<Aabb> boxes(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) boxes[i].extend(targets[i]);
  const Bvh bvh(boxes);

  NearestResult out;
  out.distance.resize(queries.size());
  out.index.resize(queries.size());
  parallel_for(
      0, queries.size(),
      [&](std::size_t i) {
        const auto [prim, d2] =
            bvh.nearest(queries[i], [&](std::uint32_t p, const Vec3& q) { return (targets[p] - q).squaredNorm(); });
        out.index[i] = prim;
        out.distance[i] = std::sqrt(d2);
      },
      1024);
  return out;
}

namespace {

struct PairedSamples {
  SurfaceSamples a, b;
  NearestResult ab, ba;
};

PairedSamples pair_samples(const MeshData& a, const MeshData& b, const MetricOptions& options) {
  if (a.empty() || b.empty()) throw std::invalid_argument("metrics need two non-empty meshes");
  if (options.samples == 0) throw std::invalid_argument("sample count must be positive");
  PairedSamples p;
  p.a = sample_surface(a, options.samples, options.seed);
  p.b = sample_surface(b, options.samples, options.seed);
  p.ab = nearest_points(p.a.points, p.b.points);
  p.ba = nearest_points(p.b.points, p.a.points);
  return p;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double chamfer_of(const PairedSamples& p) { return 1e3 * 0.5 * (mean(p.ab.distance) + mean(p.ba.distance)); }

double f_score_of(const PairedSamples& p, double threshold) {
  auto fraction = [threshold](const std::vector<double>& d) {
    return static_cast<double>(std::count_if(d.begin(), d.end(), [&](double x) { return x < threshold; })) / d.size();
  };
  const double precision = fraction(p.ab.distance), recall = fraction(p.ba.distance);
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double normal_consistency_of(const PairedSamples& p) {
  auto directed = [](const SurfaceSamples& from, const SurfaceSamples& to, const NearestResult& nn) {
    double sum = 0.0;
    for (std::size_t i = 0; i < from.normals.size(); ++i) sum += std::abs(from.normals[i].dot(to.normals[nn.index[i]]));
    return sum / from.normals.size();
  };
  return 100.0 * 0.5 * (directed(p.a, p.b, p.ab) + directed(p.b, p.a, p.ba));
}

}  // namespace

double chamfer_l1(const MeshData& a, const MeshData& b, const MetricOptions& options) {
  return chamfer_of(pair_samples(a, b, options));
}

double f_score(const MeshData& a, const MeshData& b, const MetricOptions& options) {
  return f_score_of(pair_samples(a, b, options), options.threshold);
}

double normal_consistency(const MeshData& a, const MeshData& b, const MetricOptions& options) {
  return normal_consistency_of(pair_samples(a, b, options));
}

// ---------------------------------------------------------------------------
// Topology

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

TopologyReport topology_counts(const MeshData& mesh) {
  TopologyReport report;
  const std::size_t faces = mesh.triangles.size();
  if (faces == 0) return report;

  // Directed edge uses per undirected edge.
  struct EdgeUse {
    std::uint32_t forward = 0, backward = 0;  // forward: lower -> higher vertex index
    std::size_t first_face = 0;
  };
  std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeUse> edges;
  UnionFind uf(faces);
  for (std::size_t f = 0; f < faces; ++f) {
    const auto& t = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t a = t[k], b = t[(k + 1) % 3];
      const auto key = std::minmax(a, b);
      auto [it, inserted] = edges.try_emplace({key.first, key.second});
      if (inserted) it->second.first_face = f;
      else uf.unite(f, it->second.first_face);
      if (a < b) ++it->second.forward;
      else ++it->second.backward;
    }
  }

  std::map<std::size_t, std::size_t> component_of_root;  // root -> component index, by first face
  std::vector<std::size_t> component(faces);
  for (std::size_t f = 0; f < faces; ++f) {
    const std::size_t root = uf.find(f);
    auto [it, inserted] = component_of_root.try_emplace(root, component_of_root.size());
    component[f] = it->second;
  }
  const std::size_t count = component_of_root.size();
  report.component_count = count;

  std::vector<long long> v_count(count, 0), e_count(count, 0), f_count(count, 0);
  std::vector<bool> valid(count, true);
  for (std::size_t f = 0; f < faces; ++f) ++f_count[component[f]];
  for (const auto& [key, use] : edges) {
    const std::size_t c = component[use.first_face];
    ++e_count[c];
    const std::uint32_t total = use.forward + use.backward;
    if (total == 1) {
      ++report.boundary_edges;
      valid[c] = false;
    } else if (total > 2) {
      ++report.non_manifold_edges;
      valid[c] = false;
    } else if (use.forward != 1) {
      ++report.inconsistent_edges;
      valid[c] = false;
    }
  }
  // A vertex pinching two edge-disjoint sheets counts once per component.
  std::vector<std::pair<std::size_t, std::uint32_t>> incidences;
  incidences.reserve(faces * 3);
  for (std::size_t f = 0; f < faces; ++f)
    for (std::uint32_t v : mesh.triangles[f]) incidences.emplace_back(component[f], v);
  std::sort(incidences.begin(), incidences.end());
  incidences.erase(std::unique(incidences.begin(), incidences.end()), incidences.end());
  for (const auto& [c, v] : incidences) ++v_count[c];

  report.genus_per_component.resize(count);
  for (std::size_t c = 0; c < count; ++c) {
    const long long chi = v_count[c] - e_count[c] + f_count[c];
    if (valid[c] && chi % 2 == 0) report.genus_per_component[c] = static_cast<int>((2 - chi) / 2);
  }
  return report;
}

MetricsReport evaluate_metrics(const MeshData& a, const MeshData& b, const MetricOptions& options) {
  const PairedSamples p = pair_samples(a, b, options);
  MetricsReport report;
  report.options = options;
  report.chamfer = chamfer_of(p);
  report.f_score = f_score_of(p, options.threshold);
  report.normal_consistency = normal_consistency_of(p);
  report.topology_a = topology_counts(a);
  report.topology_b = topology_counts(b);
  return report;
}

}  // namespace morphield
