#include "morphield/critical_search.hpp"

#include "morphield/parallel.hpp"
#include "morphield/sym_eigen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace morphield {

std::string_view to_string(CriticalClass kind) {
  switch (kind) {
    case CriticalClass::minimum: return "minimum";
    case CriticalClass::saddle1: return "saddle1";
    case CriticalClass::saddle2: return "saddle2";
    case CriticalClass::maximum: return "maximum";
  }
  return "unknown";
}

std::optional<CriticalClass> critical_class_from_string(std::string_view name) {
  for (auto kind : {CriticalClass::minimum, CriticalClass::saddle1, CriticalClass::saddle2, CriticalClass::maximum})
    if (to_string(kind) == name) return kind;
  return std::nullopt;
}

CriticalClass class_from_negative_count(int negatives) {
  switch (negatives) {
    case 0: return CriticalClass::minimum;
    case 1: return CriticalClass::saddle1;
    case 2: return CriticalClass::saddle2;
    default: return CriticalClass::maximum;
  }
}

CellInterval gradient_bounds(const SplineField& field, const CellIndex& cell) {
  CellInterval out;
  out.cell = cell;
  const double n = field.spec().cells();
  // Derivative along axis d is a quadratic spline in d with coefficients
  // alpha_i - alpha_{i-1}, times cubic weights on the other two axes. All
  // weights are non-negative and sum to one, so the derivative lies in the
  // hull of the 3 x 4 x 4 coefficient differences.
  for (int d = 0; d < 3; ++d) {
    const int e1 = (d + 1) % 3, e2 = (d + 2) % 3;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        for (int i = 0; i < 3; ++i) {
          std::array<int, 3> p{}, m{};
          p[d] = cell[d] + i;
          m[d] = cell[d] + i - 1;
          p[e1] = m[e1] = cell[e1] - 1 + a;
          p[e2] = m[e2] = cell[e2] - 1 + b;
          const double diff = field.coefficient(p[0], p[1], p[2]) - field.coefficient(m[0], m[1], m[2]);
          lo = std::min(lo, diff);
          hi = std::max(hi, diff);
        }
      }
    }
    out.lower[d] = lo * n;
    out.upper[d] = hi * n;
  }
  return out;
}

SeedSet seed_points(const SplineField& field, const SearchOptions& options) {
  const int n = field.spec().cells();
  const int band = std::clamp(options.boundary_band, 0, n / 2);
  const int span = n - 2 * band;
  SeedSet out;
  if (span <= 0) return out;
  const auto cells = static_cast<std::size_t>(span) * span * span;
  out.cells_considered = cells;

  std::vector<unsigned char> keep(cells, 0);
  parallel_for(
      0, cells,
      [&](std::size_t c) {
        const CellIndex cell{band + static_cast<int>(c % span), band + static_cast<int>((c / span) % span),
                             band + static_cast<int>(c / (static_cast<std::size_t>(span) * span))};
        keep[c] = gradient_bounds(field, cell).contains_zero() ? 1 : 0;
      },
      256);

  const double w = field.spec().spacing();
  for (std::size_t c = 0; c < cells; ++c) {
    if (!keep[c]) continue;
    ++out.cells_surviving;
    const Vec3 lo(band + static_cast<int>(c % span), band + static_cast<int>((c / span) % span),
                  band + static_cast<int>(c / (static_cast<std::size_t>(span) * span)));
    for (int s = 0; s < 8; ++s) {
      const Vec3 offset(0.25 + 0.5 * (s & 1), 0.25 + 0.5 * ((s >> 1) & 1), 0.25 + 0.5 * ((s >> 2) & 1));
      out.seeds.push_back((lo + offset) * w);
    }
  }
  return out;
}

namespace {

bool inside_unit_cube(const Vec3& q) { return (q.array() >= 0.0).all() && (q.array() <= 1.0).all(); }

}  // namespace

std::optional<NewtonResult> newton_refine(const ImplicitField& field, const Vec3& seed, const SearchOptions& options) {
  if (!inside_unit_cube(seed)) return std::nullopt;
  const double wander = options.wander_cells * field.spacing();
  Vec3 q = seed;
  FieldSample s = field.sample(q);
  double g2 = s.gradient.squaredNorm();
  const double tol2 = options.grad_tolerance * options.grad_tolerance;

  for (int it = 0;; ++it) {
    if (g2 <= tol2) return NewtonResult{q, std::sqrt(g2), it};
    if (it == options.max_iterations) return std::nullopt;

    Mat3 h = s.hessian;
    if (std::abs(h.determinant()) < options.singular_det) {
      const double scale = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1.0);
      h += options.levenberg_shift * scale * Mat3::Identity();
    }
    const Vec3 step = h.partialPivLu().solve(s.gradient);
    if (!step.allFinite()) return std::nullopt;

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= options.max_halvings; ++halving, t *= 0.5) {
      const Vec3 candidate = q - t * step;
      if (!inside_unit_cube(candidate)) continue;
      const FieldSample cs = field.sample(candidate);
      const double c2 = cs.gradient.squaredNorm();
      if (c2 < g2) {
        q = candidate;
        s = cs;
        g2 = c2;
        accepted = true;
        break;
      }
    }
    if (!accepted) return std::nullopt;
    if ((q - seed).lpNorm<Eigen::Infinity>() > wander) return std::nullopt;
  }
}

CriticalPoint classify_hessian(const Mat3& hessian, const SearchOptions& options) {
  CriticalPoint cp;
  const SymmetricEigen eig = symmetric_eigen(hessian);
  cp.eigenvalues = eig.values;
  cp.eigenvectors = eig.vectors;
  const double scale = eig.values.cwiseAbs().maxCoeff();
  const double threshold = options.eigen_tolerance * scale;
  int negatives = 0;
  for (int c = 0; c < 3; ++c) {
    if (std::abs(eig.values[c]) < threshold || scale == 0.0) cp.degenerate = true;
    if (eig.values[c] < 0.0) ++negatives;
  }
  cp.kind = class_from_negative_count(negatives);
  return cp;
}

CriticalPoint classify(const ImplicitField& field, const Vec3& position, const SearchOptions& options) {
  const FieldSample s = field.sample(position);
  CriticalPoint cp = classify_hessian(s.hessian, options);
  cp.position = position;
  cp.value = s.value;
  cp.grad_norm = s.gradient.norm();
  return cp;
}

namespace {

bool lexicographic_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

struct HashKey {
  long long x, y, z;
  bool operator==(const HashKey&) const = default;
};

struct HashKeyHash {
  std::size_t operator()(const HashKey& k) const {
    return std::hash<long long>()(k.x * 73856093LL ^ k.y * 19349663LL ^ k.z * 83492791LL);
  }
};

}  // namespace

CriticalSearchResult find_critical_points(const SplineField& field, const SearchOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  CriticalSearchResult result;
  const SeedSet seeds = seed_points(field, options);
  result.seed_count = seeds.seeds.size();
  result.cells_surviving = seeds.cells_surviving;
  result.cells_considered = seeds.cells_considered;

  const int n = field.spec().cells();
  const double w = field.spec().spacing();
  const double band_lo = std::clamp(options.boundary_band, 0, n / 2) * w;
  const double band_hi = 1.0 - band_lo;

  std::vector<std::optional<NewtonResult>> refined(seeds.seeds.size());
  parallel_for(
      0, seeds.seeds.size(), [&](std::size_t i) { refined[i] = newton_refine(field, seeds.seeds[i], options); }, 16);

  std::vector<NewtonResult> found;
  for (const auto& r : refined) {
    if (!r) continue;
    if ((r->position.array() < band_lo).any() || (r->position.array() > band_hi).any()) continue;
    found.push_back(*r);
  }
  std::sort(found.begin(), found.end(), [](const NewtonResult& a, const NewtonResult& b) {
    if (a.grad_norm != b.grad_norm) return a.grad_norm < b.grad_norm;
    return lexicographic_less(a.position, b.position);
  });

  const double radius = options.dedup_cells * w;
  std::unordered_map<HashKey, std::vector<Vec3>, HashKeyHash> buckets;
  auto key_of = [radius](const Vec3& p) {
    return HashKey{static_cast<long long>(std::floor(p.x() / radius)), static_cast<long long>(std::floor(p.y() / radius)),
                   static_cast<long long>(std::floor(p.z() / radius))};
  };
  std::vector<Vec3> kept;
  for (const NewtonResult& r : found) {
    const HashKey key = key_of(r.position);
    bool duplicate = false;
    for (long long dz = -1; dz <= 1 && !duplicate; ++dz)
      for (long long dy = -1; dy <= 1 && !duplicate; ++dy)
        for (long long dx = -1; dx <= 1 && !duplicate; ++dx) {
          const auto it = buckets.find(HashKey{key.x + dx, key.y + dy, key.z + dz});
          if (it == buckets.end()) continue;
          for (const Vec3& p : it->second)
            if ((p - r.position).norm() <= radius) {
              duplicate = true;
              break;
            }
        }
    if (duplicate) continue;
    buckets[key].push_back(r.position);
    kept.push_back(r.position);
  }

  std::sort(kept.begin(), kept.end(), lexicographic_less);
  result.criticals.reserve(kept.size());
  for (const Vec3& p : kept) result.criticals.push_back(classify(field, p, options));
  for (const CriticalPoint& cp : result.criticals)
    if (cp.is_saddle()) result.saddles.push_back(cp);
  std::stable_sort(result.saddles.begin(), result.saddles.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    return std::abs(a.value) < std::abs(b.value);
  });

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::vector<CriticalPoint> find_saddles(const SplineField& field, const SearchOptions& options) {
  return find_critical_points(field, options).saddles;
}

}  // namespace morphield
