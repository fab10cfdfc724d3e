#include "support.hpp"

#include "morphield/grid.hpp"
#include "morphield/mesh_distance.hpp"
#include "morphield/parallel.hpp"
#include "morphield/scenes.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <mutex>

namespace morphield::test {

std::vector<Vec3> random_points(std::size_t count, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> out(count);
  for (auto& p : out) p = Vec3(u(rng), u(rng), u(rng));
  return out;
}

std::shared_ptr<const SplineField> fit_function(int cells, const std::function<double(const Vec3&)>& f) {
  const GridSpec spec(cells);
  std::vector<double> values(spec.vertex_count());
  for (int k = 0; k <= cells; ++k)
    for (int j = 0; j <= cells; ++j)
      for (int i = 0; i <= cells; ++i) values[spec.index(i, j, k)] = f(spec.vertex(i, j, k));
  auto report = solve_coefficients_matrix_free(spec, values);
  return std::make_shared<const SplineField>(spec, std::move(report.coefficients));
}

const FittedScene& fitted_scene(const std::string& name, int cells) {
  static std::mutex mutex;
  static std::map<std::pair<std::string, int>, std::unique_ptr<FittedScene>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{name, cells}];
  if (!slot) {
    slot = std::make_unique<FittedScene>();
    slot->mesh = make_scene(name);
    const MeshDistance distance(slot->mesh);
    const SdfGrid grid = sample_grid(distance, GridSpec(cells));
    slot->solve = solve_coefficients_matrix_free(grid.spec, grid.values);
    slot->field = std::make_shared<const SplineField>(grid.spec, slot->solve.coefficients);
    slot->search = find_critical_points(*slot->field);
  }
  return *slot;
}

double sphere_sdf(const Vec3& q, const Vec3& center, double radius) { return (q - center).norm() - radius; }

FdDerivatives central_differences(const ImplicitField& f, const Vec3& q, double h) {
  FdDerivatives d;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    d.gradient[a] = (f.value(q + e) - f.value(q - e)) / (2 * h);
    d.hessian.col(a) = (f.sample(q + e).gradient - f.sample(q - e).gradient) / (2 * h);
  }
  return d;
}

FdDerivatives richardson_differences(const ImplicitField& f, const Vec3& q, double h) {
  const FdDerivatives coarse = central_differences(f, q, h), fine = central_differences(f, q, h / 2);
  return {(4 * fine.gradient - coarse.gradient) / 3, (4 * fine.hessian - coarse.hessian) / 3};
}

bool stencil_in_one_cell(const Vec3& q, double h, double w) {
  for (int a = 0; a < 3; ++a)
    if (std::floor((q[a] - h) / w) != std::floor((q[a] + h) / w)) return false;
  return true;
}

std::vector<Vec3> stencil_safe_points(std::size_t count, std::uint64_t seed, double lo, double hi, double h, double w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> out;
  out.reserve(count);
  while (out.size() < count) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (stencil_in_one_cell(p, h, w)) out.push_back(p);
  }
  return out;
}

double relative_error(const Vec3& approx, const Vec3& exact) { return (approx - exact).norm() / exact.norm(); }
double relative_error(const Mat3& approx, const Mat3& exact) { return (approx - exact).norm() / exact.norm(); }

std::vector<BruteCandidate> brute_force_criticals(const SplineField& f, int band_cells) {
  const int n = f.spec().cells();
  const int m = 4 * n;
  const double h = 1.0 / m;
  const int lo = 4 * band_cells, hi = m - 4 * band_cells;
  const int side = hi - lo + 1;
  auto at = [&](int i, int j, int k) { return (static_cast<std::size_t>(k) * side + j) * side + i; };
  std::vector<double> norm(static_cast<std::size_t>(side) * side * side);
  parallel_for(0, static_cast<std::size_t>(side), [&](std::size_t k) {
    for (int j = 0; j < side; ++j)
      for (int i = 0; i < side; ++i)
        norm[at(i, j, static_cast<int>(k))] =
            f.sample(Vec3(lo + i, lo + j, lo + static_cast<int>(k)) * h).gradient.norm();
  });
  std::vector<BruteCandidate> out;
  for (int k = 1; k + 1 < side; ++k)
    for (int j = 1; j + 1 < side; ++j)
      for (int i = 1; i + 1 < side; ++i) {
        const double g = norm[at(i, j, k)];
        bool minimum = true;
        for (int dk = -1; dk <= 1 && minimum; ++dk)
          for (int dj = -1; dj <= 1 && minimum; ++dj)
            for (int di = -1; di <= 1; ++di)
              if ((di || dj || dk) && norm[at(i + di, j + dj, k + dk)] < g) {
                minimum = false;
                break;
              }
        if (!minimum) continue;
        const Vec3 p = Vec3(lo + i, lo + j, lo + k) * h;
        const Eigen::SelfAdjointEigenSolver<Mat3> eig(f.sample(p).hessian);
        const Vec3 lambda = eig.eigenvalues();
        if (g > lambda.cwiseAbs().maxCoeff() * h) continue;
        const int negatives = static_cast<int>((lambda.array() < 0.0).count());
        out.push_back({p, g, g / lambda.cwiseAbs().minCoeff(), class_from_negative_count(negatives)});
      }
  return out;
}

Mat3 random_symmetric(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = r; c < 3; ++c) m(r, c) = m(c, r) = u(rng);
  return m;
}

}  // namespace morphield::test
