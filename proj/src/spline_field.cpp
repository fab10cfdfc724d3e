#include "morphield/spline_field.hpp"

#include "morphield/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace morphield {

double basis_value(const GridSpec& spec, const LatticeIndex& ijk, const Vec3& q) {
  const double n = spec.cells();
  return bspline_tensor(q.x() * n - ijk[0], q.y() * n - ijk[1], q.z() * n - ijk[2]);
}

SplineField::SplineField(GridSpec spec, std::vector<double> coefficients)
    : spec_(spec), coefficients_(std::move(coefficients)) {
  if (coefficients_.size() != spec_.vertex_count())
    throw std::invalid_argument("coefficient lattice size does not match the grid");
}

double SplineField::coefficient(int i, int j, int k) const {
  const int m = spec_.vertices_per_axis();
  if (i < 0 || j < 0 || k < 0 || i >= m || j >= m || k >= m) return 0.0;
  return coefficients_[spec_.index(i, j, k)];
}

namespace {

// Cell containing u (lattice units) and the local offset. Inside the domain
// the cell is clamped to [0, n-1] so u = n lands in the last cell at f = 1.
struct AxisLocation {
  int cell;
  double frac;
  int m_lo;  // first valid basis slot (0..3)
  int m_hi;  // one past the last valid slot
};

inline AxisLocation locate(double u, int n) {
  AxisLocation loc;
  double c = std::floor(u);
  if (u >= 0.0 && u <= n) c = std::min<double>(c, n - 1);
  loc.cell = static_cast<int>(c);
  loc.frac = u - c;
  // Basis index for slot m is cell - 1 + m; valid when in [0, n].
  loc.m_lo = std::max(0, 1 - loc.cell);
  loc.m_hi = std::min(4, n + 2 - loc.cell);
  if (loc.m_hi < loc.m_lo) loc.m_hi = loc.m_lo;
  return loc;
}

inline bool outside_unit_cube(const Vec3& q) { return (q.array() < 0.0).any() || (q.array() > 1.0).any(); }

}  // namespace

double SplineField::value(const Vec3& q) const {
  const int n = spec_.cells();
  const AxisLocation lx = locate(q.x() * n, n), ly = locate(q.y() * n, n), lz = locate(q.z() * n, n);
  if (lx.m_lo >= lx.m_hi || ly.m_lo >= ly.m_hi || lz.m_lo >= lz.m_hi) return 0.0;
  const auto wx = cell_weights(lx.frac), wy = cell_weights(ly.frac), wz = cell_weights(lz.frac);

  const std::size_t m = spec_.vertices_per_axis();
  const double* alpha = coefficients_.data();
  double result = 0.0;
  for (int c = lz.m_lo; c < lz.m_hi; ++c) {
    const std::size_t zk = static_cast<std::size_t>(lz.cell - 1 + c);
    double sy = 0.0;
    for (int b = ly.m_lo; b < ly.m_hi; ++b) {
      const std::size_t yj = static_cast<std::size_t>(ly.cell - 1 + b);
      const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(m * (yj + m * zk)) + (lx.cell - 1);
      double sx = 0.0;
      for (int a = lx.m_lo; a < lx.m_hi; ++a) sx += wx[a] * alpha[row + a];
      sy += wy[b] * sx;
    }
    result += wz[c] * sy;
  }
  return result;
}

FieldSample SplineField::sample(const Vec3& q) const {
  FieldSample out;
  out.extrapolated = outside_unit_cube(q);
  const int n = spec_.cells();
  const AxisLocation lx = locate(q.x() * n, n), ly = locate(q.y() * n, n), lz = locate(q.z() * n, n);
  if (lx.m_lo >= lx.m_hi || ly.m_lo >= ly.m_hi || lz.m_lo >= lz.m_hi) return out;
  const CellWeights wx = cell_weights_full(lx.frac), wy = cell_weights_full(ly.frac),
                    wz = cell_weights_full(lz.frac);

  const std::size_t m = spec_.vertices_per_axis();
  const double* alpha = coefficients_.data();
  double f = 0, fx = 0, fy = 0, fz = 0, fxx = 0, fyy = 0, fzz = 0, fxy = 0, fxz = 0, fyz = 0;
  for (int c = lz.m_lo; c < lz.m_hi; ++c) {
    const std::size_t zk = static_cast<std::size_t>(lz.cell - 1 + c);
    double s00 = 0, s01 = 0, s02 = 0, s10 = 0, s11 = 0, s20 = 0;
    for (int b = ly.m_lo; b < ly.m_hi; ++b) {
      const std::size_t yj = static_cast<std::size_t>(ly.cell - 1 + b);
      const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(m * (yj + m * zk)) + (lx.cell - 1);
      double x0 = 0, x1 = 0, x2 = 0;
      for (int a = lx.m_lo; a < lx.m_hi; ++a) {
        const double alpha_a = alpha[row + a];
        x0 += wx.w[a] * alpha_a;
        x1 += wx.d1[a] * alpha_a;
        x2 += wx.d2[a] * alpha_a;
      }
      s00 += wy.w[b] * x0;
      s01 += wy.w[b] * x1;
      s02 += wy.w[b] * x2;
      s10 += wy.d1[b] * x0;
      s11 += wy.d1[b] * x1;
      s20 += wy.d2[b] * x0;
    }
    f += wz.w[c] * s00;
    fx += wz.w[c] * s01;
    fxx += wz.w[c] * s02;
    fy += wz.w[c] * s10;
    fxy += wz.w[c] * s11;
    fyy += wz.w[c] * s20;
    fz += wz.d1[c] * s00;
    fxz += wz.d1[c] * s01;
    fyz += wz.d1[c] * s10;
    fzz += wz.d2[c] * s00;
  }

  const double s1 = n, s2 = static_cast<double>(n) * n;
  out.value = f;
  out.gradient = Vec3(fx * s1, fy * s1, fz * s1);
  out.hessian << fxx * s2, fxy * s2, fxz * s2,  //
      fxy * s2, fyy * s2, fyz * s2,             //
      fxz * s2, fyz * s2, fzz * s2;
  return out;
}

// ---------------------------------------------------------------------------
// Interpolation system

namespace {

// b(d) for lattice offsets d in {-1, 0, 1}.
inline double offset_weight(int d) { return d == 0 ? 2.0 / 3.0 : 1.0 / 6.0; }

}  // namespace

SparseSystem assemble_system(const SdfGrid& grid) {
  const GridSpec& spec = grid.spec;
  const int m = spec.vertices_per_axis();
  const std::size_t dim = spec.vertex_count();
  if (grid.values.size() != dim) throw std::invalid_argument("grid values do not match the grid spec");

  SparseSystem system;
  system.spec = spec;
  system.rhs = grid.values;
  system.row_offsets.resize(dim + 1, 0);

  // Row lengths are known from the lattice position alone.
  auto span_of = [m](int i) { return (i > 0 ? 1 : 0) + 1 + (i < m - 1 ? 1 : 0); };
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        system.row_offsets[spec.index(i, j, k) + 1] = static_cast<std::size_t>(span_of(i) * span_of(j) * span_of(k));
  for (std::size_t r = 0; r < dim; ++r) system.row_offsets[r + 1] += system.row_offsets[r];
  system.columns.resize(system.row_offsets.back());
  system.values.resize(system.row_offsets.back());

  parallel_for(0, static_cast<std::size_t>(m) * m, [&](std::size_t line) {
    const int j = static_cast<int>(line % m), k = static_cast<int>(line / m);
    for (int i = 0; i < m; ++i) {
      std::size_t slot = system.row_offsets[spec.index(i, j, k)];
      for (int dk = -1; dk <= 1; ++dk) {
        if (k + dk < 0 || k + dk >= m) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          if (j + dj < 0 || j + dj >= m) continue;
          for (int di = -1; di <= 1; ++di) {
            if (i + di < 0 || i + di >= m) continue;
            system.columns[slot] = static_cast<std::uint32_t>(spec.index(i + di, j + dj, k + dk));
            system.values[slot] = offset_weight(di) * offset_weight(dj) * offset_weight(dk);
            ++slot;
          }
        }
      }
    }
  });
  return system;
}

void SparseSystem::multiply(std::span<const double> x, std::span<double> y) const {
  parallel_for(
      0, dimension(),
      [&](std::size_t r) {
        double sum = 0.0;
        for (std::size_t e = row_offsets[r]; e < row_offsets[r + 1]; ++e) sum += values[e] * x[columns[e]];
        y[r] = sum;
      },
      4096);
}

void apply_stencil(const GridSpec& spec, std::span<const double> x, std::span<double> y) {
  const int m = spec.vertices_per_axis();
  parallel_for(0, static_cast<std::size_t>(m) * m, [&](std::size_t line) {
    const int j = static_cast<int>(line % m), k = static_cast<int>(line / m);
    for (int i = 0; i < m; ++i) {
      double sum = 0.0;
      for (int dk = -1; dk <= 1; ++dk) {
        if (k + dk < 0 || k + dk >= m) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          if (j + dj < 0 || j + dj >= m) continue;
          const double* row = x.data() + spec.index(0, j + dj, k + dk);
          for (int di = -1; di <= 1; ++di) {
            if (i + di < 0 || i + di >= m) continue;
            sum += (offset_weight(di) * offset_weight(dj) * offset_weight(dk)) * row[i + di];
          }
        }
      }
      y[spec.index(i, j, k)] = sum;
    }
  });
}

// ---------------------------------------------------------------------------
// Conjugate gradients

namespace {

constexpr std::size_t kReductionBlock = 8192;

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t blocks = (a.size() + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(0, blocks, [&](std::size_t blk) {
    const std::size_t lo = blk * kReductionBlock, hi = std::min(a.size(), lo + kReductionBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[blk] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

template <class Op>
void for_blocks(std::size_t size, Op&& op) {
  const std::size_t blocks = (size + kReductionBlock - 1) / kReductionBlock;
  parallel_for(0, blocks, [&](std::size_t blk) {
    const std::size_t lo = blk * kReductionBlock, hi = std::min(size, lo + kReductionBlock);
    for (std::size_t i = lo; i < hi; ++i) op(i);
  });
}

template <class Apply>
SolveReport conjugate_gradient(Apply&& apply, std::span<const double> rhs, int max_iterations, double tolerance) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("CG tolerance must be positive");
  const std::size_t dim = rhs.size();
  SolveReport report;
  report.coefficients.assign(dim, 0.0);
  std::vector<double>& x = report.coefficients;

  const double rhs_norm = std::sqrt(dot(rhs, rhs));
  if (rhs_norm == 0.0) {
    report.converged = true;
    return report;
  }

  std::vector<double> r(rhs.begin(), rhs.end()), p = r, ap(dim);
  double rs = dot(r, r);
  const double target = tolerance * rhs_norm;
  int it = 0;
  while (it < max_iterations && std::sqrt(rs) > target) {
    apply(p, ap);
    const double alpha = rs / dot(p, ap);
    for_blocks(dim, [&](std::size_t i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    });
    const double rs_next = dot(r, r);
    const double beta = rs_next / rs;
    for_blocks(dim, [&](std::size_t i) { p[i] = r[i] + beta * p[i]; });
    rs = rs_next;
    ++it;
  }

  report.iterations = it;
  apply(x, ap);
  for_blocks(dim, [&](std::size_t i) { r[i] = rhs[i] - ap[i]; });
  report.relative_residual = std::sqrt(dot(r, r)) / rhs_norm;
  report.converged = report.relative_residual <= tolerance;
  return report;
}

int resolve_max_iterations(const GridSpec& spec, const CgOptions& options) {
  return options.max_iterations > 0 ? options.max_iterations : 10 * spec.vertices_per_axis();
}

}  // namespace

SolveReport solve_coefficients(const SparseSystem& system, const CgOptions& options) {
  return conjugate_gradient([&](std::span<const double> in, std::span<double> out) { system.multiply(in, out); },
                            system.rhs, resolve_max_iterations(system.spec, options), options.tolerance);
}

SolveReport solve_coefficients_matrix_free(const GridSpec& spec, std::span<const double> rhs,
                                           const CgOptions& options) {
  if (rhs.size() != spec.vertex_count()) throw std::invalid_argument("right-hand side does not match the grid");
  return conjugate_gradient([&](std::span<const double> in, std::span<double> out) { apply_stencil(spec, in, out); },
                            rhs, resolve_max_iterations(spec, options), options.tolerance);
}

}  // namespace morphield
