#pragma once

#include "morphield/bspline.hpp"
#include "morphield/field.hpp"
#include "morphield/grid.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace morphield {

using LatticeIndex = std::array<int, 3>;

// Tensor-product basis rooted at lattice vertex ijk, evaluated at q.
double basis_value(const GridSpec& spec, const LatticeIndex& ijk, const Vec3& q);

// F(q) = sum_ijk alpha_ijk B((q - g_ijk) / w) with one coefficient per
// lattice vertex (no ghost layer). Bases missing outside the lattice count
// as zero, so constants are reproduced only on [2w, 1 - 2w]^3.
class SplineField final : public ImplicitField {
 public:
  SplineField(GridSpec spec, std::vector<double> coefficients);

  const GridSpec& spec() const { return spec_; }
  std::span<const double> coefficients() const { return coefficients_; }

  // Zero outside the lattice.
  double coefficient(int i, int j, int k) const;

  double value(const Vec3& q) const override;
  FieldSample sample(const Vec3& q) const override;
  double spacing() const override { return spec_.spacing(); }

 private:
  GridSpec spec_;
  std::vector<double> coefficients_;
};

// Interpolation matrix A[(i'j'k'), (ijk)] = B_ijk(g_i'j'k') in CSR form with
// columns ascending, plus the sampled right-hand side.
struct SparseSystem {
  GridSpec spec;
  std::vector<std::size_t> row_offsets;
  std::vector<std::uint32_t> columns;
  std::vector<double> values;
  std::vector<double> rhs;

  std::size_t dimension() const { return rhs.size(); }
  std::size_t row_nonzeros(std::size_t row) const { return row_offsets[row + 1] - row_offsets[row]; }
  void multiply(std::span<const double> x, std::span<double> y) const;
};

SparseSystem assemble_system(const SdfGrid& grid);

// Product with the same matrix, generated on the fly from the 27-point
// stencil. Entries and summation order match the stored CSR rows, so the two
// paths give identical results.
void apply_stencil(const GridSpec& spec, std::span<const double> x, std::span<double> y);

struct CgOptions {
  double tolerance = 1e-8;  // relative residual ||A a - c|| / ||c||
  int max_iterations = 0;   // 0 selects 10 * (n + 1)
};

struct SolveReport {
  std::vector<double> coefficients;
  double relative_residual = 0.0;  // recomputed from the returned coefficients
  int iterations = 0;
  bool converged = false;
};

// Unpreconditioned conjugate gradients from a zero start. Reductions use a
// fixed block order, so results do not depend on the worker count.
SolveReport solve_coefficients(const SparseSystem& system, const CgOptions& options = {});
SolveReport solve_coefficients_matrix_free(const GridSpec& spec, std::span<const double> rhs,
                                           const CgOptions& options = {});

}  // namespace morphield
