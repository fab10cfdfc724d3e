#pragma once

#include <array>
#include <cmath>

namespace morphield {

// Centered uniform cubic B-spline, support (-2, 2), b(0) = 2/3, b(+-1) = 1/6.
inline double bspline_b(double t) {
  const double a = std::abs(t);
  if (a >= 2.0) return 0.0;
  if (a >= 1.0) {
    const double r = 2.0 - a;
    return r * r * r / 6.0;
  }
  return 0.5 * a * a * a - a * a + 2.0 / 3.0;
}

// First derivative: odd, C1.
inline double bspline_b_d1(double t) {
  const double a = std::abs(t);
  if (a >= 2.0) return 0.0;
  double d;
  if (a >= 1.0) {
    const double r = 2.0 - a;
    d = -0.5 * r * r;
  } else {
    d = 1.5 * a * a - 2.0 * a;
  }
  return t < 0.0 ? -d : d;
}

// Second derivative: even, C0.
inline double bspline_b_d2(double t) {
  const double a = std::abs(t);
  if (a >= 2.0) return 0.0;
  if (a >= 1.0) return 2.0 - a;
  return 3.0 * a - 2.0;
}

// Value of the trivariate tensor-product basis at u (lattice units).
inline double bspline_tensor(double ux, double uy, double uz) {
  return bspline_b(ux) * bspline_b(uy) * bspline_b(uz);
}

// B(0) = b(0)^3.
inline constexpr double kBasisPeak = 8.0 / 27.0;

// Weights of the four bases touching a cell at fractional offset f in [0,1]:
// entry m belongs to the basis rooted m - 1 vertices from the cell's low
// corner, i.e. w[m] = b(f + 1 - m).
struct CellWeights {
  std::array<double, 4> w;
  std::array<double, 4> d1;
  std::array<double, 4> d2;
};

inline std::array<double, 4> cell_weights(double f) {
  const double g = 1.0 - f;
  const double f2 = f * f, f3 = f2 * f;
  return {g * g * g / 6.0, (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0, (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0,
          f3 / 6.0};
}

inline CellWeights cell_weights_full(double f) {
  const double g = 1.0 - f;
  const double f2 = f * f;
  CellWeights out;
  out.w = cell_weights(f);
  out.d1 = {-0.5 * g * g, 1.5 * f2 - 2.0 * f, -1.5 * f2 + f + 0.5, 0.5 * f2};
  out.d2 = {g, 3.0 * f - 2.0, -3.0 * f + 1.0, f};
  return out;
}

}  // namespace morphield
