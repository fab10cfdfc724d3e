#pragma once

#include "morphield/spline_field.hpp"
#include "morphield/types.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace morphield {

enum class CriticalClass { minimum, saddle1, saddle2, maximum };

std::string_view to_string(CriticalClass kind);
std::optional<CriticalClass> critical_class_from_string(std::string_view name);
// Class from the number of negative eigenvalues (0..3).
CriticalClass class_from_negative_count(int negatives);

struct CriticalPoint {
  Vec3 position = Vec3::Zero();
  double value = 0.0;
  double grad_norm = 0.0;
  Vec3 eigenvalues = Vec3::Zero();  // ascending
  Mat3 eigenvectors = Mat3::Identity();
  CriticalClass kind = CriticalClass::minimum;
  bool degenerate = false;  // some |lambda| below the relative threshold

  bool is_saddle() const { return !degenerate && (kind == CriticalClass::saddle1 || kind == CriticalClass::saddle2); }
};

using CellIndex = std::array<int, 3>;

// Per-axis bounds of the gradient over one lattice cell.
struct CellInterval {
  CellIndex cell{};
  Vec3 lower = Vec3::Zero();
  Vec3 upper = Vec3::Zero();

  bool contains_zero() const { return (lower.array() <= 0.0).all() && (upper.array() >= 0.0).all(); }
};

struct SearchOptions {
  double grad_tolerance = 1e-9;
  double eigen_tolerance = 1e-6;  // relative to max |lambda|
  int max_iterations = 20;
  int max_halvings = 8;
  double singular_det = 1e-18;
  double levenberg_shift = 1e-6;
  double wander_cells = 2.0;
  double dedup_cells = 0.25;
  // Cells this close to the cube faces are not seeded, and roots found there
  // are dropped. The truncated basis near the faces produces a ringing
  // layer whose critical points say nothing about the shape.
  int boundary_band = 4;
};

// Conservative bounds from the convex hull of the derivative spline's
// coefficients. Coefficients outside the lattice count as zero.
CellInterval gradient_bounds(const SplineField& field, const CellIndex& cell);

struct SeedSet {
  std::vector<Vec3> seeds;
  std::size_t cells_considered = 0;
  std::size_t cells_surviving = 0;
};

// Subcell centers (one level of subdivision) of every cell whose gradient
// bounds contain zero on all three axes.
SeedSet seed_points(const SplineField& field, const SearchOptions& options = {});

struct NewtonResult {
  Vec3 position = Vec3::Zero();
  double grad_norm = 0.0;
  int iterations = 0;
};

// Damped Newton iteration on grad F = 0. Empty on divergence, leaving the
// unit cube, wandering too far from the seed or exhausting the step damping.
std::optional<NewtonResult> newton_refine(const ImplicitField& field, const Vec3& seed,
                                          const SearchOptions& options = {});

CriticalPoint classify(const ImplicitField& field, const Vec3& position, const SearchOptions& options = {});

// Same rule applied to a known Hessian (no field evaluation).
CriticalPoint classify_hessian(const Mat3& hessian, const SearchOptions& options = {});

struct CriticalSearchResult {
  std::vector<CriticalPoint> criticals;  // all refined points after dedup, position order
  std::vector<CriticalPoint> saddles;    // non-degenerate saddles, by |F| ascending
  std::size_t seed_count = 0;
  std::size_t cells_surviving = 0;
  std::size_t cells_considered = 0;
  double seconds = 0.0;
};

CriticalSearchResult find_critical_points(const SplineField& field, const SearchOptions& options = {});
std::vector<CriticalPoint> find_saddles(const SplineField& field, const SearchOptions& options = {});

}  // namespace morphield
