#pragma once

#include "morphield/critical_search.hpp"
#include "morphield/field.hpp"
#include "morphield/mesh.hpp"
#include "morphield/spline_field.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace morphield::test {

inline constexpr std::uint64_t kSeed = 0x5eed'0001;

std::vector<Vec3> random_points(std::size_t count, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

// Interpolating fit of a closed-form function sampled at the lattice.
std::shared_ptr<const SplineField> fit_function(int cells, const std::function<double(const Vec3&)>& f);

struct FittedScene {
  MeshData mesh;
  std::shared_ptr<const SplineField> field;
  SolveReport solve;
  CriticalSearchResult search;
};

// Fits one of the built-in scenes in unit coordinates. Cached per process.
const FittedScene& fitted_scene(const std::string& name, int cells = 64);

double sphere_sdf(const Vec3& q, const Vec3& center, double radius);

struct FdDerivatives {
  Vec3 gradient = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();
};

// Central differences with base step h and one Richardson step (h/2):
// gradient from values, Hessian from analytic gradients. Exact up to
// round-off for cubic pieces when the stencil stays inside one piece.
FdDerivatives richardson_differences(const ImplicitField& f, const Vec3& q, double h);
// Plain central differences, step h.
FdDerivatives central_differences(const ImplicitField& f, const Vec3& q, double h);

// True when q +- h along every axis stays inside one lattice cell of
// spacing w (no knot plane between the stencil ends).
bool stencil_in_one_cell(const Vec3& q, double h, double w);

// Random points in [lo, hi]^3 whose stencils avoid the lattice planes.
std::vector<Vec3> stencil_safe_points(std::size_t count, std::uint64_t seed, double lo, double hi, double h, double w);

double relative_error(const Vec3& approx, const Vec3& exact);
double relative_error(const Mat3& approx, const Mat3& exact);

struct BruteCandidate {
  Vec3 position;
  double grad_norm;
  double newton_distance;  // |grad F| / min |lambda|: how far the root can be
  CriticalClass kind;
};

// Scan a lattice 4x finer than the field for local minima of |grad F| that
// are small enough to sit next to a true root: within half a diagonal step of
// a non-degenerate critical point |grad F| <= max|lambda| * step.
std::vector<BruteCandidate> brute_force_criticals(const SplineField& f, int band_cells);

// Generic random symmetric 3x3 with entries in [-1, 1].
Mat3 random_symmetric(std::mt19937_64& rng);

}  // namespace morphield::test
