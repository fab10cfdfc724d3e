#include "morphield/scenes.hpp"

#include "morphield/field.hpp"
#include "morphield/primitives.hpp"
#include "morphield/surfacing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphield {

namespace {

const Vec3 kCenter(0.5, 0.5, 0.5);
const Vec3 kLeft(0.35, 0.5, 0.5);
const Vec3 kRight(0.65, 0.5, 0.5);
constexpr double kSmallRadius = 0.12;

// Polynomial smooth minimum with blend width k.
double smooth_min(double a, double b, double k) {
  const double h = std::max(k - std::abs(a - b), 0.0) / k;
  return std::min(a, b) - 0.25 * h * h * k;
}

MeshData make_bridge() {
  const AnalyticField field(
      [](const Vec3& q) {
        return smooth_min((q - kLeft).norm() - kSmallRadius, (q - kRight).norm() - kSmallRadius, 0.14);
      },
      1.0 / 160);
  return extract_mesh(field, 160);
}

}  // namespace

std::vector<std::string> scene_names() { return {"sphere", "two_spheres", "torus", "bridge"}; }

MeshData make_scene(std::string_view name) {
  if (name == "sphere") return make_icosphere(kCenter, 0.3, 4);
  if (name == "two_spheres")
    return merge_meshes(make_icosphere(kLeft, kSmallRadius, 4), make_icosphere(kRight, kSmallRadius, 4));
  if (name == "torus") return make_torus(kCenter, 0.25, 0.08, 128, 48);
  if (name == "bridge") return make_bridge();
  throw std::invalid_argument("unknown scene '" + std::string(name) + "'");
}

}  // namespace morphield
