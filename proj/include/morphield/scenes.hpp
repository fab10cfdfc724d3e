#pragma once

#include "morphield/mesh.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace morphield {

// Test scenes in unit-cube coordinates:
//   sphere       radius 0.3 at the center
//   two_spheres  radius 0.12 at x = 0.35 and x = 0.65 (gap 0.06)
//   torus        major 0.25, minor 0.08, axis z through the center
//   bridge       the two spheres joined by a smooth neck of radius ~0.04
std::vector<std::string> scene_names();

// Throws std::invalid_argument for unknown names.
MeshData make_scene(std::string_view name);

}  // namespace morphield
