#pragma once

#include "morphield/mesh.hpp"

namespace morphield {

// Subdivided icosahedron projected onto the sphere; outward winding.
// Level L has 10 * 4^L + 2 vertices and 20 * 4^L triangles.
MeshData make_icosphere(const Vec3& center, double radius, int levels);

// Parametric torus around the z axis through `center`; outward winding.
MeshData make_torus(const Vec3& center, double major_radius, double minor_radius, int major_segments,
                    int minor_segments);

// Axis-aligned box with 8 vertices and 12 triangles.
MeshData make_box(const Vec3& lo, const Vec3& hi);

// Concatenation without welding.
MeshData merge_meshes(const MeshData& a, const MeshData& b);

}  // namespace morphield
