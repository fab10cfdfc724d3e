#pragma once

#include "morphield/deformer.hpp"
#include "morphield/mesh.hpp"
#include "morphield/types.hpp"

#include <cstdint>
#include <optional>
#include <stop_token>
#include <vector>

namespace morphield {

struct Camera {
  Vec3 position = Vec3(0.5, 0.5, -1.0);
  Vec3 look_at = Vec3(0.5, 0.5, 0.5);
  Vec3 up = Vec3(0.0, 1.0, 0.0);
  double fov_degrees = 45.0;  // vertical
};

struct RenderParams {
  Camera camera;
  int width = 256;
  int height = 256;
  int max_steps = 256;
  double step_scale = 0.7;
  double hit_eps = 1e-4;
  double max_distance = 4.0;

  // Throws std::invalid_argument on bad sizes, step scale or camera.
  void validate() const;
};

struct TraceHit {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  int steps = 0;
};

struct TraceResult {
  std::optional<TraceHit> hit;
  int steps = 0;  // evaluations spent inside the clipped segment
};

// Entry and exit parameters of the ray against [0,1]^3 inflated by 1e-9.
std::optional<std::pair<double, double>> clip_to_unit_cube(const Vec3& origin, const Vec3& direction);

// t <- t + step_scale * F(o + t d) from the cube entry point; hit when
// F < hit_eps. Direction must be unit length.
TraceResult sphere_trace(const ImplicitField& field, const Vec3& origin, const Vec3& direction,
                         const RenderParams& params);
// Same march on a composite, evaluating only deformers whose boxes the ray
// segment crosses. Results equal the generic version bitwise.
TraceResult sphere_trace(const CompositeField& field, const Vec3& origin, const Vec3& direction,
                         const RenderParams& params);

struct RenderedFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgba;  // row-major, top row first
  std::vector<float> depth;        // hit distance, +inf for background
  double milliseconds = 0.0;
  bool cancelled = false;
};

// Primary ray through the center of pixel (x, y), y growing downward.
std::pair<Vec3, Vec3> camera_ray(const RenderParams& params, int x, int y);

// Lambertian headlight shading from the analytic gradient; background pixels
// are transparent. Rows are split across workers; the stop token is checked
// between rows.
RenderedFrame render(const CompositeField& field, const RenderParams& params, std::stop_token stop = {});

// Marching tetrahedra on a (resolution + 1)^3 lattice over [0,1]^3 (six
// tetrahedra per cube around the main diagonal). A positive padding layer
// closes surfaces that touch the cube faces. Vertices are welded per
// lattice edge and triangles face +grad F.
MeshData extract_mesh(const ImplicitField& field, int resolution);

// RGBA8 PNG bytes.
std::vector<std::uint8_t> encode_png(int width, int height, const std::vector<std::uint8_t>& rgba);
void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgba);

}  // namespace morphield
