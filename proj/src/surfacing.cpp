#include "morphield/surfacing.hpp"

#include "morphield/parallel.hpp"

#include <png.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace morphield {

void RenderParams::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("image size must be at least 1x1");
  if (width > 8192 || height > 8192) throw std::invalid_argument("image size is limited to 8192 per side");
  if (!(step_scale > 0.0 && step_scale <= 1.0)) throw std::invalid_argument("step_scale must be in (0, 1]");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be positive");
  if (!(hit_eps > 0.0) || !(max_distance > 0.0)) throw std::invalid_argument("hit_eps and max_distance must be positive");
  if (!(camera.fov_degrees > 0.0 && camera.fov_degrees < 180.0))
    throw std::invalid_argument("field of view must be in (0, 180) degrees");
  const Vec3 forward = camera.look_at - camera.position;
  if (!(forward.norm() > 0.0)) throw std::invalid_argument("camera position and look_at coincide");
  if (!(forward.cross(camera.up).norm() > 1e-12 * forward.norm() * camera.up.norm()))
    throw std::invalid_argument("camera up vector is parallel to the view direction");
  if (!camera.position.allFinite() || !camera.look_at.allFinite() || !camera.up.allFinite())
    throw std::invalid_argument("camera vectors must be finite");
}

std::optional<std::pair<double, double>> clip_to_unit_cube(const Vec3& origin, const Vec3& direction) {
  constexpr double kPad = 1e-9;
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (direction[a] == 0.0) {
      if (origin[a] < -kPad || origin[a] > 1.0 + kPad) return std::nullopt;
      continue;
    }
    double ta = (-kPad - origin[a]) / direction[a];
    double tb = (1.0 + kPad - origin[a]) / direction[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  t0 = std::max(t0, 0.0);
  if (t0 > t1) return std::nullopt;
  return std::make_pair(t0, t1);
}

namespace {

template <class Eval>
TraceResult march(Eval&& eval, const Vec3& origin, const Vec3& direction, double t0, double t1,
                  const RenderParams& params) {
  TraceResult result;
  const double t_end = std::min(t1, params.max_distance);
  double t = t0;
  for (int step = 0; step < params.max_steps; ++step) {
    if (t > t_end) break;
    const Vec3 p = origin + t * direction;
    const double f = eval(p);
    ++result.steps;
    if (f < params.hit_eps) {
      result.hit = TraceHit{p, t, result.steps};
      break;
    }
    t += params.step_scale * f;
  }
  return result;
}

}  // namespace

TraceResult sphere_trace(const ImplicitField& field, const Vec3& origin, const Vec3& direction,
                         const RenderParams& params) {
  const auto clip = clip_to_unit_cube(origin, direction);
  if (!clip) return {};
  return march([&](const Vec3& p) { return field.value(p); }, origin, direction, clip->first, clip->second, params);
}

TraceResult sphere_trace(const CompositeField& field, const Vec3& origin, const Vec3& direction,
                         const RenderParams& params) {
  const auto clip = clip_to_unit_cube(origin, direction);
  if (!clip) return {};
  std::vector<std::size_t> active;
  field.deformers_on_segment(origin, direction, clip->first - 1e-9, clip->second + 1e-9, active);
  return march([&](const Vec3& p) { return field.value_subset(p, active); }, origin, direction, clip->first,
               clip->second, params);
}

std::pair<Vec3, Vec3> camera_ray(const RenderParams& params, int x, int y) {
  const Camera& cam = params.camera;
  const Vec3 forward = (cam.look_at - cam.position).normalized();
  const Vec3 right = forward.cross(cam.up).normalized();
  const Vec3 up = right.cross(forward);
  const double tan_half = std::tan(0.5 * cam.fov_degrees * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(params.width) / params.height;
  const double sx = (2.0 * (x + 0.5) / params.width - 1.0) * tan_half * aspect;
  const double sy = (1.0 - 2.0 * (y + 0.5) / params.height) * tan_half;
  return {cam.position, (forward + sx * right + sy * up).normalized()};
}

RenderedFrame render(const CompositeField& field, const RenderParams& params, std::stop_token stop) {
  params.validate();
  const auto start = std::chrono::steady_clock::now();
  RenderedFrame frame;
  frame.width = params.width;
  frame.height = params.height;
  const auto pixels = static_cast<std::size_t>(params.width) * params.height;
  frame.rgba.assign(pixels * 4, 0);
  frame.depth.assign(pixels, std::numeric_limits<float>::infinity());

  const Vec3 base_color(0.86, 0.80, 0.66);
  constexpr double kAmbient = 0.15;
  std::atomic<bool> cancelled{false};

  parallel_for(0, static_cast<std::size_t>(params.height), [&](std::size_t row) {
    if (stop.stop_requested()) {
      cancelled.store(true, std::memory_order_relaxed);
      return;
    }
    const int y = static_cast<int>(row);
    std::vector<std::size_t> active;
    for (int x = 0; x < params.width; ++x) {
      const auto [origin, direction] = camera_ray(params, x, y);
      const auto clip = clip_to_unit_cube(origin, direction);
      if (!clip) continue;
      field.deformers_on_segment(origin, direction, clip->first - 1e-9, clip->second + 1e-9, active);
      const TraceResult trace = march([&](const Vec3& p) { return field.value_subset(p, active); }, origin,
                                      direction, clip->first, clip->second, params);
      if (!trace.hit) continue;
      const FieldSample s = field.sample_subset(trace.hit->point, active);
      const double g = s.gradient.norm();
      double diffuse = 0.0;
      if (g > 0.0) diffuse = std::max(0.0, -s.gradient.dot(direction) / g);
      const double intensity = kAmbient + (1.0 - kAmbient) * diffuse;
      const std::size_t px = static_cast<std::size_t>(y) * params.width + x;
      for (int c = 0; c < 3; ++c)
        frame.rgba[4 * px + c] =
            static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * intensity * base_color[c]), 0L, 255L));
      frame.rgba[4 * px + 3] = 255;
      frame.depth[px] = static_cast<float>(trace.hit->distance);
    }
  });

  frame.cancelled = cancelled.load();
  frame.milliseconds = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return frame;
}

// ---------------------------------------------------------------------------
// Marching tetrahedra

namespace {

// Six tetrahedra sharing the cube diagonal 0-7; corner bit 0 is x, bit 1 y,
// bit 2 z. Neighbouring cubes split shared faces the same way.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};

using EdgeKey = std::uint64_t;
using KeyTriangle = std::array<EdgeKey, 3>;

}  // namespace

MeshData extract_mesh(const ImplicitField& field, int resolution) {
  if (resolution < 8) throw std::invalid_argument("extraction resolution must be at least 8");
  const int r = resolution;
  const int p = r + 3;  // padded vertices per axis; padded index = lattice index + 1
  const auto pp = static_cast<std::size_t>(p);
  const std::size_t total = pp * pp * pp;
  auto pid = [pp](int i, int j, int k) {
    return static_cast<std::size_t>(i) + pp * (static_cast<std::size_t>(j) + pp * static_cast<std::size_t>(k));
  };
  auto position = [r](int i, int j, int k) {
    return Vec3(static_cast<double>(i - 1) / r, static_cast<double>(j - 1) / r, static_cast<double>(k - 1) / r);
  };

  std::vector<double> values(total, 1.0);
  parallel_for(0, static_cast<std::size_t>(r + 1) * (r + 1), [&](std::size_t line) {
    const int j = static_cast<int>(line % (r + 1)) + 1, k = static_cast<int>(line / (r + 1)) + 1;
    for (int i = 1; i <= r + 1; ++i) values[pid(i, j, k)] = field.value(position(i, j, k));
  });

  auto lattice_point = [&](std::size_t id) {
    return position(static_cast<int>(id % pp), static_cast<int>((id / pp) % pp), static_cast<int>(id / (pp * pp)));
  };
  auto vertex_of_key = [&](EdgeKey key) {
    const std::size_t a = key / total, b = key % total;
    const double fa = values[a], fb = values[b];
    const double t = fa / (fa - fb);
    const Vec3 pa = lattice_point(a), pb = lattice_point(b);
    return Vec3(pa + t * (pb - pa));
  };
  // Orientation is decided on edge midpoints: interpolated vertices collapse
  // onto a lattice point when F is exactly zero there, midpoints never do.
  auto midpoint_of_key = [&](EdgeKey key) { return Vec3(0.5 * (lattice_point(key / total) + lattice_point(key % total))); };

  const int cubes = p - 1;
  std::vector<std::vector<KeyTriangle>> slabs(static_cast<std::size_t>(cubes));
  parallel_for(0, static_cast<std::size_t>(cubes), [&](std::size_t slab) {
    const int k = static_cast<int>(slab);
    auto& out = slabs[slab];
    for (int j = 0; j < cubes; ++j) {
      for (int i = 0; i < cubes; ++i) {
        std::size_t ids[8];
        int inside_count = 0;
        for (int c = 0; c < 8; ++c) {
          ids[c] = pid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (values[ids[c]] < 0.0) ++inside_count;
        }
        if (inside_count == 0 || inside_count == 8) continue;

        for (const auto& tet : kTets) {
          int in[4], out_v[4], ni = 0, no = 0;
          for (int v = 0; v < 4; ++v) {
            if (values[ids[tet[v]]] < 0.0) in[ni++] = tet[v];
            else out_v[no++] = tet[v];
          }
          if (ni == 0 || no == 0) continue;
          auto key = [&](int a, int b) {
            std::size_t x = ids[a], y = ids[b];
            if (x > y) std::swap(x, y);
            return static_cast<EdgeKey>(x) * total + y;
          };
          Vec3 c_in = Vec3::Zero(), c_out = Vec3::Zero();
          for (int v = 0; v < ni; ++v) c_in += position(i + (in[v] & 1), j + ((in[v] >> 1) & 1), k + ((in[v] >> 2) & 1));
          for (int v = 0; v < no; ++v)
            c_out += position(i + (out_v[v] & 1), j + ((out_v[v] >> 1) & 1), k + ((out_v[v] >> 2) & 1));
          const Vec3 outward = c_out / no - c_in / ni;

          auto emit = [&](EdgeKey a, EdgeKey b, EdgeKey c) {
            const Vec3 pa = midpoint_of_key(a), pb = midpoint_of_key(b), pc = midpoint_of_key(c);
            if ((pb - pa).cross(pc - pa).dot(outward) < 0.0) std::swap(b, c);
            out.push_back({a, b, c});
          };
          if (ni == 1) {
            emit(key(in[0], out_v[0]), key(in[0], out_v[1]), key(in[0], out_v[2]));
          } else if (ni == 3) {
            emit(key(out_v[0], in[0]), key(out_v[0], in[1]), key(out_v[0], in[2]));
          } else {
            const EdgeKey e00 = key(in[0], out_v[0]), e01 = key(in[0], out_v[1]);
            const EdgeKey e11 = key(in[1], out_v[1]), e10 = key(in[1], out_v[0]);
            emit(e00, e01, e11);
            emit(e00, e11, e10);
          }
        }
      }
    }
  });

  MeshData mesh;
  std::unordered_map<EdgeKey, std::uint32_t> index;
  std::size_t tri_count = 0;
  for (const auto& slab : slabs) tri_count += slab.size();
  mesh.triangles.reserve(tri_count);
  index.reserve(tri_count);
  for (const auto& slab : slabs) {
    for (const KeyTriangle& t : slab) {
      Triangle tri;
      for (int c = 0; c < 3; ++c) {
        auto [it, inserted] = index.try_emplace(t[c], static_cast<std::uint32_t>(mesh.vertices.size()));
        if (inserted) mesh.vertices.push_back(vertex_of_key(t[c]));
        tri[c] = it->second;
      }
      mesh.triangles.push_back(tri);
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// PNG

std::vector<std::uint8_t> encode_png(int width, int height, const std::vector<std::uint8_t>& rgba) {
  if (rgba.size() != static_cast<std::size_t>(width) * height * 4) throw std::invalid_argument("RGBA buffer size mismatch");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgba.data(), 0, nullptr))
    throw std::runtime_error(std::string("PNG encoding failed: ") + image.message);
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, rgba.data(), 0, nullptr))
    throw std::runtime_error(std::string("PNG encoding failed: ") + image.message);
  bytes.resize(size);
  return bytes;
}

void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgba) {
  const auto bytes = encode_png(width, height, rgba);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace morphield
