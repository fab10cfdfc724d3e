#include "morphield/mesh.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

namespace morphield {

Aabb MeshData::bounds() const {
  Aabb box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MeshError("cannot open mesh file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw MeshError("failed reading mesh file '" + path.string() + "'");
  return std::move(buffer).str();
}

std::string lowercase_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

double parse_double(std::string_view token, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw MeshError("line " + std::to_string(line) + ": bad number '" + std::string(token) + "'");
  return value;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

void require_nonempty(const MeshData& mesh) {
  if (mesh.triangles.empty() || mesh.vertices.empty()) throw MeshError("mesh has no triangles");
}

}  // namespace

MeshData prune_unreferenced(const MeshData& mesh) {
  constexpr std::uint32_t kUnused = ~std::uint32_t{0};
  std::vector<std::uint32_t> remap(mesh.vertices.size(), kUnused);
  for (const auto& t : mesh.triangles)
    for (auto v : t) remap[v] = 0;

  MeshData out;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (remap[i] == kUnused) continue;
    remap[i] = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[i]);
  }
  out.triangles.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) out.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
  return out;
}

MeshData parse_obj(const std::string& text) {
  MeshData mesh;
  std::size_t face_index = 0;
  std::size_t line_number = 0;
  std::istringstream in(text);
  std::string line;
  std::vector<std::array<std::int64_t, 3>> raw_faces;
  std::vector<std::size_t> face_lines;
  while (std::getline(in, line)) {
    ++line_number;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].starts_with('#')) continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4)
        throw MeshError("line " + std::to_string(line_number) + ": vertex needs 3 coordinates");
      mesh.vertices.emplace_back(parse_double(tokens[1], line_number), parse_double(tokens[2], line_number),
                                 parse_double(tokens[3], line_number));
    } else if (tokens[0] == "f") {
      const std::size_t corners = tokens.size() - 1;
      if (corners != 3)
        throw MeshError("face " + std::to_string(face_index) + " (line " + std::to_string(line_number) + ") has " +
                        std::to_string(corners) + " vertices; only triangles are supported");
      std::array<std::int64_t, 3> face{};
      for (int c = 0; c < 3; ++c) {
        std::string_view token = tokens[c + 1];
        token = token.substr(0, token.find('/'));
        std::int64_t index = 0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), index);
        if (ec != std::errc() || ptr != token.data() + token.size() || index == 0)
          throw MeshError("face " + std::to_string(face_index) + " (line " + std::to_string(line_number) +
                          "): bad vertex index '" + std::string(tokens[c + 1]) + "'");
        // Negative indices are relative to the vertices read so far.
        face[c] = index > 0 ? index - 1 : static_cast<std::int64_t>(mesh.vertices.size()) + index;
      }
      raw_faces.push_back(face);
      face_lines.push_back(line_number);
      ++face_index;
    }
  }

  const auto vertex_count = static_cast<std::int64_t>(mesh.vertices.size());
  mesh.triangles.reserve(raw_faces.size());
  for (std::size_t f = 0; f < raw_faces.size(); ++f) {
    Triangle t{};
    for (int c = 0; c < 3; ++c) {
      if (raw_faces[f][c] < 0 || raw_faces[f][c] >= vertex_count)
        throw MeshError("face " + std::to_string(f) + " (line " + std::to_string(face_lines[f]) +
                        "): vertex index out of range");
      t[c] = static_cast<std::uint32_t>(raw_faces[f][c]);
    }
    mesh.triangles.push_back(t);
  }
  require_nonempty(mesh);
  return prune_unreferenced(mesh);
}

namespace {

struct WeldKeyHash {
  std::size_t operator()(const std::array<double, 3>& k) const {
    std::size_t h = 1469598103934665603ull;
    for (double d : k) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
    return h;
  }
};

class Welder {
 public:
  std::uint32_t add(MeshData& mesh, const Vec3& p) {
    // +0.0 and -0.0 weld together.
    const std::array<double, 3> key{p.x() + 0.0, p.y() + 0.0, p.z() + 0.0};
    auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted) mesh.vertices.push_back(p);
    return it->second;
  }

 private:
  std::unordered_map<std::array<double, 3>, std::uint32_t, WeldKeyHash> index_;
};

bool looks_binary_stl(const std::string& bytes) {
  if (bytes.size() < 84) return false;
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 80, 4);
  return 84 + 50ull * count == bytes.size();
}

}  // namespace

MeshData parse_stl(const std::string& bytes) {
  MeshData mesh;
  Welder welder;
  if (looks_binary_stl(bytes)) {
    std::uint32_t count = 0;
    std::memcpy(&count, bytes.data() + 80, 4);
    const char* p = bytes.data() + 84;
    for (std::uint32_t f = 0; f < count; ++f, p += 50) {
      Triangle t{};
      for (int c = 0; c < 3; ++c) {
        float xyz[3];
        std::memcpy(xyz, p + 12 + 12 * c, 12);
        t[c] = welder.add(mesh, Vec3(xyz[0], xyz[1], xyz[2]));
      }
      mesh.triangles.push_back(t);
    }
  } else {
    if (bytes.rfind("solid", 0) != 0) throw MeshError("STL is neither valid binary nor ASCII");
    std::istringstream in(bytes);
    std::string line;
    std::size_t line_number = 0;
    std::vector<std::uint32_t> loop;
    std::size_t face_index = 0;
    while (std::getline(in, line)) {
      ++line_number;
      const auto tokens = split_ws(line);
      if (tokens.empty()) continue;
      if (tokens[0] == "outer") {
        loop.clear();
      } else if (tokens[0] == "vertex") {
        if (tokens.size() < 4)
          throw MeshError("line " + std::to_string(line_number) + ": vertex needs 3 coordinates");
        loop.push_back(welder.add(mesh, Vec3(parse_double(tokens[1], line_number),
                                             parse_double(tokens[2], line_number),
                                             parse_double(tokens[3], line_number))));
      } else if (tokens[0] == "endloop") {
        if (loop.size() != 3)
          throw MeshError("face " + std::to_string(face_index) + " (line " + std::to_string(line_number) +
                          ") has " + std::to_string(loop.size()) + " vertices; only triangles are supported");
        mesh.triangles.push_back({loop[0], loop[1], loop[2]});
        ++face_index;
      }
    }
  }
  require_nonempty(mesh);
  return mesh;
}

MeshData load_mesh(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MeshError("mesh file '" + path.string() + "' does not exist");
  const std::string ext = lowercase_extension(path);
  const std::string bytes = read_file(path);
  if (ext == ".obj") return parse_obj(bytes);
  if (ext == ".stl") return parse_stl(bytes);
  throw MeshError("unsupported mesh format '" + ext + "' (expected .obj or .stl)");
}

std::string to_obj(const MeshData& mesh, const NormalizationTransform* to_model) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) {
    const Vec3 p = to_model ? to_model->invert(v) : v;
    out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  return std::move(out).str();
}

void save_obj(const MeshData& mesh, const std::filesystem::path& path, const NormalizationTransform* to_model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot write '" + path.string() + "'");
  out << to_obj(mesh, to_model);
  if (!out) throw MeshError("failed writing '" + path.string() + "'");
}

std::pair<MeshData, NormalizationTransform> normalize_to_unit(const MeshData& mesh, double margin) {
  require_nonempty(mesh);
  if (!(margin > 0.0 && margin < 0.5)) throw MeshError("normalization margin must lie in (0, 0.5)");
  const Aabb box = mesh.bounds();
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0) || !std::isfinite(longest)) throw MeshError("degenerate mesh: zero-extent bounding box");

  NormalizationTransform transform;
  transform.scale = (1.0 - 2.0 * margin) / longest;
  transform.offset = Vec3::Constant(0.5) - transform.scale * box.center();
  return {transformed(mesh, transform), transform};
}

MeshData transformed(const MeshData& mesh, const NormalizationTransform& transform) {
  MeshData out = mesh;
  for (auto& v : out.vertices) v = transform.apply(v);
  return out;
}

MeshData flipped(const MeshData& mesh) {
  MeshData out = mesh;
  for (auto& t : out.triangles) std::swap(t[1], t[2]);
  return out;
}

WatertightReport check_watertight(const MeshData& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      const auto a = t[e], b = t[(e + 1) % 3];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  WatertightReport report;
  for (const auto& [edge, count] : uses) {
    if (count == 1) ++report.boundary_edges;
    if (count > 2) ++report.non_manifold_edges;
  }
  return report;
}

}  // namespace morphield
