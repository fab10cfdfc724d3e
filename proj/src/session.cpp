#include "morphield/session.hpp"

#include "morphield/grid.hpp"
#include "morphield/mesh_distance.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace morphield {

using nlohmann::json;

namespace {

constexpr char kSidecarMagic[8] = {'M', 'F', 'C', 'O', 'E', 'F', 'F', '\0'};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw SessionError("coefficient file is truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string encode_sidecar(const SplineField& field) {
  const auto coeffs = field.coefficients();
  std::string out;
  out.reserve(24 + 8 * coeffs.size());
  out.append(kSidecarMagic, sizeof(kSidecarMagic));
  put_le<std::uint32_t>(out, kSessionFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(field.spec().cells()));
  put_le<std::uint64_t>(out, coeffs.size());
  for (double c : coeffs) put_le<double>(out, c);
  return out;
}

std::vector<double> decode_sidecar(std::string_view bytes, const GridSpec& spec) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kSidecarMagic, sizeof(kSidecarMagic)) != 0)
    throw SessionError("not a coefficient file");
  std::size_t pos = sizeof(kSidecarMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kSessionFormatVersion) throw SessionError("unsupported coefficient file version");
  const auto cells = get_le<std::uint32_t>(bytes, pos);
  const auto count = get_le<std::uint64_t>(bytes, pos);
  if (static_cast<int>(cells) != spec.cells() || count != spec.vertex_count())
    throw SessionError("coefficient file does not match the session grid");
  if (bytes.size() != pos + 8 * count) throw SessionError("coefficient file has the wrong length");
  std::vector<double> coeffs(count);
  for (auto& c : coeffs) c = get_le<double>(bytes, pos);
  return coeffs;
}

json mat3_to_json(const Mat3& m) {
  // Column list: columns are the axes.
  return json::array({to_json(Vec3(m.col(0))), to_json(Vec3(m.col(1))), to_json(Vec3(m.col(2)))});
}

Mat3 mat3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw SessionError("expected three column vectors");
  Mat3 m;
  for (int c = 0; c < 3; ++c) m.col(c) = vec3_from_json(j[c]);
  return m;
}

template <class T>
T field_as(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SessionError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SessionError(std::string("field '") + key + "' has the wrong type");
  }
}

std::optional<double> optional_number(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw SessionError(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::uint64_t id_field(const json& j) {
  auto it = j.find("id");
  if (it == j.end() || !non_negative_integer(*it)) throw SessionError("field 'id' must be a non-negative integer");
  return it->get<std::uint64_t>();
}

void put_optional(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

Aabb union_box(Aabb a, const Aabb& b) {
  if (b.empty()) return a;
  a.extend(b.lo);
  a.extend(b.hi);
  return a;
}

json search_to_json(const SearchOptions& o) {
  return {{"grad_tolerance", o.grad_tolerance}, {"eigen_tolerance", o.eigen_tolerance},
          {"max_iterations", o.max_iterations}, {"max_halvings", o.max_halvings},
          {"singular_det", o.singular_det},     {"levenberg_shift", o.levenberg_shift},
          {"wander_cells", o.wander_cells},     {"dedup_cells", o.dedup_cells},
          {"boundary_band", o.boundary_band}};
}

SearchOptions search_from_json(const json& j) {
  SearchOptions o;
  o.grad_tolerance = field_as<double>(j, "grad_tolerance");
  o.eigen_tolerance = field_as<double>(j, "eigen_tolerance");
  o.max_iterations = field_as<int>(j, "max_iterations");
  o.max_halvings = field_as<int>(j, "max_halvings");
  o.singular_det = field_as<double>(j, "singular_det");
  o.levenberg_shift = field_as<double>(j, "levenberg_shift");
  o.wander_cells = field_as<double>(j, "wander_cells");
  o.dedup_cells = field_as<double>(j, "dedup_cells");
  o.boundary_band = field_as<int>(j, "boundary_band");
  return o;
}

json params_to_json(const DeformerParams& p) { return {{"mu", p.mu}, {"phi", p.phi}, {"rho", p.rho}}; }

DeformerParams params_from_json(const json& j) {
  return {field_as<double>(j, "mu"), field_as<double>(j, "phi"), field_as<double>(j, "rho")};
}

}  // namespace

// ---------------------------------------------------------------------------
// Files

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw SessionError("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& session_path) {
  auto p = session_path;
  p += ".coeff";
  return p;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto temp = path;
  temp += ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw SessionError("cannot write '" + temp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(temp);
      throw SessionError("failed writing '" + temp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) {
    std::filesystem::remove(temp);
    throw SessionError("cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SessionError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw SessionError("expected a 3-vector of numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json to_json(const Aabb& box) {
  if (box.empty()) return nullptr;
  return {{"lo", to_json(box.lo)}, {"hi", to_json(box.hi)}};
}

json to_json(const CriticalPoint& cp) {
  return {{"position", to_json(cp.position)},
          {"value", cp.value},
          {"grad_norm", cp.grad_norm},
          {"eigenvalues", to_json(cp.eigenvalues)},
          {"eigenvectors", mat3_to_json(cp.eigenvectors)},
          {"class", std::string(to_string(cp.kind))},
          {"degenerate", cp.degenerate}};
}

CriticalPoint critical_from_json(const json& j) {
  CriticalPoint cp;
  cp.position = vec3_from_json(j.at("position"));
  cp.value = field_as<double>(j, "value");
  cp.grad_norm = field_as<double>(j, "grad_norm");
  cp.eigenvalues = vec3_from_json(j.at("eigenvalues"));
  cp.eigenvectors = mat3_from_json(j.at("eigenvectors"));
  const auto kind = critical_class_from_string(field_as<std::string>(j, "class"));
  if (!kind) throw SessionError("unknown critical point class");
  cp.kind = *kind;
  cp.degenerate = field_as<bool>(j, "degenerate");
  return cp;
}

json to_json(const Deformer& d) {
  json j = {{"id", d.id},
            {"kind", std::string(to_string(d.kind))},
            {"anchor", to_json(d.anchor)},
            {"frame", mat3_to_json(d.frame)},
            {"weights", to_json(d.weights)},
            {"beta", d.beta},
            {"normal_based", d.normal_based},
            {"support_box", to_json(d.support_box())}};
  if (d.kind == DeformerKind::topology) {
    j["params"] = params_to_json(d.params);
    j["saddle"] = d.saddle ? json(*d.saddle) : json(nullptr);
    j["surface_point"] = to_json(d.surface_point);
  } else {
    j["geometry"] = {{"radius", d.geometry.radius}, {"amplitude", d.geometry.amplitude}};
    j["lateral_ratio"] = json::array({d.lateral_ratio[0], d.lateral_ratio[1]});
  }
  return j;
}

Deformer deformer_from_json(const json& j) {
  Deformer d;
  d.id = id_field(j);
  const auto kind = deformer_kind_from_string(field_as<std::string>(j, "kind"));
  if (!kind) throw SessionError("unknown deformer kind");
  d.kind = *kind;
  d.anchor = vec3_from_json(j.at("anchor"));
  d.frame = mat3_from_json(j.at("frame"));
  d.weights = vec3_from_json(j.at("weights"));
  d.beta = field_as<double>(j, "beta");
  d.normal_based = field_as<bool>(j, "normal_based");
  if (d.kind == DeformerKind::topology) {
    d.params = params_from_json(j.at("params"));
    if (!j.at("saddle").is_null()) d.saddle = field_as<std::size_t>(j, "saddle");
    d.surface_point = vec3_from_json(j.at("surface_point"));
  } else {
    const auto& g = j.at("geometry");
    d.geometry = {field_as<double>(g, "radius"), field_as<double>(g, "amplitude")};
    const auto& r = j.at("lateral_ratio");
    if (!r.is_array() || r.size() != 2) throw SessionError("lateral_ratio must have two entries");
    d.lateral_ratio = {r[0].get<double>(), r[1].get<double>()};
  }
  return d;
}

EditCommand parse_command(const json& j) {
  if (!j.is_object()) throw SessionError("command must be a JSON object");
  const auto op = field_as<std::string>(j, "op");
  if (op == "add_topology") {
    AddTopology c;
    auto it = j.find("saddle");
    if (it == j.end() || !non_negative_integer(*it)) throw SessionError("field 'saddle' must be a saddle index");
    c.saddle = it->get<std::size_t>();
    c.mu = optional_number(j, "mu");
    c.phi = optional_number(j, "phi");
    c.rho = optional_number(j, "rho");
    return c;
  }
  if (op == "add_geometry") {
    AddGeometry c;
    c.point = vec3_from_json(j.at("point"));
    const auto kind = deformer_kind_from_string(field_as<std::string>(j, "kind"));
    if (!kind || *kind == DeformerKind::topology) throw SessionError("geometry kind must be 'bulge' or 'concavity'");
    c.kind = *kind;
    c.radius = optional_number(j, "radius");
    c.amplitude = optional_number(j, "amplitude");
    return c;
  }
  if (op == "retune") {
    Retune c;
    c.id = id_field(j);
    c.mu = optional_number(j, "mu");
    c.phi = optional_number(j, "phi");
    c.rho = optional_number(j, "rho");
    c.radius = optional_number(j, "radius");
    c.amplitude = optional_number(j, "amplitude");
    return c;
  }
  if (op == "remove") return Remove{id_field(j)};
  if (op == "undo") return Undo{};
  throw SessionError("unknown op '" + op + "'");
}

json to_json(const EditCommand& command) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        json j;
        if constexpr (std::is_same_v<T, AddTopology>) {
          j = {{"op", "add_topology"}, {"saddle", c.saddle}};
          put_optional(j, "mu", c.mu);
          put_optional(j, "phi", c.phi);
          put_optional(j, "rho", c.rho);
        } else if constexpr (std::is_same_v<T, AddGeometry>) {
          j = {{"op", "add_geometry"}, {"point", to_json(c.point)}, {"kind", std::string(to_string(c.kind))}};
          put_optional(j, "radius", c.radius);
          put_optional(j, "amplitude", c.amplitude);
        } else if constexpr (std::is_same_v<T, Retune>) {
          j = {{"op", "retune"}, {"id", c.id}};
          put_optional(j, "mu", c.mu);
          put_optional(j, "phi", c.phi);
          put_optional(j, "rho", c.rho);
          put_optional(j, "radius", c.radius);
          put_optional(j, "amplitude", c.amplitude);
        } else if constexpr (std::is_same_v<T, Remove>) {
          j = {{"op", "remove"}, {"id", c.id}};
        } else {
          j = {{"op", "undo"}};
        }
        return j;
      },
      command);
}

// ---------------------------------------------------------------------------
// Session

EditSession EditSession::create(const std::filesystem::path& mesh_path, const FitOptions& options) {
  if (!std::filesystem::is_regular_file(mesh_path)) throw SessionError("no mesh file at '" + mesh_path.string() + "'", SessionError::Code::not_found);
  const std::string bytes = read_bytes(mesh_path);
  const MeshData mesh = load_mesh(mesh_path);
  return build(mesh, {mesh_path.string(), sha256_hex(bytes)}, options);
}

EditSession EditSession::from_mesh(const MeshData& mesh, std::string label, const FitOptions& options) {
  return build(mesh, {std::move(label), sha256_hex(to_obj(mesh))}, options);
}

EditSession EditSession::build(const MeshData& mesh, MeshSource source, const FitOptions& options) {
  if (mesh.empty()) throw SessionError("mesh has no triangles");
  options.params.validate();
  const GridSpec spec(options.cells);

  EditSession s;
  s.source_ = std::move(source);
  s.margin_ = options.margin;
  s.keep_coordinates_ = options.keep_coordinates;
  s.search_ = options.search;
  s.params_ = options.params;

  MeshData unit;
  if (options.keep_coordinates) {
    const Aabb box = mesh.bounds();
    if ((box.lo.array() < 0.0).any() || (box.hi.array() > 1.0).any())
      throw SessionError("mesh does not lie inside the unit cube; drop keep-coordinates to normalize it");
    unit = mesh;
  } else {
    if (!(options.margin > 0.0 && options.margin < 0.5)) throw SessionError("margin must be in (0, 0.5)");
    std::tie(unit, s.transform_) = normalize_to_unit(mesh, options.margin);
  }

  const auto watertight = check_watertight(unit);
  s.fit_.boundary_edges = watertight.boundary_edges;
  s.fit_.non_manifold_edges = watertight.non_manifold_edges;

  auto start = std::chrono::steady_clock::now();
  const MeshDistance distance(unit);
  const SdfGrid grid = sample_grid(distance, spec);
  s.fit_.sample_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  SolveReport solve = solve_coefficients_matrix_free(spec, grid.values, options.cg);
  s.fit_.solve_seconds = seconds_since(start);
  s.fit_.relative_residual = solve.relative_residual;
  s.fit_.iterations = solve.iterations;
  s.fit_.converged = solve.converged;
  s.fit_.tolerance = options.cg.tolerance;
  s.field_ = std::make_shared<const SplineField>(spec, std::move(solve.coefficients));

  start = std::chrono::steady_clock::now();
  auto search = find_critical_points(*s.field_, options.search);
  s.fit_.search_seconds = seconds_since(start);
  s.criticals_ = std::move(search.criticals);
  s.saddles_ = std::move(search.saddles);
  s.composite_ = std::make_shared<const CompositeField>(s.field_);
  return s;
}

json EditSession::saddles_json() const {
  json out = json::array();
  for (std::size_t i = 0; i < saddles_.size(); ++i) {
    json j = to_json(saddles_[i]);
    j["index"] = i;
    j["flip_beta"] = flip_threshold(saddles_[i].value);
    out.push_back(std::move(j));
  }
  return out;
}

json EditSession::deformers_json() const {
  json out = json::array();
  for (const auto& d : deformers()) out.push_back(to_json(d));
  return out;
}

json EditSession::envelope(const std::string& sidecar_name) const {
  json criticals = json::array();
  for (const auto& cp : criticals_) criticals.push_back(to_json(cp));
  const auto coeffs = field_->coefficients();
  return {
      {"format_version", kSessionFormatVersion},
      {"source", {{"path", source_.path}, {"sha256", source_.sha256}}},
      {"transform", {{"scale", transform_.scale}, {"offset", to_json(transform_.offset)}}},
      {"margin", margin_},
      {"keep_coordinates", keep_coordinates_},
      {"grid", {{"cells", spec().cells()}}},
      {"coefficients",
       {{"file", sidecar_name},
        {"count", coeffs.size()},
        {"sha256", sha256_hex(encode_sidecar(*field_))}}},
      {"fit",
       {{"relative_residual", fit_.relative_residual},
        {"iterations", fit_.iterations},
        {"converged", fit_.converged},
        {"tolerance", fit_.tolerance},
        {"boundary_edges", fit_.boundary_edges},
        {"non_manifold_edges", fit_.non_manifold_edges}}},
      {"timings",
       {{"sample_seconds", fit_.sample_seconds},
        {"solve_seconds", fit_.solve_seconds},
        {"search_seconds", fit_.search_seconds}}},
      {"search", search_to_json(search_)},
      {"criticals", std::move(criticals)},
      {"saddles", saddles_json()},
      {"params", params_to_json(params_)},
      {"deformers", deformers_json()},
      {"next_id", next_id_},
      {"revision", revision_},
  };
}

void EditSession::save(const std::filesystem::path& path) const {
  const auto sidecar = sidecar_path(path);
  write_file_atomic(sidecar, encode_sidecar(*field_));
  write_file_atomic(path, envelope(sidecar.filename().string()).dump(2) + "\n");
}

EditSession EditSession::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_bytes(path));
  } catch (const json::parse_error& e) {
    throw SessionError("session file is not valid JSON: " + std::string(e.what()));
  }
  try {
    if (field_as<int>(j, "format_version") != kSessionFormatVersion) throw SessionError("unsupported session format");
    EditSession s;
    s.source_ = {field_as<std::string>(j.at("source"), "path"), field_as<std::string>(j.at("source"), "sha256")};
    s.transform_.scale = field_as<double>(j.at("transform"), "scale");
    s.transform_.offset = vec3_from_json(j.at("transform").at("offset"));
    s.margin_ = field_as<double>(j, "margin");
    s.keep_coordinates_ = field_as<bool>(j, "keep_coordinates");
    const GridSpec spec(field_as<int>(j.at("grid"), "cells"));

    const auto& c = j.at("coefficients");
    const auto sidecar = path.parent_path() / field_as<std::string>(c, "file");
    const std::string blob = read_bytes(sidecar);
    if (sha256_hex(blob) != field_as<std::string>(c, "sha256"))
      throw SessionError("coefficient file does not match the session (hash mismatch)");
    s.field_ = std::make_shared<const SplineField>(spec, decode_sidecar(blob, spec));

    const auto& fit = j.at("fit");
    s.fit_.relative_residual = field_as<double>(fit, "relative_residual");
    s.fit_.iterations = field_as<int>(fit, "iterations");
    s.fit_.converged = field_as<bool>(fit, "converged");
    s.fit_.tolerance = field_as<double>(fit, "tolerance");
    s.fit_.boundary_edges = field_as<std::size_t>(fit, "boundary_edges");
    s.fit_.non_manifold_edges = field_as<std::size_t>(fit, "non_manifold_edges");
    const auto& t = j.at("timings");
    s.fit_.sample_seconds = field_as<double>(t, "sample_seconds");
    s.fit_.solve_seconds = field_as<double>(t, "solve_seconds");
    s.fit_.search_seconds = field_as<double>(t, "search_seconds");
    s.search_ = search_from_json(j.at("search"));

    for (const auto& cp : j.at("criticals")) s.criticals_.push_back(critical_from_json(cp));
    for (const auto& cp : j.at("saddles")) s.saddles_.push_back(critical_from_json(cp));
    s.params_ = params_from_json(j.at("params"));
    std::vector<Deformer> deformers;
    for (const auto& d : j.at("deformers")) deformers.push_back(deformer_from_json(d));
    for (const auto& d : deformers)
      if (d.saddle && *d.saddle >= s.saddles_.size()) throw SessionError("deformer references a missing saddle");
    s.composite_ = std::make_shared<const CompositeField>(s.field_, std::move(deformers));
    s.next_id_ = field_as<std::uint64_t>(j, "next_id");
    s.revision_ = field_as<std::uint64_t>(j, "revision");
    return s;
  } catch (const json::exception& e) {
    throw SessionError("malformed session file: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw SessionError("malformed session file: " + std::string(e.what()));
  }
}

EditResult EditSession::apply(const EditCommand& command) {
  return std::visit(
      [this](const auto& c) -> EditResult {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, AddTopology>) return add_topology(c);
        else if constexpr (std::is_same_v<T, AddGeometry>) return add_geometry(c);
        else if constexpr (std::is_same_v<T, Retune>) return retune(c);
        else if constexpr (std::is_same_v<T, Remove>) return remove(c);
        else return undo();
      },
      command);
}

EditResult EditSession::commit(std::vector<Deformer> deformers, std::uint64_t id, const Aabb& changed, bool record) {
  if (record) {
    history_.push_back({composite_->deformers(), id, changed});
    if (history_.size() > kHistoryDepth) history_.pop_front();
  }
  composite_ = std::make_shared<const CompositeField>(field_, std::move(deformers));
  ++revision_;
  return {revision_, changed, id};
}

EditResult EditSession::add_topology(const AddTopology& cmd) {
  if (cmd.saddle >= saddles_.size())
    throw SessionError("no saddle with index " + std::to_string(cmd.saddle), SessionError::Code::not_found);
  DeformerParams p = params_;
  if (cmd.mu) p.mu = *cmd.mu;
  if (cmd.phi) p.phi = *cmd.phi;
  if (cmd.rho) p.rho = *cmd.rho;
  p.validate();
  // Built against the base field so a retune reproduces the same frame and
  // weights regardless of the rest of the stack.
  Deformer d = build_topology_deformer(*field_, saddles_[cmd.saddle], p, next_id_);
  d.saddle = cmd.saddle;
  const Aabb box = d.support_box();
  auto deformers = composite_->deformers();
  deformers.push_back(std::move(d));
  const auto id = next_id_++;
  return commit(std::move(deformers), id, box, true);
}

EditResult EditSession::add_geometry(const AddGeometry& cmd) {
  GeometryParams g;
  if (cmd.radius) g.radius = *cmd.radius;
  if (cmd.amplitude) g.amplitude = *cmd.amplitude;
  g.validate();
  if (!cmd.point.allFinite()) throw SessionError("point must be finite");
  // Snap picks that land slightly off the current surface.
  Vec3 p = cmd.point;
  if (!(std::abs(composite_->value(p)) <= 1e-4)) p = project_to_surface(*composite_, p, Mat3::Identity()).point;
  Deformer d = build_geometry_deformer(*composite_, p, cmd.kind, g, next_id_);
  const Aabb box = d.support_box();
  auto deformers = composite_->deformers();
  deformers.push_back(std::move(d));
  const auto id = next_id_++;
  return commit(std::move(deformers), id, box, true);
}

EditResult EditSession::retune(const Retune& cmd) {
  const Deformer* old = composite_->find(cmd.id);
  if (!old) throw SessionError("no deformer with id " + std::to_string(cmd.id), SessionError::Code::not_found);
  Deformer updated;
  if (old->kind == DeformerKind::topology) {
    if (cmd.radius || cmd.amplitude) throw SessionError("topology deformers take mu, phi and rho");
    DeformerParams p = old->params;
    if (cmd.mu) p.mu = *cmd.mu;
    if (cmd.phi) p.phi = *cmd.phi;
    if (cmd.rho) p.rho = *cmd.rho;
    p.validate();
    if (!old->saddle) throw SessionError("deformer has no saddle to rebuild from");
    updated = build_topology_deformer(*field_, saddles_.at(*old->saddle), p, old->id);
    updated.saddle = old->saddle;
  } else {
    if (cmd.mu || cmd.phi || cmd.rho) throw SessionError("geometry deformers take radius and amplitude");
    GeometryParams g = old->geometry;
    if (cmd.radius) g.radius = *cmd.radius;
    if (cmd.amplitude) g.amplitude = *cmd.amplitude;
    g.validate();
    updated = retune_geometry(*old, g, spec().spacing());
  }
  const Aabb box = union_box(old->support_box(), updated.support_box());
  auto deformers = composite_->deformers();
  for (auto& d : deformers)
    if (d.id == cmd.id) d = std::move(updated);
  return commit(std::move(deformers), cmd.id, box, true);
}

EditResult EditSession::remove(const Remove& cmd) {
  const Deformer* old = composite_->find(cmd.id);
  if (!old) throw SessionError("no deformer with id " + std::to_string(cmd.id), SessionError::Code::not_found);
  const Aabb box = old->support_box();
  auto deformers = composite_->deformers();
  std::erase_if(deformers, [&](const Deformer& d) { return d.id == cmd.id; });
  return commit(std::move(deformers), cmd.id, box, true);
}

EditResult EditSession::undo() {
  if (history_.empty()) throw SessionError("nothing to undo", SessionError::Code::conflict);
  HistoryEntry entry = std::move(history_.back());
  history_.pop_back();
  return commit(std::move(entry.deformers), entry.id, entry.changed, false);
}

}  // namespace morphield
