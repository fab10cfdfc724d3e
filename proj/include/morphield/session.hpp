#pragma once

#include "morphield/critical_search.hpp"
#include "morphield/deformer.hpp"
#include "morphield/mesh.hpp"
#include "morphield/spline_field.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace morphield {

inline constexpr int kSessionFormatVersion = 1;
inline constexpr std::size_t kHistoryDepth = 256;

class SessionError : public std::runtime_error {
 public:
  enum class Code { invalid, not_found, conflict };
  explicit SessionError(const std::string& message, Code code = Code::invalid)
      : std::runtime_error(message), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct FitOptions {
  int cells = 64;
  double margin = 0.1;
  // Identity transform; the mesh must already lie inside [0,1]^3.
  bool keep_coordinates = false;
  CgOptions cg;
  SearchOptions search;
  DeformerParams params;  // defaults for new topology deformers
};

struct FitReport {
  double relative_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  double tolerance = 0.0;
  std::size_t boundary_edges = 0;
  std::size_t non_manifold_edges = 0;
  double sample_seconds = 0.0;
  double solve_seconds = 0.0;
  double search_seconds = 0.0;
};

struct MeshSource {
  std::string path;    // as given, or a scene label
  std::string sha256;  // hex digest of the file bytes (or of the OBJ text for generated meshes)
};

// Edit commands. Missing parameters fall back to the session defaults
// (add) or the deformer's current values (retune).
struct AddTopology {
  std::size_t saddle = 0;
  std::optional<double> mu, phi, rho;
};
struct AddGeometry {
  Vec3 point = Vec3::Zero();
  DeformerKind kind = DeformerKind::bulge;
  std::optional<double> radius, amplitude;
};
struct Retune {
  std::uint64_t id = 0;
  std::optional<double> mu, phi, rho;        // topology
  std::optional<double> radius, amplitude;  // geometry
};
struct Remove {
  std::uint64_t id = 0;
};
struct Undo {};
using EditCommand = std::variant<AddTopology, AddGeometry, Retune, Remove, Undo>;

// Throws SessionError on unknown ops, missing fields or wrong types.
EditCommand parse_command(const nlohmann::json& j);
nlohmann::json to_json(const EditCommand& command);

struct EditResult {
  std::uint64_t revision = 0;
  Aabb changed;                    // union of old and new support boxes
  std::optional<std::uint64_t> id;  // deformer touched (none for an undo of nothing)
};

nlohmann::json to_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Aabb& box);
nlohmann::json to_json(const CriticalPoint& cp);
CriticalPoint critical_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Deformer& d);
Deformer deformer_from_json(const nlohmann::json& j);

// Fitted field, saddle list and deformer stack. The field and the saddle
// list never change after creation; edits replace the composite snapshot.
// Not thread-safe; the service serializes access.
class EditSession {
 public:
  // Loads, normalizes, samples, fits and searches. Nothing is written.
  static EditSession create(const std::filesystem::path& mesh_path, const FitOptions& options);
  static EditSession from_mesh(const MeshData& mesh, std::string label, const FitOptions& options);
  static EditSession load(const std::filesystem::path& path);

  // Writes `<path>.coeff` then `path`, each through a temporary file and a
  // rename.
  void save(const std::filesystem::path& path) const;
  // Envelope JSON (coefficients live in the sidecar).
  nlohmann::json envelope(const std::string& sidecar_name) const;

  const MeshSource& source() const { return source_; }
  const NormalizationTransform& transform() const { return transform_; }
  double margin() const { return margin_; }
  bool keep_coordinates() const { return keep_coordinates_; }
  const GridSpec& spec() const { return field_->spec(); }
  const std::shared_ptr<const SplineField>& field() const { return field_; }
  const std::vector<CriticalPoint>& criticals() const { return criticals_; }
  const std::vector<CriticalPoint>& saddles() const { return saddles_; }
  const SearchOptions& search_options() const { return search_; }
  const FitReport& fit_report() const { return fit_; }
  const DeformerParams& params() const { return params_; }
  std::uint64_t revision() const { return revision_; }
  std::uint64_t next_id() const { return next_id_; }
  std::size_t history_size() const { return history_.size(); }
  const std::vector<Deformer>& deformers() const { return composite_->deformers(); }
  std::shared_ptr<const CompositeField> composite() const { return composite_; }
  // Saddle list as stored in the session file, with list indices and the
  // beta at which a deformer at each saddle cancels F(s).
  nlohmann::json saddles_json() const;
  nlohmann::json deformers_json() const;

  // Applies one command. On error the session is unchanged.
  EditResult apply(const EditCommand& command);

 private:
  EditSession() = default;
  static EditSession build(const MeshData& mesh, MeshSource source, const FitOptions& options);
  struct HistoryEntry {
    std::vector<Deformer> deformers;
    std::uint64_t id = 0;
    Aabb changed;
  };
  EditResult commit(std::vector<Deformer> deformers, std::uint64_t id, const Aabb& changed, bool record);
  EditResult add_topology(const AddTopology& cmd);
  EditResult add_geometry(const AddGeometry& cmd);
  EditResult retune(const Retune& cmd);
  EditResult remove(const Remove& cmd);
  EditResult undo();

  MeshSource source_;
  NormalizationTransform transform_;
  double margin_ = 0.1;
  bool keep_coordinates_ = false;
  std::shared_ptr<const SplineField> field_;
  std::vector<CriticalPoint> criticals_;
  std::vector<CriticalPoint> saddles_;
  SearchOptions search_;
  FitReport fit_;
  DeformerParams params_;
  std::shared_ptr<const CompositeField> composite_;
  std::uint64_t revision_ = 0;
  std::uint64_t next_id_ = 1;
  std::deque<HistoryEntry> history_;
};

std::string sha256_hex(std::string_view bytes);
std::filesystem::path sidecar_path(const std::filesystem::path& session_path);
// Writes bytes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_bytes(const std::filesystem::path& path);

}  // namespace morphield
