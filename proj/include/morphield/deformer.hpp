#pragma once

#include "morphield/critical_search.hpp"
#include "morphield/field.hpp"
#include "morphield/spline_field.hpp"
#include "morphield/types.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace morphield {

enum class DeformerKind { topology, bulge, concavity };

std::string_view to_string(DeformerKind kind);
std::optional<DeformerKind> deformer_kind_from_string(std::string_view name);

class DeformerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeformerParams {
  double mu = 2.0;   // normal-axis width, in units of |F(s)|
  double phi = 4.0;  // lateral width, in cells
  double rho = 5.0;  // amplitude factor

  // Throws DeformerError unless mu > 0, phi > 0, rho >= 0 (all finite).
  void validate() const;
  bool operator==(const DeformerParams&) const = default;
};

// Geometry edits: user radius for the normal axis and amplitude in cells.
struct GeometryParams {
  double radius = 0.0;     // 0 selects 4 cells
  double amplitude = 5.0;  // rho_geo

  void validate() const;
  bool operator==(const GeometryParams&) const = default;
};

// beta * B(W^-1 Q^T (q - s)). Zero outside the oriented box
// |W^-1 Q^T (q - s)|_inf < 2.
struct Deformer {
  std::uint64_t id = 0;
  DeformerKind kind = DeformerKind::topology;
  Vec3 anchor = Vec3::Zero();
  Mat3 frame = Mat3::Identity();  // columns are the first, second, third axes
  Vec3 weights = Vec3::Ones();
  double beta = 0.0;
  bool normal_based = false;  // geometry edit fell back to the gradient direction

  // Provenance needed to rebuild on retune.
  DeformerParams params;
  GeometryParams geometry;
  std::optional<std::size_t> saddle;  // topology: index into the saddle list
  Vec3 surface_point = Vec3::Zero();  // topology: projected point s'
  std::array<double, 2> lateral_ratio{1.0, 1.0};  // geometry: W2, W3 in units of radius before clamping

  Aabb support_box() const;
  Vec3 local(const Vec3& q) const;  // W^-1 Q^T (q - s)
  bool in_support(const Vec3& q) const;
  double value(const Vec3& q) const;
  // Value, gradient and Hessian of this term alone.
  FieldSample sample(const Vec3& q) const;
};

// F_new = F + sum of deformers, summed in ascending id order. Immutable:
// edits build a new CompositeField that shares the base.
class CompositeField final : public ImplicitField {
 public:
  explicit CompositeField(std::shared_ptr<const SplineField> base, std::vector<Deformer> deformers = {});

  const SplineField& base() const { return *base_; }
  const std::shared_ptr<const SplineField>& base_ptr() const { return base_; }
  const std::vector<Deformer>& deformers() const { return deformers_; }
  const Deformer* find(std::uint64_t id) const;

  double value(const Vec3& q) const override;
  FieldSample sample(const Vec3& q) const override;
  double spacing() const override { return base_->spacing(); }

  // Deformers whose support box intersects the segment o + t d, t in [t0, t1].
  // Appends to `out` (cleared first).
  void deformers_on_segment(const Vec3& origin, const Vec3& direction, double t0, double t1,
                            std::vector<std::size_t>& out) const;
  // Evaluation restricted to a subset of deformers (indices ascending).
  double value_subset(const Vec3& q, std::span<const std::size_t> subset) const;
  FieldSample sample_subset(const Vec3& q, std::span<const std::size_t> subset) const;

 private:
  std::shared_ptr<const SplineField> base_;
  std::vector<Deformer> deformers_;
  std::vector<Aabb> boxes_;
};

struct ProjectionResult {
  Vec3 point = Vec3::Zero();
  int iterations = 0;
  bool used_fallback = false;
};

struct ProjectionOptions {
  double tolerance = 1e-6;
  int max_iterations = 50;
  int max_halvings = 30;
  double min_gradient = 1e-6;
  double march_step_cells = 0.125;
  double march_limit = 1.0;
};

// Damped gradient flow toward F = 0. Fails (nullopt) when the gradient
// vanishes or no halving reduces |F|.
std::optional<ProjectionResult> project_by_gradient_flow(const ImplicitField& field, const Vec3& s,
                                                         const ProjectionOptions& options = {});

// March from s along +-each column of `directions` until F changes sign,
// then bisect. The nearest crossing wins; ties go to the lower column, then
// the positive direction.
std::optional<ProjectionResult> project_by_ray_search(const ImplicitField& field, const Vec3& s, const Mat3& directions,
                                                      const ProjectionOptions& options = {});

// Gradient flow, falling back to the ray search along the eigenvectors.
// Throws DeformerError if both fail.
ProjectionResult project_to_surface(const ImplicitField& field, const Vec3& s, const Mat3& directions,
                                    const ProjectionOptions& options = {});

struct FrameSelection {
  Mat3 frame = Mat3::Identity();
  std::array<int, 3> order{0, 1, 2};  // eigen index used for each axis
  Vec3 eigenvalues = Vec3::Zero();     // in axis order
};

FrameSelection select_frame_topology(const CriticalPoint& cp, const Vec3& surface_point);

Vec3 default_weights_topology(double value_at_saddle, const Vec3& axis_eigenvalues, double spacing,
                              const DeformerParams& params);

// Clamp range for all weights.
double min_weight(double spacing);
constexpr double kMaxWeight = 0.5;

Deformer build_topology_deformer(const ImplicitField& field, const CriticalPoint& cp, const DeformerParams& params,
                                 std::uint64_t id = 0);

// beta at which the deformer value at s cancels F(s).
double flip_threshold(double value_at_anchor);
double flip_threshold(const ImplicitField& field, const Vec3& s);

Deformer build_geometry_deformer(const ImplicitField& field, const Vec3& p, DeformerKind kind,
                                 const GeometryParams& params, std::uint64_t id = 0);

// Rebuild a geometry deformer with new params, keeping its frame and
// curvature ratios.
Deformer retune_geometry(const Deformer& deformer, const GeometryParams& params, double spacing);

}  // namespace morphield
