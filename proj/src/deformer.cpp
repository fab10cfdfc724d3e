#include "morphield/deformer.hpp"

#include "morphield/bspline.hpp"
#include "morphield/sym_eigen.hpp"

#include <algorithm>
#include <cmath>

namespace morphield {

std::string_view to_string(DeformerKind kind) {
  switch (kind) {
    case DeformerKind::topology: return "topology";
    case DeformerKind::bulge: return "bulge";
    case DeformerKind::concavity: return "concavity";
  }
  return "unknown";
}

std::optional<DeformerKind> deformer_kind_from_string(std::string_view name) {
  for (auto kind : {DeformerKind::topology, DeformerKind::bulge, DeformerKind::concavity})
    if (to_string(kind) == name) return kind;
  return std::nullopt;
}

void DeformerParams::validate() const {
  if (!std::isfinite(mu) || mu <= 0.0) throw DeformerError("mu must be positive");
  if (!std::isfinite(phi) || phi <= 0.0) throw DeformerError("phi must be positive");
  if (!std::isfinite(rho) || rho < 0.0) throw DeformerError("rho must be non-negative");
}

void GeometryParams::validate() const {
  if (!std::isfinite(radius) || radius < 0.0) throw DeformerError("radius must be non-negative");
  if (!std::isfinite(amplitude) || amplitude < 0.0) throw DeformerError("amplitude must be non-negative");
}

// ---------------------------------------------------------------------------
// Deformer

Aabb Deformer::support_box() const {
  Aabb box;
  const Vec3 half = 2.0 * (frame.cwiseAbs() * weights);
  box.lo = anchor - half;
  box.hi = anchor + half;
  return box;
}

Vec3 Deformer::local(const Vec3& q) const { return (frame.transpose() * (q - anchor)).cwiseQuotient(weights); }

bool Deformer::in_support(const Vec3& q) const { return local(q).lpNorm<Eigen::Infinity>() < 2.0; }

double Deformer::value(const Vec3& q) const {
  const Vec3 u = local(q);
  return beta * (bspline_b(u.x()) * bspline_b(u.y()) * bspline_b(u.z()));
}

FieldSample Deformer::sample(const Vec3& q) const {
  const Vec3 u = local(q);
  const double b0 = bspline_b(u.x()), b1 = bspline_b(u.y()), b2 = bspline_b(u.z());
  const double d0 = bspline_b_d1(u.x()), d1 = bspline_b_d1(u.y()), d2 = bspline_b_d1(u.z());
  const double s0 = bspline_b_d2(u.x()), s1 = bspline_b_d2(u.y()), s2 = bspline_b_d2(u.z());

  FieldSample out;
  out.value = beta * (b0 * b1 * b2);
  out.extrapolated = (q.array() < 0.0).any() || (q.array() > 1.0).any();
  const Vec3 inv = weights.cwiseInverse();
  const Vec3 grad_u(d0 * b1 * b2, b0 * d1 * b2, b0 * b1 * d2);
  Mat3 hess_u;
  hess_u << s0 * b1 * b2, d0 * d1 * b2, d0 * b1 * d2,  //
      d0 * d1 * b2, b0 * s1 * b2, b0 * d1 * d2,        //
      d0 * b1 * d2, b0 * d1 * d2, b0 * b1 * s2;
  const Mat3 m = frame * inv.asDiagonal();
  out.gradient = beta * (m * grad_u);
  Mat3 h = beta * (m * hess_u * m.transpose());
  out.hessian = 0.5 * (h + h.transpose());
  return out;
}

// ---------------------------------------------------------------------------
// Composite

CompositeField::CompositeField(std::shared_ptr<const SplineField> base, std::vector<Deformer> deformers)
    : base_(std::move(base)), deformers_(std::move(deformers)) {
  if (!base_) throw std::invalid_argument("composite field needs a base field");
  std::sort(deformers_.begin(), deformers_.end(), [](const Deformer& a, const Deformer& b) { return a.id < b.id; });
  boxes_.reserve(deformers_.size());
  for (const Deformer& d : deformers_) boxes_.push_back(d.support_box());
}

const Deformer* CompositeField::find(std::uint64_t id) const {
  for (const Deformer& d : deformers_)
    if (d.id == id) return &d;
  return nullptr;
}

double CompositeField::value(const Vec3& q) const {
  double v = base_->value(q);
  for (std::size_t i = 0; i < deformers_.size(); ++i)
    if (boxes_[i].contains(q) && deformers_[i].in_support(q)) v += deformers_[i].value(q);
  return v;
}

FieldSample CompositeField::sample(const Vec3& q) const {
  FieldSample out = base_->sample(q);
  for (std::size_t i = 0; i < deformers_.size(); ++i) {
    if (!boxes_[i].contains(q) || !deformers_[i].in_support(q)) continue;
    const FieldSample d = deformers_[i].sample(q);
    out.value += d.value;
    out.gradient += d.gradient;
    out.hessian += d.hessian;
  }
  return out;
}

void CompositeField::deformers_on_segment(const Vec3& origin, const Vec3& direction, double t0, double t1,
                                          std::vector<std::size_t>& hits) const {
  hits.clear();
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    double lo = t0, hi = t1;
    bool overlap = true;
    for (int a = 0; a < 3 && overlap; ++a) {
      if (direction[a] == 0.0) {
        overlap = origin[a] >= boxes_[i].lo[a] && origin[a] <= boxes_[i].hi[a];
        continue;
      }
      double ta = (boxes_[i].lo[a] - origin[a]) / direction[a];
      double tb = (boxes_[i].hi[a] - origin[a]) / direction[a];
      if (ta > tb) std::swap(ta, tb);
      lo = std::max(lo, ta);
      hi = std::min(hi, tb);
      overlap = lo <= hi;
    }
    if (overlap) hits.push_back(i);
  }
}

double CompositeField::value_subset(const Vec3& q, std::span<const std::size_t> subset) const {
  double v = base_->value(q);
  for (std::size_t i : subset)
    if (boxes_[i].contains(q) && deformers_[i].in_support(q)) v += deformers_[i].value(q);
  return v;
}

FieldSample CompositeField::sample_subset(const Vec3& q, std::span<const std::size_t> subset) const {
  FieldSample out = base_->sample(q);
  for (std::size_t i : subset) {
    if (!boxes_[i].contains(q) || !deformers_[i].in_support(q)) continue;
    const FieldSample d = deformers_[i].sample(q);
    out.value += d.value;
    out.gradient += d.gradient;
    out.hessian += d.hessian;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projection onto the zero level set

std::optional<ProjectionResult> project_by_gradient_flow(const ImplicitField& field, const Vec3& s,
                                                         const ProjectionOptions& options) {
  Vec3 q = s;
  double f = field.value(q);
  if (std::abs(f) <= options.tolerance) return ProjectionResult{q, 0, false};
  for (int it = 1; it <= options.max_iterations; ++it) {
    const FieldSample sample = field.sample(q);
    const double g2 = sample.gradient.squaredNorm();
    if (!(std::sqrt(g2) >= options.min_gradient)) return std::nullopt;
    const Vec3 step = (f / g2) * sample.gradient;
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      const Vec3 candidate = q - t * step;
      const double fc = field.value(candidate);
      if (std::abs(fc) < std::abs(f)) {
        q = candidate;
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) return std::nullopt;
    if (std::abs(f) <= options.tolerance) return ProjectionResult{q, it, false};
  }
  return std::nullopt;
}

std::optional<ProjectionResult> project_by_ray_search(const ImplicitField& field, const Vec3& s, const Mat3& directions,
                                                      const ProjectionOptions& options) {
  const double f0 = field.value(s);
  if (std::abs(f0) <= options.tolerance) return ProjectionResult{s, 0, true};
  const double step = options.march_step_cells * field.spacing();
  const auto max_steps = static_cast<int>(std::ceil(options.march_limit / step));

  std::optional<ProjectionResult> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 3; ++c) {
    for (double sign : {1.0, -1.0}) {
      const Vec3 d = sign * directions.col(c).normalized();
      double t_prev = 0.0;
      for (int k = 1; k <= max_steps; ++k) {
        const double t = k * step;
        if (t >= best_t) break;
        const Vec3 q = s + t * d;
        if ((q.array() < 0.0).any() || (q.array() > 1.0).any()) break;
        const double f = field.value(q);
        if ((f < 0.0) != (f0 < 0.0) || f == 0.0) {
          double lo = t_prev, hi = t;
          Vec3 x = q;
          int iterations = 0;
          for (; iterations < 200; ++iterations) {
            const double mid = 0.5 * (lo + hi);
            x = s + mid * d;
            const double fm = field.value(x);
            if (std::abs(fm) <= options.tolerance) break;
            if ((fm < 0.0) == (f0 < 0.0)) lo = mid;
            else hi = mid;
            if (hi - lo <= 1e-15) break;
          }
          const double t_hit = (x - s).norm();
          if (t_hit < best_t) {
            best_t = t_hit;
            best = ProjectionResult{x, iterations, true};
          }
          break;
        }
        t_prev = t;
      }
    }
  }
  return best;
}

ProjectionResult project_to_surface(const ImplicitField& field, const Vec3& s, const Mat3& directions,
                                    const ProjectionOptions& options) {
  if (auto flow = project_by_gradient_flow(field, s, options)) return *flow;
  if (auto ray = project_by_ray_search(field, s, directions, options)) return *ray;
  throw DeformerError("could not project the point onto the surface");
}

// ---------------------------------------------------------------------------
// Topology deformers

double min_weight(double spacing) { return 0.5 * spacing; }

FrameSelection select_frame_topology(const CriticalPoint& cp, const Vec3& surface_point) {
  FrameSelection out;
  const Vec3 offset = surface_point - cp.position;
  const double length = offset.norm();

  int first = 0;
  if (length > 0.0) {
    const Vec3 dir = offset / length;
    double best = std::abs(cp.eigenvectors.col(0).dot(dir));
    for (int c = 1; c < 3; ++c) {
      const double cosine = std::abs(cp.eigenvectors.col(c).dot(dir));
      if (cosine > best + 1e-9) {
        best = cosine;
        first = c;
      }
    }
  }
  Vec3 axis1 = cp.eigenvectors.col(first);
  if (length > 0.0 && axis1.dot(offset) < 0.0) axis1 = -axis1;

  int rest[2], r = 0;
  for (int c = 0; c < 3; ++c)
    if (c != first) rest[r++] = c;
  const double lf = cp.eigenvalues[first];
  const bool opp0 = (cp.eigenvalues[rest[0]] < 0.0) != (lf < 0.0);
  const bool opp1 = (cp.eigenvalues[rest[1]] < 0.0) != (lf < 0.0);
  int second;
  if (opp0 != opp1) {
    second = opp0 ? rest[0] : rest[1];
  } else {
    second = std::abs(cp.eigenvalues[rest[1]]) > std::abs(cp.eigenvalues[rest[0]]) ? rest[1] : rest[0];
  }
  const int third = rest[0] == second ? rest[1] : rest[0];

  const Vec3 axis2 = cp.eigenvectors.col(second);
  Vec3 axis3 = cp.eigenvectors.col(third);
  if (axis1.cross(axis2).dot(axis3) < 0.0) axis3 = -axis3;

  out.frame.col(0) = axis1;
  out.frame.col(1) = axis2;
  out.frame.col(2) = axis3;
  out.order = {first, second, third};
  out.eigenvalues = Vec3(cp.eigenvalues[first], cp.eigenvalues[second], cp.eigenvalues[third]);
  return out;
}

Vec3 default_weights_topology(double value_at_saddle, const Vec3& axis_eigenvalues, double spacing,
                              const DeformerParams& params) {
  const double w1 = params.mu * std::abs(value_at_saddle);
  const double w2 = params.phi * spacing;
  const bool same_as_first = (axis_eigenvalues[2] < 0.0) == (axis_eigenvalues[0] < 0.0);
  const double w_ref = same_as_first ? w1 : w2;
  const double l_ref = same_as_first ? axis_eigenvalues[0] : axis_eigenvalues[1];
  const double w3 = l_ref != 0.0 ? w_ref * std::abs(axis_eigenvalues[2] / l_ref) : kMaxWeight;
  const double lo = min_weight(spacing);
  return Vec3(std::clamp(w1, lo, kMaxWeight), std::clamp(w2, lo, kMaxWeight), std::clamp(w3, lo, kMaxWeight));
}

Deformer build_topology_deformer(const ImplicitField& field, const CriticalPoint& cp, const DeformerParams& params,
                                 std::uint64_t id) {
  params.validate();
  const ProjectionResult projection = project_to_surface(field, cp.position, cp.eigenvectors);
  const FrameSelection selection = select_frame_topology(cp, projection.point);
  const double f = field.value(cp.position);

  Deformer d;
  d.id = id;
  d.kind = DeformerKind::topology;
  d.anchor = cp.position;
  d.frame = selection.frame;
  d.weights = default_weights_topology(f, selection.eigenvalues, field.spacing(), params);
  d.beta = -params.rho * f;
  d.params = params;
  d.surface_point = projection.point;
  return d;
}

double flip_threshold(double value_at_anchor) { return -value_at_anchor / kBasisPeak; }

double flip_threshold(const ImplicitField& field, const Vec3& s) { return flip_threshold(field.value(s)); }

// ---------------------------------------------------------------------------
// Geometry deformers

namespace {

constexpr double kMaxLateralRatio = 4.0;

Vec3 geometry_weights(double radius, const std::array<double, 2>& ratio, double spacing) {
  const double lo = min_weight(spacing);
  return Vec3(std::clamp(radius, lo, kMaxWeight), std::clamp(radius * ratio[0], lo, kMaxWeight),
              std::clamp(radius * ratio[1], lo, kMaxWeight));
}

double geometry_beta(DeformerKind kind, double amplitude, double spacing) {
  const double sign = kind == DeformerKind::bulge ? 1.0 : -1.0;
  return -sign * amplitude * spacing;
}

}  // namespace

Deformer build_geometry_deformer(const ImplicitField& field, const Vec3& p, DeformerKind kind,
                                 const GeometryParams& params, std::uint64_t id) {
  if (kind == DeformerKind::topology) throw DeformerError("geometry deformers are bulge or concavity");
  params.validate();
  const FieldSample s = field.sample(p);
  if (!(std::abs(s.value) <= 1e-4)) throw DeformerError("point is not on the surface");
  const double w = field.spacing();

  Deformer d;
  d.id = id;
  d.kind = kind;
  d.anchor = p;
  d.geometry = params;
  if (d.geometry.radius == 0.0) d.geometry.radius = 4.0 * w;

  const SymmetricEigen eig = symmetric_eigen(s.hessian);
  std::array<int, 3> by_abs{0, 1, 2};
  std::stable_sort(by_abs.begin(), by_abs.end(),
                   [&](int a, int b) { return std::abs(eig.values[a]) < std::abs(eig.values[b]); });
  const double scale = std::max(1.0, eig.values.cwiseAbs().maxCoeff());
  const bool tie = std::abs(eig.values[by_abs[1]]) - std::abs(eig.values[by_abs[0]]) < 1e-9 * scale;

  Vec3 normal, t1, t2;
  if (tie) {
    const double g = s.gradient.norm();
    if (!(g > 0.0)) throw DeformerError("surface normal is undefined at this point");
    normal = s.gradient / g;
    int k = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(normal[a]) < std::abs(normal[k])) k = a;
    t1 = (Vec3::Unit(k) - normal[k] * normal).normalized();
    t2 = normal.cross(t1);
    d.normal_based = true;
    d.lateral_ratio = {1.0, 1.0};
  } else {
    normal = eig.vectors.col(by_abs[0]);
    if (normal.dot(s.gradient) < 0.0) normal = -normal;
    const int a = std::min(by_abs[1], by_abs[2]), b = std::max(by_abs[1], by_abs[2]);
    t1 = eig.vectors.col(a);
    t2 = normal.cross(t1);
    const double ka = std::abs(eig.values[a]), kb = std::abs(eig.values[b]);
    const double kmax = std::max(ka, kb);
    auto ratio = [&](double k) { return k > 0.0 ? std::clamp(kmax / k, 1.0, kMaxLateralRatio) : kMaxLateralRatio; };
    d.lateral_ratio = {ratio(ka), ratio(kb)};
  }
  d.frame.col(0) = normal;
  d.frame.col(1) = t1;
  d.frame.col(2) = t2;
  d.weights = geometry_weights(d.geometry.radius, d.lateral_ratio, w);
  d.beta = geometry_beta(kind, d.geometry.amplitude, w);
  return d;
}

Deformer retune_geometry(const Deformer& deformer, const GeometryParams& params, double spacing) {
  params.validate();
  Deformer d = deformer;
  d.geometry = params;
  if (d.geometry.radius == 0.0) d.geometry.radius = 4.0 * spacing;
  d.weights = geometry_weights(d.geometry.radius, d.lateral_ratio, spacing);
  d.beta = geometry_beta(d.kind, d.geometry.amplitude, spacing);
  return d;
}

}  // namespace morphield
