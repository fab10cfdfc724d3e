#include "morphield/bspline.hpp"
#include "morphield/deformer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace morphield;

namespace {

const Vec3 kCenter(0.5, 0.5, 0.5);

const CriticalPoint& gap_saddle() { return test::fitted_scene("two_spheres", 32).search.saddles.at(0); }

const CriticalPoint& torus_axis_saddle() {
  const auto& scene = test::fitted_scene("torus", 32);
  for (const auto& s : scene.search.saddles)
    if ((s.position - kCenter).norm() < scene.field->spacing()) return s;
  throw std::runtime_error("torus axis saddle missing");
}

DeformerParams with_rho(double rho) {
  DeformerParams p;
  p.rho = rho;
  return p;
}

// Same knot interval of the deformer's B-spline along every local axis.
bool same_piece(const Deformer& d, const Vec3& a, const Vec3& b) {
  const Vec3 ua = d.local(a), ub = d.local(b);
  for (int c = 0; c < 3; ++c)
    if (std::floor(ua[c]) != std::floor(ub[c])) return false;
  return true;
}

// The Richardson stencil of q stays inside one polynomial piece of the base
// lattice and of every deformer.
bool stencil_smooth(const CompositeField& f, const Vec3& q, double h) {
  if (!test::stencil_in_one_cell(q, h, f.spacing())) return false;
  for (const Deformer& d : f.deformers())
    for (int a = 0; a < 3; ++a)
      for (double s : {-1.0, 1.0}) {
        const Vec3 p = q + s * h * Vec3::Unit(a);
        if (!same_piece(d, q, p) || d.in_support(q) != d.in_support(p)) return false;
      }
  return true;
}

void expect_rotation(const Mat3& frame) {
  EXPECT_LT((frame.transpose() * frame - Mat3::Identity()).norm(), 1e-12);
  EXPECT_NEAR(frame.determinant(), 1.0, 1e-12);
}

}  // namespace

TEST(Deformer, FlipLawAtTheSaddle) {
  const auto& scene = test::fitted_scene("two_spheres", 32);
  const CriticalPoint& s = gap_saddle();
  const double f = scene.field->value(s.position);
  ASSERT_GT(f, 0.0);
  for (double rho : {0.0, 1.0, 27.0 / 8.0, 5.0, 10.0}) {
    const Deformer d = build_topology_deformer(*scene.field, s, with_rho(rho), 1);
    const CompositeField composite(scene.field, {d});
    EXPECT_NEAR(composite.value(s.position), (1.0 - 8.0 * rho / 27.0) * f, 1e-12) << rho;
    EXPECT_EQ(d.beta, -rho * f);
  }
  // At 27/8 the edit exactly cancels F(s); beyond it the sign flips.
  const Deformer at = build_topology_deformer(*scene.field, s, with_rho(27.0 / 8.0));
  EXPECT_NEAR(at.beta, flip_threshold(*scene.field, s.position), 1e-15);
  EXPECT_NEAR(CompositeField(scene.field, {at}).value(s.position), 0.0, 1e-12);
  const Deformer five = build_topology_deformer(*scene.field, s, with_rho(5.0));
  EXPECT_NEAR(CompositeField(scene.field, {five}).value(s.position), -13.0 / 27.0 * f, 1e-12);
  EXPECT_EQ(flip_threshold(0.3), -0.3 * 27.0 / 8.0);
}

TEST(Deformer, ValueAtAnchorIsBetaTimesPeak) {
  Deformer d;
  d.anchor = Vec3(0.4, 0.5, 0.6);
  d.weights = Vec3(0.05, 0.1, 0.2);
  d.beta = -0.7;
  EXPECT_NEAR(d.value(d.anchor), -0.7 * kBasisPeak, 1e-16);
  EXPECT_EQ(d.sample(d.anchor).gradient, Vec3::Zero());
}

TEST(Deformer, LocalityOutsideTheSupport) {
  const auto& scene = test::fitted_scene("two_spheres", 32);
  const Deformer d = build_topology_deformer(*scene.field, gap_saddle(), {}, 3);
  const CompositeField composite(scene.field, {d});
  std::size_t outside = 0;
  for (const Vec3& q : test::random_points(20000, test::kSeed, 0.0, 1.0)) {
    if (d.in_support(q)) continue;
    ++outside;
    EXPECT_EQ(composite.value(q), scene.field->value(q));
    const FieldSample a = composite.sample(q), b = scene.field->sample(q);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.gradient, b.gradient);
    EXPECT_EQ(a.hessian, b.hessian);
  }
  EXPECT_GE(outside, 10000u);
  // Points just inside the support box but outside the oriented box.
  const Aabb box = d.support_box();
  for (const Vec3& u : test::random_points(20000, test::kSeed + 1, 0.0, 1.0)) {
    const Vec3 q = box.lo + u.cwiseProduct(box.hi - box.lo);
    if (!d.in_support(q)) EXPECT_EQ(composite.value(q), scene.field->value(q));
  }
}

TEST(Deformer, SupportBoxBoundsTheOrientedBox) {
  const auto& scene = test::fitted_scene("torus", 32);
  const Deformer d = build_topology_deformer(*scene.field, torus_axis_saddle(), {});
  const Aabb box = d.support_box();
  for (const Vec3& u : test::random_points(5000, test::kSeed + 2, -1.999, 1.999)) {
    const Vec3 q = d.anchor + d.frame * u.cwiseProduct(d.weights);
    EXPECT_TRUE(box.contains(q));
    EXPECT_TRUE(d.in_support(q));
  }
}

TEST(Deformer, CompositeOrderAndRemovalAreBitwise) {
  const auto& scene = test::fitted_scene("two_spheres", 32);
  const Deformer a = build_topology_deformer(*scene.field, gap_saddle(), {}, 1);
  const Deformer b = build_topology_deformer(*scene.field, gap_saddle(), with_rho(2.0), 2);
  const CompositeField forward(scene.field, {a, b}), reverse(scene.field, {b, a});
  EXPECT_EQ(reverse.deformers()[0].id, 1u);
  for (const Vec3& q : test::random_points(1000, test::kSeed + 3, 0.3, 0.7))
    EXPECT_EQ(forward.value(q), reverse.value(q));

  // Add then remove: the field returns to the base exactly.
  const CompositeField removed(scene.field, {});
  for (const Vec3& q : test::random_points(1000, test::kSeed + 4, 0.0, 1.0))
    EXPECT_EQ(removed.value(q), scene.field->value(q));
}

TEST(Deformer, RetuneAndBackIsBitwise) {
  const auto& scene = test::fitted_scene("torus", 32);
  const Deformer original = build_topology_deformer(*scene.field, torus_axis_saddle(), {}, 1);
  const Deformer changed = build_topology_deformer(*scene.field, torus_axis_saddle(), with_rho(2.5), 1);
  const Deformer back = build_topology_deformer(*scene.field, torus_axis_saddle(), {}, 1);
  const CompositeField f0(scene.field, {original}), f1(scene.field, {changed}), f2(scene.field, {back});
  bool differs = false;
  for (const Vec3& q : test::random_points(1000, test::kSeed + 5, 0.3, 0.7)) {
    EXPECT_EQ(f0.value(q), f2.value(q));
    const FieldSample a = f0.sample(q), c = f2.sample(q);
    EXPECT_EQ(a.gradient, c.gradient);
    EXPECT_EQ(a.hessian, c.hessian);
    differs |= f0.value(q) != f1.value(q);
  }
  EXPECT_TRUE(differs);
}

TEST(Deformer, CompositeDerivativesMatchFiniteDifferences) {
  const auto& scene = test::fitted_scene("two_spheres", 32);
  const Deformer topo = build_topology_deformer(*scene.field, gap_saddle(), {}, 1);
  const CompositeField with_topo(scene.field, {topo});
  const Vec3 pole = Vec3(0.35, 0.5, 0.5) + Vec3(0, 0.12, 0);
  const Vec3 on_surface = project_to_surface(with_topo, pole, Mat3::Identity()).point;
  const Deformer bump = build_geometry_deformer(with_topo, on_surface, DeformerKind::bulge, {}, 2);
  const CompositeField f(scene.field, {topo, bump});
  const double w = f.spacing(), h = w / 100;

  double worst_grad = 0.0, worst_hess = 0.0;
  std::size_t used = 0, near_edge = 0;
  std::mt19937_64 rng(test::kSeed + 6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  while (used < 1000) {
    // Points inside a support, half of them in the outer shell |u|_inf > 1.8.
    const Deformer& d = used % 2 ? topo : bump;
    Vec3 local(u(rng), u(rng), u(rng));
    if (used % 4 < 2) local[used % 3] = std::copysign(1.8 + 0.2 * std::abs(local[used % 3]) / 2.0, local[used % 3]);
    const Vec3 q = d.anchor + d.frame * local.cwiseProduct(d.weights);
    if ((q.array() <= 0.0).any() || (q.array() >= 1.0).any() || !stencil_smooth(f, q, h)) continue;
    ++used;
    if (d.local(q).lpNorm<Eigen::Infinity>() > 1.8) ++near_edge;
    const FieldSample s = f.sample(q);
    const auto fd = test::richardson_differences(f, q, h);
    worst_grad = std::max(worst_grad, test::relative_error(fd.gradient, s.gradient));
    worst_hess = std::max(worst_hess, test::relative_error(fd.hessian, s.hessian));
  }
  EXPECT_GT(near_edge, 200u);
  EXPECT_LT(worst_grad, 1e-5);
  EXPECT_LT(worst_hess, 1e-5);
}

TEST(Deformer, FramesAreRotations) {
  for (const char* name : {"two_spheres", "torus", "bridge"}) {
    const auto& scene = test::fitted_scene(name, 32);
    for (const auto& s : scene.search.saddles) {
      const Deformer d = build_topology_deformer(*scene.field, s, {});
      expect_rotation(d.frame);
      EXPECT_TRUE((d.weights.array() >= min_weight(scene.field->spacing())).all());
      EXPECT_TRUE((d.weights.array() <= kMaxWeight).all());
      // First axis points from the saddle toward the projected surface point.
      EXPECT_GE(d.frame.col(0).dot(d.surface_point - d.anchor), 0.0);
      EXPECT_LT(std::abs(scene.field->value(d.surface_point)), 1e-6);
    }
  }
}

TEST(Deformer, TopologyFrameUsesTheAxisTowardTheSurface) {
  // Two-sphere gap: the surface is nearest across the gap along the centre
  // line, which is the negative-curvature direction.
  const Deformer d = build_topology_deformer(*test::fitted_scene("two_spheres", 32).field, gap_saddle(), {});
  EXPECT_GT(std::abs(d.frame.col(0).x()), 0.99);
  // Torus axis: the surface lies in the ring plane, not along the axis.
  const Deformer t = build_topology_deformer(*test::fitted_scene("torus", 32).field, torus_axis_saddle(), {});
  EXPECT_LT(std::abs(t.frame.col(0).z()), 0.01);
}

TEST(Deformer, WeightRules) {
  const double w = 1.0 / 32;
  DeformerParams p;
  // Third axis shares the first axis' curvature sign: scaled from W1.
  Vec3 weights = default_weights_topology(0.03, Vec3(-2.0, 4.0, -1.0), w, p);
  EXPECT_NEAR(weights[0], 0.06, 1e-15);
  EXPECT_NEAR(weights[1], 4 * w, 1e-15);
  EXPECT_NEAR(weights[2], 0.06 * 0.5, 1e-15);
  // Opposite sign: scaled from W2.
  weights = default_weights_topology(0.03, Vec3(-2.0, 4.0, 2.0), w, p);
  EXPECT_NEAR(weights[2], 4 * w * 0.5, 1e-15);
  // Clamped to [w/2, 0.5]; the ratio is taken before clamping.
  weights = default_weights_topology(1e-5, Vec3(-1.0, 1.0, -1000.0), w, p);
  EXPECT_EQ(weights[0], w / 2);
  EXPECT_NEAR(weights[2], std::min(2e-5 * 1000, kMaxWeight), 1e-15);
  weights = default_weights_topology(10.0, Vec3(-1.0, 1.0, 1.0), w, p);
  EXPECT_EQ(weights[0], kMaxWeight);
}

TEST(Deformer, ParameterValidation) {
  const auto& scene = test::fitted_scene("two_spheres", 32);
  for (DeformerParams bad : {DeformerParams{0.0, 4.0, 5.0}, DeformerParams{2.0, -1.0, 5.0}, DeformerParams{2.0, 4.0, -1.0},
                             DeformerParams{NAN, 4.0, 5.0}, DeformerParams{2.0, 4.0, INFINITY}})
    EXPECT_THROW(build_topology_deformer(*scene.field, gap_saddle(), bad), DeformerError);
  EXPECT_THROW(GeometryParams({-0.1, 5.0}).validate(), DeformerError);
  for (auto k : {DeformerKind::topology, DeformerKind::bulge, DeformerKind::concavity})
    EXPECT_EQ(deformer_kind_from_string(to_string(k)), k);
  EXPECT_FALSE(deformer_kind_from_string("twist"));
}

TEST(Projection, GradientFlowReachesTheSphere) {
  const auto f = test::fit_function(32, [](const Vec3& q) { return test::sphere_sdf(q, kCenter, 0.3); });
  for (const Vec3& q : test::random_points(200, test::kSeed + 7, 0.3, 0.7)) {
    const auto r = project_by_gradient_flow(*f, q);
    ASSERT_TRUE(r) << q.transpose();
    EXPECT_LE(std::abs(f->value(r->point)), 1e-6);
    EXPECT_NEAR((r->point - kCenter).norm(), 0.3, 1e-3);
    EXPECT_FALSE(r->used_fallback);
  }
}

TEST(Projection, SaddlesNeedTheRaySearch) {
  const auto& two = test::fitted_scene("two_spheres", 32);
  const CriticalPoint& s = gap_saddle();
  EXPECT_FALSE(project_by_gradient_flow(*two.field, s.position));
  const ProjectionResult r = project_to_surface(*two.field, s.position, s.eigenvectors);
  EXPECT_TRUE(r.used_fallback);
  EXPECT_LE(std::abs(two.field->value(r.point)), 1e-6);
  // The gap is 0.06 wide, so the nearest crossing is about 0.03 away.
  EXPECT_NEAR((r.point - s.position).norm(), 0.03, 0.005);

  // Torus axis: only the in-plane eigenvectors meet the surface.
  const auto& torus = test::fitted_scene("torus", 32);
  const CriticalPoint& t = torus_axis_saddle();
  const ProjectionResult rt = project_to_surface(*torus.field, t.position, t.eigenvectors);
  EXPECT_NEAR((rt.point - t.position).norm(), 0.17, 0.01);
  EXPECT_LT(std::abs(rt.point.z() - 0.5), 1e-6);
  // Marching the axis alone finds nothing inside the cube.
  Mat3 axis_only = Mat3::Zero();
  for (int c = 0; c < 3; ++c) axis_only.col(c) = Vec3::UnitZ();
  EXPECT_FALSE(project_by_ray_search(*torus.field, t.position, axis_only));
}

TEST(Projection, FailureThrows) {
  const auto f = test::fit_function(16, [](const Vec3&) { return 1.0; });
  EXPECT_THROW(project_to_surface(*f, kCenter, Mat3::Identity()), DeformerError);
}

TEST(GeometryDeformer, SphereUsesTheFlatDirectionAsNormal) {
  const auto f = test::fit_function(32, [](const Vec3& q) { return test::sphere_sdf(q, kCenter, 0.3); });
  const CompositeField composite(f);
  const Vec3 p = project_to_surface(composite, Vec3(0.5, 0.5, 0.85), Mat3::Identity()).point;
  const Deformer d = build_geometry_deformer(composite, p, DeformerKind::bulge, {});
  EXPECT_FALSE(d.normal_based);
  expect_rotation(d.frame);
  EXPECT_GT(d.frame.col(0).z(), 0.999);
  // Equal principal curvatures: both lateral axes get the radius.
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(d.weights[a], 4 * f->spacing(), 1e-3 * f->spacing());
  // Bulge pushes the surface out: F drops at the pick.
  EXPECT_LT(CompositeField(f, {d}).value(p), -1e-3);
  const Deformer c = build_geometry_deformer(composite, p, DeformerKind::concavity, {});
  EXPECT_GT(CompositeField(f, {c}).value(p), 1e-3);
  EXPECT_THROW(build_geometry_deformer(composite, Vec3(0.5, 0.5, 0.5), DeformerKind::bulge, {}), DeformerError);
  EXPECT_THROW(build_geometry_deformer(composite, p, DeformerKind::topology, {}), DeformerError);
}

TEST(GeometryDeformer, PlaneFallsBackToTheGradient) {
  // Zero Hessian: every eigenvalue ties, so the normal comes from grad F.
  const Vec3 n = Vec3(1, 2, 2) / 3;
  const AnalyticField plane(
      [&](const Vec3& q) { return n.dot(q - kCenter); }, 1.0 / 32,
      [&](const Vec3& q) {
        FieldSample s;
        s.value = n.dot(q - kCenter);
        s.gradient = n;
        return s;
      });
  const Deformer d = build_geometry_deformer(plane, kCenter, DeformerKind::bulge, {});
  EXPECT_TRUE(d.normal_based);
  expect_rotation(d.frame);
  EXPECT_LT((d.frame.col(0) - n).norm(), 1e-15);
  EXPECT_EQ(d.lateral_ratio, (std::array<double, 2>{1.0, 1.0}));
}

TEST(Projection, SphereCenterFallsBackToTheRaySearch) {
  const auto f = test::fit_function(32, [](const Vec3& q) { return test::sphere_sdf(q, kCenter, 0.3); });
  EXPECT_FALSE(project_by_gradient_flow(*f, kCenter));
  const ProjectionResult r = project_to_surface(*f, kCenter, Mat3::Identity());
  EXPECT_TRUE(r.used_fallback);
  // Bisection oracle along +x, the first direction tried.
  double lo = 0.0, hi = 0.5;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f->value(kCenter + mid * Vec3::UnitX()) < 0.0 ? lo : hi) = mid;
  }
  EXPECT_NEAR((r.point - kCenter).norm(), 0.3, 1e-3);
  EXPECT_NEAR((r.point - kCenter).norm(), lo, 1e-6);
}

TEST(GeometryDeformer, TorusUsesCurvatureAxes) {
  const auto& torus = test::fitted_scene("torus", 32);
  const CompositeField composite(torus.field);
  // Outer equator: tube curvature 1/0.08, ring curvature 1/0.33.
  const Vec3 p = project_to_surface(composite, Vec3(0.5 + 0.33, 0.5, 0.5), Mat3::Identity()).point;
  const Deformer d = build_geometry_deformer(composite, p, DeformerKind::concavity, {}, 7);
  EXPECT_FALSE(d.normal_based);
  expect_rotation(d.frame);
  EXPECT_GT(d.frame.col(0).x(), 0.99);
  // The flatter ring direction (y) gets the wider lateral axis.
  const int ring = std::abs(d.frame.col(1).y()) > std::abs(d.frame.col(2).y()) ? 1 : 2;
  EXPECT_GT(d.lateral_ratio[ring - 1], 2.0);
  EXPECT_EQ(d.lateral_ratio[2 - ring], 1.0);

  // Retune keeps the frame and ratios.
  const Deformer r = retune_geometry(d, {0.05, 2.0}, torus.field->spacing());
  EXPECT_EQ(r.frame, d.frame);
  EXPECT_EQ(r.lateral_ratio, d.lateral_ratio);
  EXPECT_EQ(r.weights[0], 0.05);
  EXPECT_NEAR(r.beta, 2.0 * torus.field->spacing(), 1e-15);
}

TEST(Composite, SegmentCullingMatchesFullEvaluation) {
  const auto& scene = test::fitted_scene("two_spheres", 32);
  const Deformer d = build_topology_deformer(*scene.field, gap_saddle(), {}, 1);
  const CompositeField f(scene.field, {d});
  std::vector<std::size_t> hits;
  for (const Vec3& o : test::random_points(300, test::kSeed + 8, 0.0, 1.0)) {
    const Vec3 dir = (Vec3(0.5, 0.5, 0.5) + (o - Vec3::Constant(0.5)) * 0.1 - o).normalized();
    f.deformers_on_segment(o, dir, 0.0, 2.0, hits);
    for (double t = 0.0; t < 2.0; t += 0.01) {
      const Vec3 q = o + t * dir;
      EXPECT_EQ(f.value_subset(q, hits), f.value(q));
    }
  }
  // A segment that misses the box sees no deformers.
  f.deformers_on_segment(Vec3(0.05, 0.05, 0.05), Vec3::UnitX(), 0.0, 0.9, hits);
  EXPECT_TRUE(hits.empty());
}
