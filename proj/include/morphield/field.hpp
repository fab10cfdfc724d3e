#pragma once

#include "morphield/types.hpp"

#include <functional>

namespace morphield {

// Value, gradient and Hessian at a point. The Hessian is symmetric by
// construction: six entries are computed and mirrored.
struct FieldSample {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
  Mat3 hessian = Mat3::Zero();
  bool extrapolated = false;  // query outside [0,1]^3
};

// Scalar field over unit-cube coordinates. Implementations are immutable and
// safe for concurrent evaluation.
class ImplicitField {
 public:
  virtual ~ImplicitField() = default;
  virtual double value(const Vec3& q) const = 0;
  virtual FieldSample sample(const Vec3& q) const = 0;
  // Cell size used for step lengths and tolerances.
  virtual double spacing() const = 0;
};

// Closed-form field, used for test scenes and mesh generation. The sample
// callback is optional; without it derivatives come from central differences.
class AnalyticField final : public ImplicitField {
 public:
  using ValueFn = std::function<double(const Vec3&)>;
  using SampleFn = std::function<FieldSample(const Vec3&)>;

  AnalyticField(ValueFn value, double spacing, SampleFn sample = {})
      : value_(std::move(value)), sample_(std::move(sample)), spacing_(spacing) {}

  double value(const Vec3& q) const override { return value_(q); }
  FieldSample sample(const Vec3& q) const override;
  double spacing() const override { return spacing_; }

 private:
  ValueFn value_;
  SampleFn sample_;
  double spacing_;
};

}  // namespace morphield
