#include "morphield/field.hpp"

namespace morphield {

FieldSample AnalyticField::sample(const Vec3& q) const {
  if (sample_) return sample_(q);
  FieldSample s;
  s.value = value_(q);
  s.extrapolated = (q.array() < 0.0).any() || (q.array() > 1.0).any();
  const double h = 1e-4;
  for (int a = 0; a < 3; ++a) {
    const Vec3 ea = Vec3::Unit(a) * h;
    const double fp = value_(q + ea), fm = value_(q - ea);
    s.gradient[a] = (fp - fm) / (2.0 * h);
    s.hessian(a, a) = (fp - 2.0 * s.value + fm) / (h * h);
    for (int b = 0; b < a; ++b) {
      const Vec3 eb = Vec3::Unit(b) * h;
      const double mixed =
          (value_(q + ea + eb) - value_(q + ea - eb) - value_(q - ea + eb) + value_(q - ea - eb)) / (4.0 * h * h);
      s.hessian(a, b) = s.hessian(b, a) = mixed;
    }
  }
  return s;
}

}  // namespace morphield
