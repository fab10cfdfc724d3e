#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace morphield {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Axis-aligned box. Default-constructed boxes are empty (lo > hi).
struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (lo.array() > hi.array()).any(); }

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }

  void extend(const Aabb& other) {
    if (other.empty()) return;
    lo = lo.cwiseMin(other.lo);
    hi = hi.cwiseMax(other.hi);
  }

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }

  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }

  // Squared distance from p to the box (0 inside).
  double distance_sq(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.squaredNorm();
  }
};

}  // namespace morphield
