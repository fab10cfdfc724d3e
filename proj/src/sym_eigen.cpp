#include "morphield/sym_eigen.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace morphield {

SymmetricEigen symmetric_eigen(const Mat3& matrix) {
  Mat3 a = 0.5 * (matrix + matrix.transpose());
  Mat3 v = Mat3::Identity();
  const double scale = a.norm();
  const double threshold = 1e-12 * scale;
  constexpr std::array<std::array<int, 2>, 3> kPivots{{{0, 1}, {0, 2}, {1, 2}}};

  int sweep = 0;
  for (; sweep < 64; ++sweep) {
    const double off = std::sqrt(a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2));
    if (off <= threshold || off == 0.0) break;
    for (const auto& [p, q] : kPivots) {
      const double apq = a(p, q);
      if (apq == 0.0) continue;
      // Rotation angle that annihilates a(p, q) (Golub & Van Loan 8.5.2).
      const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
      const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;

      for (int k = 0; k < 3; ++k) {
        const double akp = a(k, p), akq = a(k, q);
        a(k, p) = c * akp - s * akq;
        a(k, q) = s * akp + c * akq;
      }
      for (int k = 0; k < 3; ++k) {
        const double apk = a(p, k), aqk = a(q, k);
        a(p, k) = c * apk - s * aqk;
        a(q, k) = s * apk + c * aqk;
      }
      a(p, q) = a(q, p) = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double vkp = v(k, p), vkq = v(k, q);
        v(k, p) = c * vkp - s * vkq;
        v(k, q) = s * vkp + c * vkq;
      }
    }
  }

  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    if (a(x, x) != a(y, y)) return a(x, x) < a(y, y);
    return x < y;
  });

  SymmetricEigen out;
  out.sweeps = sweep;
  for (int c = 0; c < 3; ++c) {
    out.values[c] = a(order[c], order[c]);
    Vec3 col = v.col(order[c]);
    int big = 0;
    for (int k = 1; k < 3; ++k)
      if (std::abs(col[k]) > std::abs(col[big])) big = k;
    if (col[big] < 0.0) col = -col;
    out.vectors.col(c) = col;
  }
  return out;
}

}  // namespace morphield
