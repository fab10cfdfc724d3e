#pragma once

#include "morphield/types.hpp"

namespace morphield {

struct SymmetricEigen {
  Vec3 values;   // ascending
  Mat3 vectors;  // column c pairs with values[c]; orthonormal
  int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric 3x3 matrix with the fixed pivot
// order (0,1), (0,2), (1,2), iterated until the off-diagonal mass falls below
// 1e-12 of the Frobenius norm. Each eigenvector's largest-magnitude
// component is made positive.
SymmetricEigen symmetric_eigen(const Mat3& matrix);

}  // namespace morphield
