#pragma once

#include <cstddef>
#include <vector>

namespace docstyle {

struct SymmetricEigen {
  std::size_t n = 0;
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // n x n row-major; row i is the eigenvector of values[i]
  std::size_t sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric n x n row-major matrix until the
// off-diagonal Frobenius norm drops below tol * max(trace, tiny).
// Throws if convergence is not reached within max_sweeps.
SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tol = 1e-10,
                            std::size_t max_sweeps = 60);

}  // namespace docstyle
