#include "docstyle/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docstyle/error.hpp"

namespace docstyle {

namespace {

double off_diagonal_norm(const std::vector<double>& a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a[i * n + j] * a[i * n + j];
  return std::sqrt(s);
}

}  // namespace

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tol,
                            std::size_t max_sweeps) {
  if (a.size() != n * n) throw ShapeError("jacobi: matrix is not n x n");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a[i * n + j] - a[j * n + i]) >
          1e-9 * (1.0 + std::abs(a[i * n + j]) + std::abs(a[j * n + i]))) {
        throw InvalidArgument("jacobi: matrix is not symmetric");
      }
    }
  double trace = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += a[i * n + i];
  for (double v : a) scale = std::max(scale, std::abs(v));
  const double target = tol * std::max(std::abs(trace), scale * 1e-300 + 1e-300);

  // Rows of v are eigenvectors; rotations touch two contiguous rows.
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  SymmetricEigen out;
  out.n = n;
  while (off_diagonal_norm(a, n) > target) {
    if (out.sweeps == max_sweeps) {
      throw Error("jacobi: no convergence after " + std::to_string(max_sweeps) + " sweeps");
    }
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        // Classic stable rotation: t = sgn(theta) / (|theta| + sqrt(theta^2 + 1)).
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        double* rp = a.data() + p * n;
        double* rq = a.data() + q * n;
        for (std::size_t k = 0; k < n; ++k) {
          const double xp = rp[k], xq = rq[k];
          rp[k] = c * xp - s * xq;
          rq[k] = s * xp + c * xq;
        }
        // Mirror the updated rows into columns p and q, then fix the 2x2 block.
        for (std::size_t k = 0; k < n; ++k) {
          a[k * n + p] = rp[k];
          a[k * n + q] = rq[k];
        }
        rp[p] = app - t * apq;
        rq[q] = aqq + t * apq;
        rp[q] = 0.0;
        rq[p] = 0.0;
        double* vp = v.data() + p * n;
        double* vq = v.data() + q * n;
        for (std::size_t k = 0; k < n; ++k) {
          const double xp = vp[k], xq = vq[k];
          vp[k] = c * xp - s * xq;
          vq[k] = s * xp + c * xq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    out.values[r] = a[order[r] * n + order[r]];
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(order[r] * n), n,
                out.vectors.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  return out;
}

}  // namespace docstyle
