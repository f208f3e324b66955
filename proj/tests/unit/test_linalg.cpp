#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "docstyle/error.hpp"
#include "docstyle/linalg.hpp"
#include "test_util.hpp"

using namespace docstyle;

namespace {

std::vector<double> random_symmetric(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) a[i * n + j] = a[j * n + i] = rng.uniform(-1, 1);
  return a;
}

}  // namespace

TEST_SUITE("linalg") {
  TEST_CASE("2x2 closed form") {
    const auto e = jacobi_eigen({2, 1, 1, 2}, 2);
    CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(e.vectors[0]) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    CHECK(std::abs(e.vectors[1]) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  }

  TEST_CASE("eigenvalues match a dense oracle and reconstruct the matrix") {
    for (std::size_t n : {1u, 3u, 10u, 40u}) {
      const auto a = random_symmetric(n, n);
      const auto e = jacobi_eigen(a, n);
      Eigen::MatrixXd m(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(i, j) = a[i * n + j];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> oracle(m);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(e.values[i] == doctest::Approx(oracle.eigenvalues()(n - 1 - i)).epsilon(1e-9));
        if (i > 0) CHECK(e.values[i] <= e.values[i - 1]);
      }
      // V^T diag(values) V == A and V V^T == I.
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double rec = 0, dot = 0;
          for (std::size_t k = 0; k < n; ++k) {
            rec += e.vectors[k * n + i] * e.values[k] * e.vectors[k * n + j];
            dot += e.vectors[i * n + k] * e.vectors[j * n + k];
          }
          CHECK(std::abs(rec - a[i * n + j]) < 1e-9);
          CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    }
  }

  TEST_CASE("input validation") {
    CHECK_THROWS_AS(jacobi_eigen({1, 2, 3}, 2), ShapeError);
    CHECK_THROWS_AS(jacobi_eigen({1, 2, 3, 4}, 2), InvalidArgument);
  }
}
