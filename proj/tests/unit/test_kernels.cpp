#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <type_traits>

#include "docstyle/kernels.hpp"
#include "test_util.hpp"

using namespace docstyle;
namespace k = docstyle::kernels;
namespace ref = docstyle::kernels::reference;

namespace {

template <typename T>
std::vector<T> rand_vec(Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return v;
}

k::ConvGeometry random_conv(Rng& rng) {
  k::ConvGeometry g;
  g.batch = 1 + rng.below(4);
  g.in_channels = 1 + rng.below(3);
  g.out_channels = 1 + rng.below(5);
  g.kernel_h = 1 + rng.below(4);
  g.kernel_w = 1 + rng.below(4);
  g.stride = 1 + rng.below(3);
  g.pad = rng.below(3);
  g.in_h = g.kernel_h + rng.below(9);
  g.in_w = g.kernel_w + rng.below(9);
  g.out_h = (g.in_h + 2 * g.pad - g.kernel_h) / g.stride + 1;
  g.out_w = (g.in_w + 2 * g.pad - g.kernel_w) / g.stride + 1;
  return g;
}

// Runs fn once per thread count and returns the outputs.
template <typename Fn>
auto at_thread_counts(Fn fn) {
  const int saved = k::max_threads();
  std::vector<decltype(fn())> outs;
  for (int t : {1, 2, 4}) {
    k::set_threads(t);
    outs.push_back(fn());
  }
  k::set_threads(saved);
  return outs;
}

template <typename T>
void check_close(const std::vector<T>& a, const std::vector<T>& b) {
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-12;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::abs(static_cast<double>(b[i])));
    CHECK(std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) <= tol * scale);
  }
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE_TEMPLATE("conv kernels match the naive serial reference", T, float, double) {
    Rng rng(101);
    for (int rep = 0; rep < 25; ++rep) {
      const auto g = random_conv(rng);
      const auto x = rand_vec<T>(rng, g.batch * g.in_sample());
      const auto w = rand_vec<T>(rng, g.out_channels * g.patch_size());
      const auto b = rand_vec<T>(rng, g.out_channels);
      const auto dy = rand_vec<T>(rng, g.batch * g.out_sample());
      std::vector<T> y1(dy.size()), y2(dy.size());
      k::conv2d_forward<T>(g, x, w, b, y1);
      ref::conv2d_forward<T>(g, x, w, b, y2);
      check_close(y1, y2);
      std::vector<T> dx1(x.size()), dw1(w.size()), db1(b.size());
      std::vector<T> dx2(x.size()), dw2(w.size()), db2(b.size());
      k::conv2d_backward<T>(g, x, w, dy, dx1, dw1, db1);
      ref::conv2d_backward<T>(g, x, w, dy, dx2, dw2, db2);
      check_close(dx1, dx2);
      check_close(dw1, dw2);
      check_close(db1, db2);
    }
  }

  TEST_CASE_TEMPLATE("pool kernels equal and dense kernels match the naive serial reference", T, float, double) {
    Rng rng(202);
    for (int rep = 0; rep < 25; ++rep) {
      k::PoolGeometry p;
      p.batch = 1 + rng.below(3);
      p.channels = 1 + rng.below(4);
      p.size = 1 + rng.below(3);
      p.stride = 1 + rng.below(3);
      p.in_h = p.size + rng.below(8);
      p.in_w = p.size + rng.below(8);
      p.out_h = (p.in_h - p.size) / p.stride + 1;
      p.out_w = (p.in_w - p.size) / p.stride + 1;
      const auto x = rand_vec<T>(rng, p.batch * p.channels * p.in_h * p.in_w);
      const std::size_t ny = p.batch * p.channels * p.out_h * p.out_w;
      std::vector<T> y1(ny), y2(ny);
      std::vector<std::size_t> a1(ny), a2(ny);
      k::maxpool_forward<T>(p, x, y1, a1);
      ref::maxpool_forward<T>(p, x, y2, a2);
      CHECK(y1 == y2);
      CHECK(a1 == a2);
      const auto dy = rand_vec<T>(rng, ny);
      std::vector<T> dx1(x.size()), dx2(x.size());
      k::maxpool_backward<T>(p, a1, dy, dx1);
      ref::maxpool_backward<T>(p, a2, dy, dx2);
      CHECK(dx1 == dx2);

      k::DenseGeometry d{1 + rng.below(5), 1 + rng.below(40), 1 + rng.below(20)};
      const auto xi = rand_vec<T>(rng, d.batch * d.in);
      const auto w = rand_vec<T>(rng, d.in * d.out);
      const auto b = rand_vec<T>(rng, d.out);
      std::vector<T> o1(d.batch * d.out), o2(d.batch * d.out);
      k::dense_forward<T>(d, xi, w, b, o1);
      ref::dense_forward<T>(d, xi, w, b, o2);
      check_close(o1, o2);
      const auto dyo = rand_vec<T>(rng, d.batch * d.out);
      std::vector<T> gx1(xi.size()), gw1(w.size()), gb1(b.size());
      std::vector<T> gx2(xi.size()), gw2(w.size()), gb2(b.size());
      k::dense_backward<T>(d, xi, w, dyo, gx1, gw1, gb1);
      ref::dense_backward<T>(d, xi, w, dyo, gx2, gw2, gb2);
      check_close(gx1, gx2);
      check_close(gw1, gw2);
      check_close(gb1, gb2);
    }
  }

  TEST_CASE("kernel results do not depend on the thread count") {
    Rng rng(303);
    k::ConvGeometry g{8, 3, 20, 20, 6, 5, 5, 1, 2, 20, 20};
    const auto x = rand_vec<float>(rng, g.batch * g.in_sample());
    const auto w = rand_vec<float>(rng, g.out_channels * g.patch_size());
    const auto b = rand_vec<float>(rng, g.out_channels);
    const auto dy = rand_vec<float>(rng, g.batch * g.out_sample());
    const auto outs = at_thread_counts([&] {
      std::vector<float> y(dy.size()), dx(x.size()), dw(w.size()), db(b.size());
      k::conv2d_forward<float>(g, x, w, b, y);
      k::conv2d_backward<float>(g, x, w, dy, dx, dw, db);
      y.insert(y.end(), dx.begin(), dx.end());
      y.insert(y.end(), dw.begin(), dw.end());
      y.insert(y.end(), db.begin(), db.end());
      return y;
    });
    CHECK(outs[0] == outs[1]);
    CHECK(outs[0] == outs[2]);

    k::DenseGeometry d{16, 50, 30};
    const auto xi = rand_vec<float>(rng, d.batch * d.in);
    const auto wd = rand_vec<float>(rng, d.in * d.out);
    const auto bd = rand_vec<float>(rng, d.out);
    const auto dyd = rand_vec<float>(rng, d.batch * d.out);
    const auto dense = at_thread_counts([&] {
      std::vector<float> y(d.batch * d.out), dx(xi.size()), dw(wd.size()), db(bd.size());
      k::dense_forward<float>(d, xi, wd, bd, y);
      k::dense_backward<float>(d, xi, wd, dyd, dx, dw, db);
      y.insert(y.end(), dx.begin(), dx.end());
      y.insert(y.end(), dw.begin(), dw.end());
      y.insert(y.end(), db.begin(), db.end());
      return y;
    });
    CHECK(dense[0] == dense[1]);
    CHECK(dense[0] == dense[2]);

    const auto pts = rand_vec<double>(rng, 300 * 7);
    const auto cents = rand_vec<double>(rng, 13 * 7);
    const auto dists = at_thread_counts([&] {
      std::vector<double> d(300 * 13);
      k::squared_distances(pts, 300, cents, 13, 7, d);
      return d;
    });
    CHECK(dists[0] == dists[2]);
  }

  TEST_CASE("squared distances match a naive loop") {
    Rng rng(404);
    const std::size_t nq = 17, nb = 29, dim = 11;
    const auto q = rand_vec<double>(rng, nq * dim);
    const auto b = rand_vec<double>(rng, nb * dim);
    std::vector<double> d(nq * nb);
    k::squared_distances(q, nq, b, nb, dim, d);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = 0; j < nb; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dim; ++c) s += (q[i * dim + c] - b[j * dim + c]) * (q[i * dim + c] - b[j * dim + c]);
        CHECK(d[i * nb + j] == doctest::Approx(s).epsilon(1e-13));
      }
    CHECK(k::squared_distance(q.data(), q.data(), dim) == 0.0);
  }

  TEST_CASE("nearest centroid breaks ties toward the lowest index") {
    const std::vector<double> points{0.0, 0.0, 2.0, 0.0};
    const std::vector<double> cents{1.0, 0.0, -1.0, 0.0, 3.0, 0.0};
    std::vector<std::uint32_t> a(2);
    std::vector<double> d(2);
    k::nearest_centroid(points, 2, cents, 3, 2, a, d);
    CHECK(a[0] == 0);  // equidistant from centroids 0 and 1
    CHECK(a[1] == 0);  // equidistant from centroids 0 and 2
    CHECK(d[0] == 1.0);
  }

  TEST_CASE("thread control") {
    const int saved = k::max_threads();
    k::set_threads(1);
    CHECK(k::max_threads() == 1);
    k::set_threads(3);
    CHECK(k::max_threads() == 3);
    k::set_threads(saved);
  }
}
