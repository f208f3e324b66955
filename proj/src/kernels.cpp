#include "docstyle/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>
#include <vector>

namespace docstyle::kernels {
namespace {

using idx = std::ptrdiff_t;

// Fixed-order dot product with eight independent partial sums. The grouping
// is part of the result, so it must not change between call sites.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
inline T sum(const T* x, std::size_t n) {
  T acc[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int j = 0; j < 4; ++j) acc[j] += x[i + j];
  }
  T s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < n; ++i) s += x[i];
  return s;
}

// col is [patch_size, out_plane].
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t plane = g.out_plane();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* xc = x + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * g.stride + ki) - static_cast<idx>(g.pad);
          T* out = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<idx>(g.in_h)) {
            std::fill(out, out + g.out_w, T{});
            continue;
          }
          const T* xr = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * g.stride + kj) - static_cast<idx>(g.pad);
            out[ox] = (ix < 0 || ix >= static_cast<idx>(g.in_w)) ? T{} : xr[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t plane = g.out_plane();
  std::fill(dx, dx + g.in_sample(), T{});
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* dxc = dx + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * g.stride + ki) - static_cast<idx>(g.pad);
          if (iy < 0 || iy >= static_cast<idx>(g.in_h)) continue;
          T* dxr = dxc + static_cast<std::size_t>(iy) * g.in_w;
          const T* in = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * g.stride + kj) - static_cast<idx>(g.pad);
            if (ix >= 0 && ix < static_cast<idx>(g.in_w)) dxr[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(std::max(1, n)); }

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y) {
  const std::size_t patch = g.patch_size();
  const std::size_t plane = g.out_plane();
#pragma omp parallel
  {
    std::vector<T> col(patch * plane);
#pragma omp for schedule(static)
    for (idx n = 0; n < static_cast<idx>(g.batch); ++n) {
      im2col(g, x.data() + n * g.in_sample(), col.data());
      T* yn = y.data() + n * g.out_sample();
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        T* yo = yn + oc * plane;
        std::fill(yo, yo + plane, b[oc]);
        const T* wo = w.data() + oc * patch;
        for (std::size_t k = 0; k < patch; ++k) axpy(wo[k], col.data() + k * plane, yo, plane);
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  const std::size_t patch = g.patch_size();
  const std::size_t plane = g.out_plane();
  const std::size_t wsize = g.out_channels * patch;
  // Per-sample parameter gradients, summed afterwards in sample order.
  std::vector<T> dw_part(g.batch * wsize);
  std::vector<T> db_part(g.batch * g.out_channels);
  const bool want_dx = !dx.empty();
#pragma omp parallel
  {
    std::vector<T> col(patch * plane);
    std::vector<T> dcol(want_dx ? patch * plane : 0);
#pragma omp for schedule(static)
    for (idx n = 0; n < static_cast<idx>(g.batch); ++n) {
      im2col(g, x.data() + n * g.in_sample(), col.data());
      const T* dyn = dy.data() + n * g.out_sample();
      T* dwn = dw_part.data() + n * wsize;
      T* dbn = db_part.data() + n * g.out_channels;
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        const T* dyo = dyn + oc * plane;
        dbn[oc] = sum(dyo, plane);
        for (std::size_t k = 0; k < patch; ++k) {
          dwn[oc * patch + k] = dot(dyo, col.data() + k * plane, plane);
        }
      }
      if (want_dx) {
        std::fill(dcol.begin(), dcol.end(), T{});
        for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
          const T* dyo = dyn + oc * plane;
          const T* wo = w.data() + oc * patch;
          for (std::size_t k = 0; k < patch; ++k) axpy(wo[k], dyo, dcol.data() + k * plane, plane);
        }
        col2im(g, dcol.data(), dx.data() + n * g.in_sample());
      }
    }
#pragma omp for schedule(static)
    for (idx j = 0; j < static_cast<idx>(wsize); ++j) {
      T s{};
      for (std::size_t n = 0; n < g.batch; ++n) s += dw_part[n * wsize + j];
      dw[j] = s;
    }
#pragma omp for schedule(static)
    for (idx oc = 0; oc < static_cast<idx>(g.out_channels); ++oc) {
      T s{};
      for (std::size_t n = 0; n < g.batch; ++n) s += db_part[n * g.out_channels + oc];
      db[oc] = s;
    }
  }
}

template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax) {
  const std::size_t planes = g.batch * g.channels;
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(planes); ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * in_plane;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        std::size_t best = base + (oy * g.stride) * g.in_w + ox * g.stride;
        T best_v = x[best];
        for (std::size_t i = 0; i < g.size; ++i) {
          const std::size_t row = base + (oy * g.stride + i) * g.in_w + ox * g.stride;
          for (std::size_t j = 0; j < g.size; ++j) {
            if (x[row + j] > best_v) {
              best_v = x[row + j];
              best = row + j;
            }
          }
        }
        const std::size_t o = static_cast<std::size_t>(p) * out_plane + oy * g.out_w + ox;
        y[o] = best_v;
        argmax[o] = best;
      }
    }
  }
}

template <typename T>
void maxpool_backward(const PoolGeometry& g, std::span<const std::size_t> argmax,
                      std::span<const T> dy, std::span<T> dx) {
  const std::size_t planes = g.batch * g.channels;
  const std::size_t in_plane = g.in_h * g.in_w;
  const std::size_t out_plane = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(planes); ++p) {
    T* dxp = dx.data() + static_cast<std::size_t>(p) * in_plane;
    std::fill(dxp, dxp + in_plane, T{});
    for (std::size_t o = 0; o < out_plane; ++o) {
      const std::size_t oi = static_cast<std::size_t>(p) * out_plane + o;
      dx[argmax[oi]] += dy[oi];
    }
  }
}

template <typename T>
void dense_forward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y) {
#pragma omp parallel for schedule(static)
  for (idx n = 0; n < static_cast<idx>(g.batch); ++n) {
    const T* xn = x.data() + n * g.in;
    T* yn = y.data() + n * g.out;
    for (std::size_t u = 0; u < g.out; ++u) yn[u] = b[u] + dot(w.data() + u * g.in, xn, g.in);
  }
}

template <typename T>
void dense_backward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  const bool want_dx = !dx.empty();
#pragma omp parallel
  {
    if (want_dx) {
#pragma omp for schedule(static)
      for (idx n = 0; n < static_cast<idx>(g.batch); ++n) {
        T* dxn = dx.data() + n * g.in;
        std::fill(dxn, dxn + g.in, T{});
        const T* dyn = dy.data() + n * g.out;
        for (std::size_t u = 0; u < g.out; ++u) axpy(dyn[u], w.data() + u * g.in, dxn, g.in);
      }
    }
#pragma omp for schedule(static)
    for (idx u = 0; u < static_cast<idx>(g.out); ++u) {
      T* dwu = dw.data() + u * g.in;
      std::fill(dwu, dwu + g.in, T{});
      T s{};
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T d = dy[n * g.out + u];
        s += d;
        axpy(d, x.data() + n * g.in, dwu, g.in);
      }
      db[u] = s;
    }
  }
}

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double acc[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    for (int j = 0; j < 4; ++j) {
      const double d = a[i + j] - b[i + j];
      acc[j] += d * d;
    }
  }
  double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < dim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void squared_distances(std::span<const double> queries, std::size_t n_queries,
                       std::span<const double> base, std::size_t n_base, std::size_t dim,
                       std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (idx q = 0; q < static_cast<idx>(n_queries); ++q) {
    const double* qv = queries.data() + q * dim;
    double* row = out.data() + q * n_base;
    for (std::size_t j = 0; j < n_base; ++j) row[j] = squared_distance(qv, base.data() + j * dim, dim);
  }
}

void nearest_centroid(std::span<const double> points, std::size_t n_points,
                      std::span<const double> centroids, std::size_t n_centroids,
                      std::size_t dim, std::span<std::uint32_t> assignment,
                      std::span<double> distance) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(n_points); ++i) {
    const double* p = points.data() + i * dim;
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < n_centroids; ++c) {
      const double d = squared_distance(p, centroids.data() + c * dim, dim);
      if (d < best) {
        best = d;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    assignment[i] = arg;
    distance[i] = best;
  }
}

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          T s = b[oc];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const idx iy = static_cast<idx>(oy * g.stride + ki) - static_cast<idx>(g.pad);
                const idx ix = static_cast<idx>(ox * g.stride + kj) - static_cast<idx>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<idx>(g.in_h) ||
                    ix >= static_cast<idx>(g.in_w))
                  continue;
                s += w[((oc * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj] *
                     x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
          y[((n * g.out_channels + oc) * g.out_h + oy) * g.out_w + ox] = s;
        }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  std::fill(dw.begin(), dw.end(), T{});
  std::fill(db.begin(), db.end(), T{});
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), T{});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_channels; ++oc)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const T d = dy[((n * g.out_channels + oc) * g.out_h + oy) * g.out_w + ox];
          db[oc] += d;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const idx iy = static_cast<idx>(oy * g.stride + ki) - static_cast<idx>(g.pad);
                const idx ix = static_cast<idx>(ox * g.stride + kj) - static_cast<idx>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<idx>(g.in_h) ||
                    ix >= static_cast<idx>(g.in_w))
                  continue;
                const std::size_t wi =
                    ((oc * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj;
                const std::size_t xi = ((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix;
                dw[wi] += d * x[xi];
                if (!dx.empty()) dx[xi] += d * w[wi];
              }
        }
}

template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t c = 0; c < g.channels; ++c)
      for (std::size_t oy = 0; oy < g.out_h; ++oy)
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          bool first = true;
          T best{};
          std::size_t arg = 0;
          for (std::size_t i = 0; i < g.size; ++i)
            for (std::size_t j = 0; j < g.size; ++j) {
              const std::size_t xi =
                  ((n * g.channels + c) * g.in_h + oy * g.stride + i) * g.in_w + ox * g.stride + j;
              if (first || x[xi] > best) {
                best = x[xi];
                arg = xi;
                first = false;
              }
            }
          const std::size_t o = ((n * g.channels + c) * g.out_h + oy) * g.out_w + ox;
          y[o] = best;
          argmax[o] = arg;
        }
}

template <typename T>
void maxpool_backward(const PoolGeometry&, std::span<const std::size_t> argmax,
                      std::span<const T> dy, std::span<T> dx) {
  std::fill(dx.begin(), dx.end(), T{});
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
}

template <typename T>
void dense_forward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y) {
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t u = 0; u < g.out; ++u) {
      T s = b[u];
      for (std::size_t i = 0; i < g.in; ++i) s += w[u * g.in + i] * x[n * g.in + i];
      y[n * g.out + u] = s;
    }
}

template <typename T>
void dense_backward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db) {
  std::fill(dw.begin(), dw.end(), T{});
  std::fill(db.begin(), db.end(), T{});
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), T{});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t u = 0; u < g.out; ++u) {
      const T d = dy[n * g.out + u];
      db[u] += d;
      for (std::size_t i = 0; i < g.in; ++i) {
        dw[u * g.in + i] += d * x[n * g.in + i];
        if (!dx.empty()) dx[n * g.in + i] += d * w[u * g.in + i];
      }
    }
}

void squared_distances(std::span<const double> queries, std::size_t n_queries,
                       std::span<const double> base, std::size_t n_base, std::size_t dim,
                       std::span<double> out) {
  for (std::size_t q = 0; q < n_queries; ++q)
    for (std::size_t j = 0; j < n_base; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = queries[q * dim + i] - base[j * dim + i];
        s += d * d;
      }
      out[q * n_base + j] = s;
    }
}

void nearest_centroid(std::span<const double> points, std::size_t n_points,
                      std::span<const double> centroids, std::size_t n_centroids,
                      std::size_t dim, std::span<std::uint32_t> assignment,
                      std::span<double> distance) {
  for (std::size_t i = 0; i < n_points; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < n_centroids; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = points[i * dim + k] - centroids[c * dim + k];
        s += d * d;
      }
      if (s < best) {
        best = s;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    assignment[i] = arg;
    distance[i] = best;
  }
}

}  // namespace reference

#define DOCSTYLE_INSTANTIATE(NS, T)                                                           \
  template void NS::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,                \
                                      std::span<const T>, std::span<const T>, std::span<T>);  \
  template void NS::conv2d_backward<T>(const ConvGeometry&, std::span<const T>,               \
                                       std::span<const T>, std::span<const T>, std::span<T>,  \
                                       std::span<T>, std::span<T>);                           \
  template void NS::maxpool_forward<T>(const PoolGeometry&, std::span<const T>, std::span<T>, \
                                       std::span<std::size_t>);                               \
  template void NS::maxpool_backward<T>(const PoolGeometry&, std::span<const std::size_t>,    \
                                        std::span<const T>, std::span<T>);                    \
  template void NS::dense_forward<T>(const DenseGeometry&, std::span<const T>,                \
                                     std::span<const T>, std::span<const T>, std::span<T>);   \
  template void NS::dense_backward<T>(const DenseGeometry&, std::span<const T>,               \
                                      std::span<const T>, std::span<const T>, std::span<T>,   \
                                      std::span<T>, std::span<T>);

namespace prod = ::docstyle::kernels;
namespace ref = ::docstyle::kernels::reference;
DOCSTYLE_INSTANTIATE(prod, float)
DOCSTYLE_INSTANTIATE(prod, double)
DOCSTYLE_INSTANTIATE(ref, float)
DOCSTYLE_INSTANTIATE(ref, double)

#undef DOCSTYLE_INSTANTIATE

}  // namespace docstyle::kernels
