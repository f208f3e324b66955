#pragma once

// Hot loops shared by the CNN layers, k-means and retrieval.
//
// docstyle::kernels holds the production versions. They parallelize with
// OpenMP only over independent outputs (samples, output units, query rows,
// weight elements), and every reduction runs in a fixed index order inside a
// single thread, so results are bit-identical for any thread count.
//
// docstyle::kernels::reference holds straightforward serial loops with the
// same signatures. They are kept for tests and benchmarks; they agree with
// the production kernels up to floating-point summation order.

#include <cstddef>
#include <cstdint>
#include <span>

namespace docstyle::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 1;
  std::size_t out_w = 1;

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
  std::size_t out_plane() const { return out_h * out_w; }
  std::size_t in_sample() const { return in_channels * in_h * in_w; }
  std::size_t out_sample() const { return out_channels * out_h * out_w; }
};

struct PoolGeometry {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t size = 1;
  std::size_t stride = 1;
  std::size_t out_h = 1;
  std::size_t out_w = 1;
};

struct DenseGeometry {
  std::size_t batch = 1;
  std::size_t in = 1;
  std::size_t out = 1;
};

// Weights are [out_channels, in_channels, kernel_h, kernel_w]; cross-correlation.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y);

// dx may be empty to skip the input gradient. dw and db are overwritten.
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);

// argmax receives flat input indices; ties go to the lowest flat index.
template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax);

template <typename T>
void maxpool_backward(const PoolGeometry& g, std::span<const std::size_t> argmax,
                      std::span<const T> dy, std::span<T> dx);

// Weights are [out, in].
template <typename T>
void dense_forward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y);

// dx may be empty. dw and db are overwritten.
template <typename T>
void dense_backward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);

// out[i * n_base + j] = squared Euclidean distance between query row i and base row j.
void squared_distances(std::span<const double> queries, std::size_t n_queries,
                       std::span<const double> base, std::size_t n_base, std::size_t dim,
                       std::span<double> out);

// Index of the closest centroid per point (lowest index on ties) and its squared distance.
void nearest_centroid(std::span<const double> points, std::size_t n_points,
                      std::span<const double> centroids, std::size_t n_centroids,
                      std::size_t dim, std::span<std::uint32_t> assignment,
                      std::span<double> distance);

double squared_distance(const double* a, const double* b, std::size_t dim);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> b, std::span<T> y);
template <typename T>
void conv2d_backward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);
template <typename T>
void maxpool_forward(const PoolGeometry& g, std::span<const T> x, std::span<T> y,
                     std::span<std::size_t> argmax);
template <typename T>
void maxpool_backward(const PoolGeometry& g, std::span<const std::size_t> argmax,
                      std::span<const T> dy, std::span<T> dx);
template <typename T>
void dense_forward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                   std::span<const T> b, std::span<T> y);
template <typename T>
void dense_backward(const DenseGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> dy, std::span<T> dx, std::span<T> dw, std::span<T> db);
void squared_distances(std::span<const double> queries, std::size_t n_queries,
                       std::span<const double> base, std::size_t n_base, std::size_t dim,
                       std::span<double> out);
void nearest_centroid(std::span<const double> points, std::size_t n_points,
                      std::span<const double> centroids, std::size_t n_centroids,
                      std::size_t dim, std::span<std::uint32_t> assignment,
                      std::span<double> distance);

}  // namespace reference

// Thread-count control shared by the CLI and tests.
int max_threads();
void set_threads(int n);

}  // namespace docstyle::kernels
