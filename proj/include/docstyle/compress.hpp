#pragma once
// L2 normalization, PCA and the region-ensemble descriptor.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "docstyle/features.hpp"

namespace docstyle {

inline constexpr double kZeroNorm = 1e-12;

// Scales v to unit length in place. Returns false (and leaves v untouched)
// when the norm is <= 1e-12.
bool l2_normalize(std::span<double> v);
bool l2_normalize(std::span<float> v);

// Row-wise; returns the number of zero-norm rows left unchanged.
std::size_t l2_normalize_rows(FeatureMatrix& m);

struct PcaModel {
  std::size_t input_dim = 0;   // D
  std::size_t output_dim = 0;  // d
  std::vector<double> mean;         // D
  std::vector<double> basis;        // D x d row-major; column j is component j
  std::vector<double> eigenvalues;  // d, descending
  double total_variance = 0.0;      // trace of the covariance

  double captured_variance() const;
  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

// Rows of X (N x D, row-major). Uses the D x D covariance when D < N and
// the N x N Gram matrix of the centered rows otherwise; both are
// diagonalized with cyclic Jacobi. Each basis column's largest-magnitude
// entry is made positive (lowest index on ties).
PcaModel pca_fit(std::span<const double> x, std::size_t n, std::size_t dim, std::size_t d);
PcaModel pca_fit(const FeatureMatrix& m, std::size_t d);

// (X - mean) * basis.
std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x, std::size_t n);
FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& m);

// The leading d components of a fitted model.
PcaModel pca_truncate(const PcaModel& model, std::size_t d);

// DSPCA1: magic, D, d (u32), mean, basis, eigenvalues as f64, then the
// total variance.
void save_pca(const std::filesystem::path& path, const PcaModel& model);
PcaModel load_pca(const std::filesystem::path& path);

struct EnsembleDescriptor {
  std::vector<std::string> regions;
  std::vector<std::vector<double>> parts;
  std::vector<double> values;
};

struct RegionInput {
  std::string region;
  std::span<const double> vector;
  const PcaModel* model = nullptr;
};

// L2 -> project -> L2 per region, concatenated in the fixed region order.
// A zero region vector yields an all-zero slot.
EnsembleDescriptor build_ensemble_descriptor(std::span<const RegionInput> inputs,
                                             std::size_t d_each);

// Matrix form: one feature matrix and model per region, rows aligned.
FeatureMatrix build_ensemble_features(std::span<const FeatureMatrix> regions,
                                      std::span<const PcaModel> models, std::size_t d_each);

}  // namespace docstyle
