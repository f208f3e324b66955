#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace docstyle {

// N x D descriptors with aligned item ids and label indices (-1 = unlabeled).
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;  // row-major
  std::vector<std::string> ids;
  std::vector<int> labels;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n, std::size_t d)
      : rows(n), cols(d), values(n * d, 0.0f), ids(n), labels(n, -1) {}

  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  // Row values widened to double, row-major.
  std::vector<double> as_double() const { return {values.begin(), values.end()}; }

  // Throws ShapeError when ids/labels/values disagree with rows/cols.
  void validate() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Stacks matrices with equal column counts.
FeatureMatrix concat_rows(std::span<const FeatureMatrix> parts);

// DSFEA1: magic, N, D (u32), row-major f32 values, N length-prefixed ids,
// N i32 labels. All little-endian.
void save_features(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix load_features(const std::filesystem::path& path);

}  // namespace docstyle
