#pragma once
// Random forest with Gini splits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "docstyle/features.hpp"

namespace docstyle {

struct ForestConfig {
  std::size_t trees = 500;
  std::size_t features_per_split = 0;  // 0: round(sqrt(D))
  std::size_t max_depth = 0;           // 0: unlimited
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 1;

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x[feature] <= threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::vector<std::uint32_t> counts;  // leaves only: training samples per class

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Nodes are stored in pre-order; node 0 is the root.
struct Tree {
  std::vector<TreeNode> nodes;
  const TreeNode& leaf_for(std::span<const float> x) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct Forest {
  ForestConfig config;  // features_per_split resolved
  std::size_t dim = 0;
  std::size_t n_classes = 0;
  std::vector<Tree> trees;
  bool has_oob = false;
  double oob_accuracy = 0.0;

  friend bool operator==(const Forest&, const Forest&) = default;
};

std::size_t default_features_per_split(std::size_t dim);

// x is N x D row-major; labels in [0, n_classes).
Forest forest_train(std::span<const float> x, std::size_t n, std::size_t dim,
                    std::span<const int> labels, std::size_t n_classes, const ForestConfig& config);
Forest forest_train(const FeatureMatrix& m, std::size_t n_classes, const ForestConfig& config);

struct ForestPrediction {
  int label = 0;
  std::vector<double> probabilities;
};

ForestPrediction forest_predict(const Forest& f, std::span<const float> x);
std::vector<int> forest_predict_all(const Forest& f, const FeatureMatrix& m);

// DSRF1: magic, config header, D, classes, OOB, then trees in pre-order.
void save_forest(const std::filesystem::path& path, const Forest& f);
Forest load_forest(const std::filesystem::path& path);

}  // namespace docstyle
