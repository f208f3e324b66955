#include <doctest.h>

#include <cmath>
#include <numeric>

#include "docstyle/error.hpp"
#include "docstyle/forest.hpp"
#include "test_util.hpp"

using namespace docstyle;
using docstyle::testing::TempDir;

namespace {

// Four Gaussian clusters at (+-1, +-1); label is the XOR of the signs.
FeatureMatrix xor_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix f(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = static_cast<int>(i % 2), b = static_cast<int>((i / 2) % 2);
    f.values[2 * i] = static_cast<float>((a ? 1.0 : -1.0) + 0.3 * rng.normal());
    f.values[2 * i + 1] = static_cast<float>((b ? 1.0 : -1.0) + 0.3 * rng.normal());
    f.labels[i] = a ^ b;
    f.ids[i] = "x" + std::to_string(i);
  }
  return f;
}

double accuracy(const Forest& forest, const FeatureMatrix& m) {
  const auto pred = forest_predict_all(forest, m);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < m.rows; ++i) ok += pred[i] == m.labels[i];
  return static_cast<double>(ok) / static_cast<double>(m.rows);
}

}  // namespace

TEST_SUITE("forest") {
  TEST_CASE("XOR clusters with 500 trees") {
    ForestConfig cfg;
    cfg.seed = 3;
    const auto f = forest_train(xor_data(400, 1), 2, cfg);
    CHECK(f.trees.size() == 500);
    CHECK(accuracy(f, xor_data(400, 2)) > 0.9);
  }

  TEST_CASE("default features per split is round(sqrt(D))") {
    CHECK(default_features_per_split(300) == 17);
    CHECK(default_features_per_split(6300) == 79);
    CHECK(default_features_per_split(1) == 1);
    CHECK(default_features_per_split(2) == 1);
    const auto f = forest_train(docstyle::testing::labelled_blobs(5, 2, 300, 1.0, 1), 2, ForestConfig{3});
    CHECK(f.config.features_per_split == 17);
  }

  TEST_CASE("single-class data predicts that class everywhere") {
    auto m = docstyle::testing::labelled_blobs(20, 1, 4, 1.0, 4);
    for (auto& l : m.labels) l = 2;
    ForestConfig cfg;
    cfg.trees = 20;
    const auto f = forest_train(m, 3, cfg);
    CHECK(accuracy(f, m) == 1.0);
    for (const auto& t : f.trees) CHECK(t.nodes.size() == 1);
  }

  TEST_CASE("a single tree's probabilities are its normalized leaf histogram") {
    ForestConfig cfg;
    cfg.trees = 1;
    cfg.max_depth = 2;
    const auto data = xor_data(100, 5);
    const auto f = forest_train(data, 2, cfg);
    for (std::size_t i = 0; i < 20; ++i) {
      const auto p = forest_predict(f, data.row(i));
      const auto& leaf = f.trees[0].leaf_for(data.row(i));
      const double total = std::accumulate(leaf.counts.begin(), leaf.counts.end(), 0.0);
      for (std::size_t c = 0; c < 2; ++c) CHECK(p.probabilities[c] == doctest::Approx(leaf.counts[c] / total));
      CHECK(std::abs(p.probabilities[0] + p.probabilities[1] - 1.0) < 1e-9);
    }
  }

  TEST_CASE("without bootstrap and depth limit the forest memorizes its training set") {
    ForestConfig cfg;
    cfg.trees = 5;
    cfg.bootstrap = false;
    const auto m = docstyle::testing::labelled_blobs(40, 4, 5, 0.2, 6);
    const auto f = forest_train(m, 4, cfg);
    CHECK(accuracy(f, m) == 1.0);
    CHECK_FALSE(f.has_oob);
  }

  TEST_CASE("structure invariants: feature indices and leaf counts") {
    ForestConfig cfg;
    cfg.trees = 10;
    cfg.bootstrap = false;
    const auto m = docstyle::testing::labelled_blobs(25, 3, 6, 0.5, 7);
    const auto f = forest_train(m, 3, cfg);
    for (const auto& t : f.trees) {
      std::size_t leaf_total = 0;
      for (const auto& n : t.nodes) {
        if (n.is_leaf()) {
          leaf_total += std::accumulate(n.counts.begin(), n.counts.end(), std::size_t{0});
        } else {
          CHECK(static_cast<std::size_t>(n.feature) < f.dim);
        }
      }
      CHECK(leaf_total == m.rows);
    }
  }

  TEST_CASE("training is deterministic in the seed") {
    ForestConfig cfg;
    cfg.trees = 30;
    cfg.seed = 9;
    const auto m = docstyle::testing::labelled_blobs(30, 3, 8, 0.5, 8);
    const auto a = forest_train(m, 3, cfg);
    const auto b = forest_train(m, 3, cfg);
    CHECK(a == b);
    cfg.seed = 10;
    CHECK_FALSE(forest_train(m, 3, cfg) == a);
  }

  TEST_CASE("predictions are invariant to strictly monotone per-feature transforms") {
    ForestConfig cfg;
    cfg.trees = 50;
    cfg.seed = 11;
    const auto m = docstyle::testing::labelled_blobs(40, 3, 6, 0.6, 12);
    auto t = m;
    for (std::size_t i = 0; i < t.rows; ++i)
      for (std::size_t j = 0; j < t.cols; ++j) {
        float& v = t.values[i * t.cols + j];
        v = j % 2 ? std::exp(v) : v * v * v + 2.0f * v;
      }
    const auto fa = forest_train(m, 3, cfg);
    const auto fb = forest_train(t, 3, cfg);
    // Training rows share split membership exactly under the transform.
    CHECK(forest_predict_all(fa, m) == forest_predict_all(fb, t));
  }

  TEST_CASE("out-of-bag accuracy is reported in [0, 1]") {
    ForestConfig cfg;
    cfg.trees = 40;
    const auto f = forest_train(xor_data(200, 13), 2, cfg);
    CHECK(f.has_oob);
    CHECK(f.oob_accuracy >= 0.0);
    CHECK(f.oob_accuracy <= 1.0);
    CHECK(f.oob_accuracy > 0.8);
  }

  TEST_CASE("input validation") {
    const auto m = xor_data(10, 14);
    CHECK_THROWS_AS(forest_train(m, 1, ForestConfig{}), InvalidArgument);  // label 1 out of range
    ForestConfig cfg;
    cfg.features_per_split = 3;
    CHECK_THROWS_AS(forest_train(m, 2, cfg), InvalidArgument);
    CHECK_THROWS_AS(forest_train(std::span<const float>{}, 0, 2, std::span<const int>{}, 2, ForestConfig{}),
                    InvalidArgument);
    ForestConfig small;
    small.trees = 3;
    const auto f = forest_train(m, 2, small);
    CHECK_THROWS_AS(forest_predict(f, std::vector<float>(3)), ShapeError);
  }

  TEST_CASE("forest files round-trip") {
    TempDir dir("rf");
    ForestConfig cfg;
    cfg.trees = 7;
    const auto f = forest_train(xor_data(60, 15), 2, cfg);
    save_forest(dir / "f.dsrf", f);
    CHECK(load_forest(dir / "f.dsrf") == f);
  }
}
