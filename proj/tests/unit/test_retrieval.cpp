#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docstyle/error.hpp"
#include "docstyle/retrieval.hpp"
#include "test_util.hpp"

using namespace docstyle;
using docstyle::testing::labelled_blobs;

namespace {

Ranking pattern(std::initializer_list<int> rel, std::size_t relevant_total) {
  Ranking r;
  r.query_label = 0;
  r.relevant_total = relevant_total;
  std::size_t i = 0;
  for (int b : rel) r.neighbors.push_back({i++, 0.0, b != 0});
  return r;
}

// Full sort by (squared distance, id) with a plain loop.
std::vector<std::size_t> brute_order(const FeatureMatrix& index, std::span<const float> q) {
  std::vector<double> d(index.rows);
  for (std::size_t j = 0; j < index.rows; ++j) {
    double s = 0;
    for (std::size_t c = 0; c < index.cols; ++c) {
      const double diff = static_cast<double>(q[c]) - static_cast<double>(index.values[j * index.cols + c]);
      s += diff * diff;
    }
    d[j] = s;
  }
  std::vector<std::size_t> order(index.rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return d[a] != d[b] ? d[a] < d[b] : index.ids[a] < index.ids[b];
  });
  return order;
}

// AP at cutoff n under the truncated denominator min(R, n).
double brute_ap(const std::vector<int>& rel, std::size_t relevant_total, std::size_t n) {
  double sum = 0;
  int hits = 0;
  for (std::size_t i = 0; i < n && i < rel.size(); ++i) {
    if (rel[i]) sum += static_cast<double>(++hits) / static_cast<double>(i + 1);
  }
  const std::size_t denom = std::min(relevant_total, n);
  return denom ? sum / static_cast<double>(denom) : 0.0;
}

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("a stored descriptor retrieves itself first at distance 0") {
    const auto f = labelled_blobs(20, 3, 8, 2.0, 1);
    const Index idx(f);
    const auto q = f.as_double();
    const auto r = knn(idx, std::span<const double>(q).subspan(7 * 8, 8), 5, f.labels[7]);
    CHECK(r.neighbors[0].item == 7);
    CHECK(r.neighbors[0].distance == 0.0);
    CHECK(r.neighbors[0].relevant);
  }

  TEST_CASE("k larger than the index returns every item") {
    const auto f = labelled_blobs(2, 2, 3, 1.0, 2);
    const Index idx(f);
    const std::vector<double> q(3, 0.0);
    CHECK(knn(idx, q, 100).neighbors.size() == 4);
    CHECK_THROWS_AS(knn(idx, std::vector<double>(4), 1), ShapeError);
    CHECK_THROWS_AS(knn(Index(), q, 1), InvalidArgument);
    CHECK_THROWS_AS(knn(idx, q, 0), InvalidArgument);
  }

  TEST_CASE("rankings match a brute-force full sort on 200 random 16-dim points") {
    const auto f = labelled_blobs(50, 4, 16, 0.5, 3);
    const Index idx(f);
    const auto queries = labelled_blobs(10, 4, 16, 0.5, 4, "q");
    const auto all = knn_all(idx, queries, 200);
    for (std::size_t i = 0; i < queries.rows; ++i) {
      const auto order = brute_order(f, queries.row(i));
      REQUIRE(all[i].neighbors.size() == order.size());
      for (std::size_t j = 0; j < order.size(); ++j) {
        CHECK(all[i].neighbors[j].item == order[j]);
        if (j > 0) CHECK(all[i].neighbors[j].distance >= all[i].neighbors[j - 1].distance);
      }
    }
  }

  TEST_CASE("ties are broken by ascending item id") {
    FeatureMatrix f(3, 1);
    f.values = {1, -1, 1};
    f.ids = {"b", "c", "a"};
    f.labels = {0, 0, 0};
    const auto r = knn(Index(f), std::vector<double>{0.0}, 3);
    CHECK(r.neighbors[0].item == 2);
    CHECK(r.neighbors[1].item == 0);
    CHECK(r.neighbors[2].item == 1);
  }

  TEST_CASE("duplicate ids are rejected") {
    FeatureMatrix f(2, 1);
    f.ids = {"x", "x"};
    CHECK_THROWS_AS(Index{f}, InvalidArgument);
  }

  TEST_CASE("average precision examples") {
    CHECK(average_precision(pattern({1, 1, 1}, 5), ApMode::Truncated) == 1.0);
    const auto r = pattern({1, 0, 1}, 5);
    CHECK(average_precision(r, ApMode::RetrievedRelevant) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK(average_precision(r, ApMode::Truncated) == doctest::Approx(5.0 / 9.0).epsilon(1e-15));
    CHECK(average_precision(r, ApMode::Strict) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(average_precision(pattern({0, 0, 0}, 5), ApMode::Truncated) == 0.0);
    CHECK(average_precision(pattern({0, 0}, 0), ApMode::Strict) == 0.0);
    CHECK(average_precision(r, ApMode::Truncated, 1) == 1.0);
    for (ApMode m : {ApMode::Truncated, ApMode::Strict, ApMode::RetrievedRelevant}) {
      CHECK(ap_mode_from_name(ap_mode_name(m)) == m);
    }
  }

  TEST_CASE("swapping an irrelevant item above a relevant one never increases AP") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t n = 2 + rng.below(10);
      Ranking r;
      r.query_label = 0;
      for (std::size_t i = 0; i < n; ++i) r.neighbors.push_back({i, 0.0, rng.bernoulli(0.5)});
      r.relevant_total = n + rng.below(5);
      const std::size_t i = rng.below(n - 1);
      if (!(r.neighbors[i].relevant && !r.neighbors[i + 1].relevant)) continue;
      Ranking worse = r;
      std::swap(worse.neighbors[i], worse.neighbors[i + 1]);
      for (ApMode m : {ApMode::Truncated, ApMode::Strict, ApMode::RetrievedRelevant}) {
        CHECK(average_precision(worse, m) <= average_precision(r, m) + 1e-15);
      }
    }
  }

  TEST_CASE("mAP matches a brute-force recomputation on 50 queries x 500 items") {
    const auto items = labelled_blobs(100, 5, 12, 0.4, 6);
    const auto queries = labelled_blobs(10, 5, 12, 0.4, 7, "q");
    const Index idx(items);
    const std::size_t k = 25;
    const auto curve = map_at_k(queries, idx, k);
    REQUIRE(curve.size() == k);
    for (std::size_t j = 1; j <= k; ++j) {
      double sum = 0;
      for (std::size_t q = 0; q < queries.rows; ++q) {
        const auto order = brute_order(items, queries.row(q));
        std::vector<int> rel;
        for (auto o : order) rel.push_back(items.labels[o] == queries.labels[q]);
        sum += brute_ap(rel, 100, j);
      }
      CHECK(std::abs(curve[j - 1] - sum / 50.0) < 1e-12);
    }
  }

  TEST_CASE("mAP@1 is mean precision@1 and a single query's curve is its AP curve") {
    const auto items = labelled_blobs(30, 3, 5, 0.5, 8);
    const auto queries = labelled_blobs(5, 3, 5, 0.5, 9, "q");
    const Index idx(items);
    const auto rankings = knn_all(idx, queries, 10);
    double p1 = 0;
    for (const auto& r : rankings) p1 += r.neighbors[0].relevant;
    CHECK(map_at_k(queries, idx, 10)[0] == doctest::Approx(p1 / 15.0).epsilon(1e-15));

    FeatureMatrix one(1, 5);
    std::copy(queries.row(0).begin(), queries.row(0).end(), one.values.begin());
    one.ids = {"solo"};
    one.labels = {queries.labels[0]};
    const auto curve = map_at_k(one, idx, 10);
    for (std::size_t j = 0; j < 10; ++j) CHECK(curve[j] == average_precision(rankings[0], ApMode::Truncated, j + 1));
    for (double v : curve) CHECK((v >= 0.0 && v <= 1.0));
  }

  TEST_CASE("rankings are invariant to a joint positive scaling") {
    auto items = labelled_blobs(40, 4, 6, 0.5, 10);
    auto queries = labelled_blobs(5, 4, 6, 0.5, 11, "q");
    const auto before = knn_all(Index(items), queries, 20);
    for (auto& v : items.values) v *= 4.0f;  // exact in binary floating point
    for (auto& v : queries.values) v *= 4.0f;
    const auto after = knn_all(Index(items), queries, 20);
    for (std::size_t q = 0; q < before.size(); ++q)
      for (std::size_t j = 0; j < 20; ++j) CHECK(before[q].neighbors[j].item == after[q].neighbors[j].item);
  }

  TEST_CASE("distances are zero on the diagonal and symmetric") {
    const auto f = labelled_blobs(10, 2, 7, 1.0, 12);
    const Index idx(f);
    const auto x = f.as_double();
    for (std::size_t a = 0; a < 20; ++a) {
      const auto ra = knn(idx, std::span<const double>(x).subspan(a * 7, 7), 20);
      for (const auto& nb : ra.neighbors) {
        const auto rb = knn(idx, std::span<const double>(x).subspan(nb.item * 7, 7), 20);
        const auto back = std::find_if(rb.neighbors.begin(), rb.neighbors.end(), [&](const Neighbor& n) { return n.item == a; });
        CHECK(std::abs(back->distance - nb.distance) < 1e-12);
        if (nb.item == a) CHECK(nb.distance == 0.0);
      }
    }
  }

  TEST_CASE("confusion on tight clusters is the identity and rows sum to one") {
    const auto items = labelled_blobs(20, 4, 3, 100.0, 13);
    const auto queries = labelled_blobs(3, 4, 3, 100.0, 14, "q");
    const auto m = retrieval_confusion(queries, Index(items), 5, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(m[i][j] == doctest::Approx(i == j ? 1.0 : 0.0));

    const auto noisy = labelled_blobs(20, 4, 3, 0.3, 15);
    const auto mq = retrieval_confusion(queries, Index(noisy), 7, 5);
    for (std::size_t i = 0; i < 5; ++i) {
      const double s = std::accumulate(mq[i].begin(), mq[i].end(), 0.0);
      CHECK((std::abs(s - 1.0) < 1e-9 || (i == 4 && s == 0.0)));
    }
  }

  TEST_CASE("three-query toy confusion matches the hand count") {
    // Index on a line: a0 = 0, a1 = 1 (label 0); b0 = 10, b1 = 11 (label 1).
    FeatureMatrix items(4, 1);
    items.values = {0, 1, 10, 11};
    items.ids = {"a0", "a1", "b0", "b1"};
    items.labels = {0, 0, 1, 1};
    FeatureMatrix q(3, 1);
    q.values = {0.2f, 4.0f, 10.5f};
    q.ids = {"q0", "q1", "q2"};
    q.labels = {0, 0, 1};
    // k = 2: q0 -> a0, a1; q1 -> a1, a0; q2 -> b0, b1.
    const auto m = retrieval_confusion(q, Index(items), 2, 2);
    CHECK(m[0][0] == 1.0);
    CHECK(m[0][1] == 0.0);
    CHECK(m[1][1] == 1.0);
    // k = 3: q0 -> a0, a1, b0; q1 -> a1, a0, b0 => row 0 is (2/3, 1/3).
    // q2 -> b0, b1 (tied, id order), a1 => row 1 is (1/3, 2/3).
    const auto m3 = retrieval_confusion(q, Index(items), 3, 2);
    CHECK(m3[0][0] == doctest::Approx(2.0 / 3.0));
    CHECK(m3[0][1] == doctest::Approx(1.0 / 3.0));
    CHECK(m3[1][0] == doctest::Approx(1.0 / 3.0));
    CHECK(m3[1][1] == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("map CSV has one k,map row per cutoff") {
    const std::vector<double> curve(10, 0.5);
    const std::string csv = map_csv(curve);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
    CHECK(csv.rfind("k,map\n", 0) == 0);
  }
}
