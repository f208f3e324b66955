#pragma once
// Exact Euclidean nearest-neighbor search and mean average precision.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docstyle/features.hpp"

namespace docstyle {

// Denominator of average precision at cutoff n, where R is the number of
// index items sharing the query's label:
//   Truncated          min(R, n)
//   Strict             R
//   RetrievedRelevant  relevant items among the top n
enum class ApMode { Truncated, Strict, RetrievedRelevant };

std::string_view ap_mode_name(ApMode m);
ApMode ap_mode_from_name(std::string_view name);

class Index {
 public:
  Index() = default;
  // Ids must be unique.
  explicit Index(FeatureMatrix features);

  std::size_t size() const { return features_.rows; }
  std::size_t dim() const { return features_.cols; }
  const FeatureMatrix& features() const { return features_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim(), dim()}; }
  // Position of item i when all ids are sorted ascending; used for ties.
  std::size_t id_rank(std::size_t i) const { return id_rank_[i]; }
  std::size_t label_count(int label) const;

 private:
  FeatureMatrix features_;
  std::vector<double> data_;
  std::vector<std::size_t> id_rank_;
  std::vector<std::size_t> label_counts_;
};

struct Neighbor {
  std::size_t item = 0;  // row in the index
  double distance = 0.0;
  bool relevant = false;
};

struct Ranking {
  std::string query_id;
  int query_label = -1;
  std::size_t relevant_total = 0;  // R
  std::vector<Neighbor> neighbors;
};

// Top-min(k, N) items by Euclidean distance, ties by ascending item id.
Ranking knn(const Index& index, std::span<const double> query, std::size_t k, int query_label = -1,
            std::string query_id = {});

// One ranking per query row, in query order.
std::vector<Ranking> knn_all(const Index& index, const FeatureMatrix& queries, std::size_t k);

// AP over the first `cutoff` neighbors (all of them when cutoff is 0).
double average_precision(const Ranking& r, ApMode mode, std::size_t cutoff = 0);

// Entry j: mean over queries of AP at cutoff j + 1. Queries must be labeled.
std::vector<double> map_at_k(const FeatureMatrix& queries, const Index& index, std::size_t k,
                             ApMode mode = ApMode::Truncated);
std::vector<double> map_curve(std::span<const Ranking> rankings, std::size_t k, ApMode mode);

// Row i: label distribution of the top-k retrievals, averaged over queries
// of label i. Rows for absent labels stay zero.
std::vector<std::vector<double>> retrieval_confusion(const FeatureMatrix& queries, const Index& index,
                                                     std::size_t k, std::size_t n_classes);
std::vector<std::vector<double>> retrieval_confusion(std::span<const Ranking> rankings,
                                                     const Index& index, std::size_t k,
                                                     std::size_t n_classes);

// "k,map" with one row per cutoff.
std::string map_csv(std::span<const double> curve);
// Header row of label names, then one row per true label.
std::string confusion_csv(const std::vector<std::vector<double>>& m,
                          const std::vector<std::string>& label_names);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal line chart with axes, ticks and a legend.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, std::span<const Series> series);

}  // namespace docstyle
