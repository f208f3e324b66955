#include "docstyle/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "docstyle/error.hpp"
#include "docstyle/kernels.hpp"

namespace docstyle {

std::string_view ap_mode_name(ApMode m) {
  switch (m) {
    case ApMode::Truncated: return "truncated";
    case ApMode::Strict: return "strict";
    case ApMode::RetrievedRelevant: return "retrieved";
  }
  return "truncated";
}

ApMode ap_mode_from_name(std::string_view name) {
  if (name == "truncated") return ApMode::Truncated;
  if (name == "strict") return ApMode::Strict;
  if (name == "retrieved") return ApMode::RetrievedRelevant;
  throw InvalidArgument("unknown AP mode '" + std::string(name) + "' (truncated|strict|retrieved)");
}

Index::Index(FeatureMatrix features) : features_(std::move(features)) {
  features_.validate();
  data_ = features_.as_double();
  std::vector<std::size_t> order(features_.rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return features_.ids[a] < features_.ids[b]; });
  id_rank_.resize(features_.rows);
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && features_.ids[order[r]] == features_.ids[order[r - 1]]) {
      throw InvalidArgument("index: duplicate item id '" + features_.ids[order[r]] + "'");
    }
    id_rank_[order[r]] = r;
  }
  for (int l : features_.labels) {
    if (l < 0) continue;
    if (static_cast<std::size_t>(l) >= label_counts_.size()) label_counts_.resize(l + 1, 0);
    ++label_counts_[l];
  }
}

std::size_t Index::label_count(int label) const {
  if (label < 0 || static_cast<std::size_t>(label) >= label_counts_.size()) return 0;
  return label_counts_[label];
}

namespace {

Ranking rank_from_distances(const Index& index, std::span<const double> sq, std::size_t k,
                            int query_label, std::string query_id) {
  const std::size_t n = index.size();
  const std::size_t top = std::min(k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto closer = [&](std::size_t a, std::size_t b) {
    if (sq[a] != sq[b]) return sq[a] < sq[b];
    return index.id_rank(a) < index.id_rank(b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(), closer);
  Ranking r;
  r.query_id = std::move(query_id);
  r.query_label = query_label;
  r.relevant_total = index.label_count(query_label);
  r.neighbors.reserve(top);
  const auto& labels = index.features().labels;
  for (std::size_t i = 0; i < top; ++i) {
    const std::size_t item = order[i];
    r.neighbors.push_back({item, std::sqrt(sq[item]), query_label >= 0 && labels[item] == query_label});
  }
  return r;
}

void check_query(const Index& index, std::size_t dim, std::size_t k) {
  if (index.size() == 0) throw InvalidArgument("knn: empty index");
  if (k < 1) throw InvalidArgument("knn: k must be >= 1");
  if (dim != index.dim()) {
    throw ShapeError("knn: query dim " + std::to_string(dim) + " != index dim " + std::to_string(index.dim()));
  }
}

}  // namespace

Ranking knn(const Index& index, std::span<const double> query, std::size_t k, int query_label,
            std::string query_id) {
  check_query(index, query.size(), k);
  std::vector<double> sq(index.size());
  for (std::size_t j = 0; j < index.size(); ++j) {
    sq[j] = kernels::squared_distance(query.data(), index.row(j).data(), index.dim());
  }
  return rank_from_distances(index, sq, k, query_label, std::move(query_id));
}

std::vector<Ranking> knn_all(const Index& index, const FeatureMatrix& queries, std::size_t k) {
  queries.validate();
  check_query(index, queries.cols, k);
  const auto q = queries.as_double();
  std::vector<Ranking> out(queries.rows);
#pragma omp parallel
  {
    std::vector<double> sq(index.size());
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(queries.rows); ++i) {
      const double* qv = q.data() + i * queries.cols;
      for (std::size_t j = 0; j < index.size(); ++j) {
        sq[j] = kernels::squared_distance(qv, index.row(j).data(), index.dim());
      }
      out[i] = rank_from_distances(index, sq, k, queries.labels[i], queries.ids[i]);
    }
  }
  return out;
}

double average_precision(const Ranking& r, ApMode mode, std::size_t cutoff) {
  const std::size_t n = cutoff == 0 ? r.neighbors.size() : std::min(cutoff, r.neighbors.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!r.neighbors[i].relevant) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  // The truncated denominator uses the nominal cutoff so that an index
  // smaller than k does not inflate AP.
  const std::size_t nominal = cutoff == 0 ? r.neighbors.size() : cutoff;
  std::size_t denom = 0;
  switch (mode) {
    case ApMode::Truncated: denom = std::min(r.relevant_total, nominal); break;
    case ApMode::Strict: denom = r.relevant_total; break;
    case ApMode::RetrievedRelevant: denom = hits; break;
  }
  return denom == 0 ? 0.0 : sum / static_cast<double>(denom);
}

std::vector<double> map_curve(std::span<const Ranking> rankings, std::size_t k, ApMode mode) {
  if (rankings.empty()) throw InvalidArgument("mAP: no queries");
  std::vector<double> curve(k, 0.0);
  for (const auto& r : rankings) {
    if (r.query_label < 0) throw InvalidArgument("mAP: query '" + r.query_id + "' is unlabeled");
    for (std::size_t j = 0; j < k; ++j) curve[j] += average_precision(r, mode, j + 1);
  }
  for (double& v : curve) v /= static_cast<double>(rankings.size());
  return curve;
}

std::vector<double> map_at_k(const FeatureMatrix& queries, const Index& index, std::size_t k, ApMode mode) {
  if (queries.rows == 0) throw InvalidArgument("mAP: no queries");
  const auto rankings = knn_all(index, queries, k);
  return map_curve(rankings, k, mode);
}

std::vector<std::vector<double>> retrieval_confusion(std::span<const Ranking> rankings,
                                                     const Index& index, std::size_t k,
                                                     std::size_t n_classes) {
  std::vector<std::vector<double>> m(n_classes, std::vector<double>(n_classes, 0.0));
  std::vector<std::size_t> per_label(n_classes, 0);
  const auto& labels = index.features().labels;
  for (const auto& r : rankings) {
    if (r.query_label < 0 || static_cast<std::size_t>(r.query_label) >= n_classes) {
      throw InvalidArgument("confusion: query label out of range");
    }
    const std::size_t n = std::min(k, r.neighbors.size());
    if (n == 0) continue;
    auto& row = m[r.query_label];
    for (std::size_t i = 0; i < n; ++i) {
      const int l = labels[r.neighbors[i].item];
      if (l < 0 || static_cast<std::size_t>(l) >= n_classes) {
        throw InvalidArgument("confusion: index label out of range");
      }
      row[l] += 1.0 / static_cast<double>(n);
    }
    ++per_label[r.query_label];
  }
  for (std::size_t i = 0; i < n_classes; ++i) {
    if (per_label[i] == 0) continue;
    for (double& v : m[i]) v /= static_cast<double>(per_label[i]);
  }
  return m;
}

std::vector<std::vector<double>> retrieval_confusion(const FeatureMatrix& queries, const Index& index,
                                                     std::size_t k, std::size_t n_classes) {
  if (queries.rows == 0) throw InvalidArgument("confusion: no queries");
  const auto rankings = knn_all(index, queries, k);
  return retrieval_confusion(rankings, index, k, n_classes);
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string map_csv(std::span<const double> curve) {
  std::string out = "k,map\n";
  for (std::size_t j = 0; j < curve.size(); ++j) out += std::to_string(j + 1) + "," + fmt(curve[j]) + "\n";
  return out;
}

std::string confusion_csv(const std::vector<std::vector<double>>& m,
                          const std::vector<std::string>& label_names) {
  std::string out = "label";
  for (std::size_t j = 0; j < m.size(); ++j) {
    out += "," + (j < label_names.size() ? label_names[j] : std::to_string(j));
  }
  out += "\n";
  for (std::size_t i = 0; i < m.size(); ++i) {
    out += i < label_names.size() ? label_names[i] : std::to_string(i);
    for (double v : m[i]) out += "," + fmt(v);
    out += "\n";
  }
  return out;
}

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, std::span<const Series> series) {
  constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 55;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (first) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  y0 = std::min(y0, 0.0);
  if (y1 <= y0) y1 = y0 + 1;
  if (x1 <= x0) x1 = x0 + 1;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double yv = y0 + (y1 - y0) * t / 5.0;
    const double xv = x0 + (x1 - x0) * t / 5.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv).substr(0, 5) << "</text>\n";
    o << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << fmt(xv).substr(0, 5) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << (T + H - B) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 7];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      o << sx(series[s].x[i]) << "," << sy(series[s].y[i]) << " ";
    }
    o << "\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(s);
    o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[s].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace docstyle
