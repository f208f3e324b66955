#include "docstyle/forest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"
#include "docstyle/random.hpp"

namespace docstyle {

const TreeNode& Tree::leaf_for(std::span<const float> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& nd = nodes[i];
    i = static_cast<double>(x[static_cast<std::size_t>(nd.feature)]) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[i];
}

std::size_t default_features_per_split(std::size_t dim) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(dim)))));
}

namespace {

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double score = 0.0;  // sum over children of n * gini, lower is better
};

class TreeBuilder {
 public:
  TreeBuilder(std::span<const float> x, std::size_t dim, std::span<const int> labels,
              std::size_t n_classes, const ForestConfig& cfg, Rng& rng)
      : x_(x), dim_(dim), labels_(labels), k_(n_classes), cfg_(cfg), rng_(rng),
        features_(dim), left_(n_classes), total_(n_classes) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree build(std::vector<std::size_t> samples) {
    tree_.nodes.clear();
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(std::vector<std::size_t>& samples, std::size_t depth) {
    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::vector<std::uint32_t> counts(k_, 0);
    for (std::size_t s : samples) ++counts[labels_[s]];
    const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    const bool capped = cfg_.max_depth > 0 && depth >= cfg_.max_depth;
    Split best;
    if (!pure && !capped && samples.size() >= 2 * cfg_.min_samples_leaf) best = find_split(samples);
    if (!best.found) {
      tree_.nodes[id].counts = std::move(counts);
      return id;
    }
    std::vector<std::size_t> lo, hi;
    for (std::size_t s : samples) {
      (static_cast<double>(x_[s * dim_ + best.feature]) <= best.threshold ? lo : hi).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    tree_.nodes[id].feature = static_cast<std::int32_t>(best.feature);
    tree_.nodes[id].threshold = best.threshold;
    const std::uint32_t l = grow(lo, depth + 1);
    const std::uint32_t r = grow(hi, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  // Candidate features are drawn without replacement; if none of the first
  // features_per_split admits a valid split, drawing continues (as long as
  // features remain) until one does.
  Split find_split(const std::vector<std::size_t>& samples) {
    const std::size_t mtry = cfg_.features_per_split;
    Split best;
    std::vector<std::size_t> evaluated;
    std::size_t drawn = 0;
    std::size_t useful = 0;
    while (drawn < dim_ && (drawn < mtry || useful == 0)) {
      const std::size_t j = drawn + static_cast<std::size_t>(rng_.below(dim_ - drawn));
      std::swap(features_[drawn], features_[j]);
      evaluated.push_back(features_[drawn]);
      ++drawn;
      if (drawn >= mtry) {
        // Evaluate in ascending feature order so score ties go to the lowest index.
        std::sort(evaluated.begin(), evaluated.end());
        for (std::size_t f : evaluated) {
          if (evaluate(samples, f, best)) ++useful;
        }
        evaluated.clear();
      }
    }
    return best;
  }

  bool evaluate(const std::vector<std::size_t>& samples, std::size_t f, Split& best) {
    pairs_.clear();
    for (std::size_t s : samples) pairs_.emplace_back(x_[s * dim_ + f], labels_[s]);
    std::sort(pairs_.begin(), pairs_.end());
    if (pairs_.front().first == pairs_.back().first) return false;
    std::fill(left_.begin(), left_.end(), 0.0);
    std::fill(total_.begin(), total_.end(), 0.0);
    for (const auto& p : pairs_) total_[p.second] += 1.0;
    double sq_total = 0.0;
    for (double c : total_) sq_total += c * c;
    const double n = static_cast<double>(pairs_.size());
    const std::size_t min_leaf = cfg_.min_samples_leaf;
    double sq_left = 0.0, sq_right = sq_total;
    bool any = false;
    for (std::size_t i = 0; i + 1 < pairs_.size(); ++i) {
      const int c = pairs_[i].second;
      // Incremental sums of squared class counts on both sides.
      sq_left += 2.0 * left_[c] + 1.0;
      const double right_c = total_[c] - left_[c];
      sq_right -= 2.0 * right_c - 1.0;
      left_[c] += 1.0;
      if (pairs_[i].first == pairs_[i + 1].first) continue;
      const std::size_t nl = i + 1, nr = pairs_.size() - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      any = true;
      const double dl = static_cast<double>(nl), dr = n - dl;
      // n_l * gini_l + n_r * gini_r = n - sq_l / n_l - sq_r / n_r
      const double score = n - sq_left / dl - sq_right / dr;
      const double thr = 0.5 * (static_cast<double>(pairs_[i].first) + static_cast<double>(pairs_[i + 1].first));
      if (!best.found || score < best.score ||
          (score == best.score && (f < best.feature || (f == best.feature && thr < best.threshold)))) {
        best = {true, f, thr, score};
      }
    }
    return any;
  }

  std::span<const float> x_;
  std::size_t dim_;
  std::span<const int> labels_;
  std::size_t k_;
  const ForestConfig& cfg_;
  Rng& rng_;
  std::vector<std::size_t> features_;
  std::vector<double> left_, total_;
  std::vector<std::pair<float, int>> pairs_;
  Tree tree_;
};

}  // namespace

Forest forest_train(std::span<const float> x, std::size_t n, std::size_t dim,
                    std::span<const int> labels, std::size_t n_classes, const ForestConfig& config) {
  if (n == 0 || dim == 0) throw InvalidArgument("forest: empty training data");
  if (x.size() != n * dim || labels.size() != n) throw ShapeError("forest: data is not N x D with N labels");
  if (n_classes < 1) throw InvalidArgument("forest: need at least one class");
  if (config.trees < 1) throw InvalidArgument("forest: tree count must be >= 1");
  if (config.min_samples_leaf < 1) throw InvalidArgument("forest: min samples per leaf must be >= 1");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= n_classes) {
      throw InvalidArgument("forest: label " + std::to_string(l) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
  for (float v : x) {
    if (!std::isfinite(v)) throw InvalidArgument("forest: non-finite feature value");
  }
  Forest f;
  f.config = config;
  if (f.config.features_per_split == 0) f.config.features_per_split = default_features_per_split(dim);
  if (f.config.features_per_split > dim) {
    throw InvalidArgument("forest: features per split " + std::to_string(f.config.features_per_split) +
                          " exceeds D = " + std::to_string(dim));
  }
  f.dim = dim;
  f.n_classes = n_classes;
  f.trees.resize(config.trees);
  std::vector<std::vector<std::uint8_t>> in_bag(config.trees);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(config.trees); ++t) {
    Rng rng(derive_seed(config.seed, 0x7233, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> samples(n);
    if (config.bootstrap) {
      in_bag[t].assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        samples[i] = static_cast<std::size_t>(rng.below(n));
        in_bag[t][samples[i]] = 1;
      }
      std::sort(samples.begin(), samples.end());
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(x, dim, labels, n_classes, f.config, rng);
    f.trees[t] = builder.build(std::move(samples));
  }

  if (config.bootstrap) {
    std::size_t correct = 0, counted = 0;
    std::vector<double> votes(n_classes);
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(votes.begin(), votes.end(), 0.0);
      bool any = false;
      for (std::size_t t = 0; t < config.trees; ++t) {
        if (in_bag[t][i]) continue;
        const auto& leaf = f.trees[t].leaf_for(x.subspan(i * dim, dim));
        const double total = std::accumulate(leaf.counts.begin(), leaf.counts.end(), 0.0);
        for (std::size_t c = 0; c < n_classes; ++c) votes[c] += leaf.counts[c] / total;
        any = true;
      }
      if (!any) continue;
      ++counted;
      const auto arg = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      if (arg == labels[i]) ++correct;
    }
    f.has_oob = counted > 0;
    f.oob_accuracy = counted > 0 ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
  }
  return f;
}

Forest forest_train(const FeatureMatrix& m, std::size_t n_classes, const ForestConfig& config) {
  m.validate();
  return forest_train(m.values, m.rows, m.cols, m.labels, n_classes, config);
}

ForestPrediction forest_predict(const Forest& f, std::span<const float> x) {
  if (x.size() != f.dim) {
    throw ShapeError("forest: input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(f.dim));
  }
  ForestPrediction p;
  p.probabilities.assign(f.n_classes, 0.0);
  for (const auto& t : f.trees) {
    const auto& leaf = t.leaf_for(x);
    const double total = std::accumulate(leaf.counts.begin(), leaf.counts.end(), 0.0);
    for (std::size_t c = 0; c < f.n_classes; ++c) p.probabilities[c] += leaf.counts[c] / total;
  }
  for (double& v : p.probabilities) v /= static_cast<double>(f.trees.size());
  p.label = static_cast<int>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                             p.probabilities.begin());
  return p;
}

std::vector<int> forest_predict_all(const Forest& f, const FeatureMatrix& m) {
  std::vector<int> out(m.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m.rows); ++i) {
    out[i] = forest_predict(f, m.row(i)).label;
  }
  return out;
}

void save_forest(const std::filesystem::path& path, const Forest& f) {
  BinaryWriter w(path);
  w.magic("DSRF1");
  w.u32(static_cast<std::uint32_t>(f.config.trees));
  w.u32(static_cast<std::uint32_t>(f.config.features_per_split));
  w.u32(static_cast<std::uint32_t>(f.config.max_depth));
  w.u32(static_cast<std::uint32_t>(f.config.min_samples_leaf));
  w.u8(f.config.bootstrap ? 1 : 0);
  w.u64(f.config.seed);
  w.u32(static_cast<std::uint32_t>(f.dim));
  w.u32(static_cast<std::uint32_t>(f.n_classes));
  w.u8(f.has_oob ? 1 : 0);
  w.f64(f.oob_accuracy);
  w.u32(static_cast<std::uint32_t>(f.trees.size()));
  for (const auto& t : f.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& nd : t.nodes) {
      w.u8(nd.is_leaf() ? 1 : 0);
      if (nd.is_leaf()) {
        for (auto c : nd.counts) w.u32(c);
      } else {
        w.u32(static_cast<std::uint32_t>(nd.feature));
        w.f64(nd.threshold);
      }
    }
  }
  w.close();
}

namespace {

// Rebuilds child links from the pre-order sequence.
std::uint32_t link_preorder(Tree& t, std::size_t& pos, const std::filesystem::path& path) {
  if (pos >= t.nodes.size()) throw ParseError(path.string() + ": truncated tree");
  const auto id = static_cast<std::uint32_t>(pos++);
  if (!t.nodes[id].is_leaf()) {
    const std::uint32_t l = link_preorder(t, pos, path);
    const std::uint32_t r = link_preorder(t, pos, path);
    t.nodes[id].left = l;
    t.nodes[id].right = r;
  }
  return id;
}

}  // namespace

Forest load_forest(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("DSRF1");
  Forest f;
  f.config.trees = r.u32();
  f.config.features_per_split = r.u32();
  f.config.max_depth = r.u32();
  f.config.min_samples_leaf = r.u32();
  f.config.bootstrap = r.u8() != 0;
  f.config.seed = r.u64();
  f.dim = r.u32();
  f.n_classes = r.u32();
  f.has_oob = r.u8() != 0;
  f.oob_accuracy = r.f64();
  const std::size_t n_trees = r.u32();
  if (n_trees != f.config.trees || f.dim == 0 || f.n_classes == 0) {
    throw ParseError(path.string() + ": inconsistent forest header");
  }
  f.trees.resize(n_trees);
  for (auto& t : f.trees) {
    const std::size_t count = r.u32();
    t.nodes.resize(count);
    for (auto& nd : t.nodes) {
      if (r.u8() != 0) {
        nd.counts.resize(f.n_classes);
        for (auto& c : nd.counts) c = r.u32();
      } else {
        nd.feature = static_cast<std::int32_t>(r.u32());
        if (nd.feature < 0 || static_cast<std::size_t>(nd.feature) >= f.dim) {
          throw ParseError(path.string() + ": split feature out of range");
        }
        nd.threshold = r.f64();
      }
    }
    std::size_t pos = 0;
    link_preorder(t, pos, path);
    if (pos != t.nodes.size()) throw ParseError(path.string() + ": malformed tree");
  }
  r.expect_end();
  return f;
}

}  // namespace docstyle
