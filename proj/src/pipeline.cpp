#include "docstyle/pipeline.hpp"

#include <algorithm>

#include "docstyle/error.hpp"
#include "docstyle/random.hpp"

namespace docstyle {

GrayImage prepare_image(const GrayImage& img, const ImagePrep& prep) {
  if (prep.region) return region_image(img, *prep.region, prep.height, prep.width, prep.filter);
  return resize(img, prep.height, prep.width, prep.filter);
}

ImageSet make_image_set(const Manifest& m, std::span<const std::size_t> indices, const ImagePrep& prep) {
  ImageSet set;
  set.images = Tensor32({indices.size(), 1, prep.height, prep.width});
  set.labels.resize(indices.size());
  std::vector<std::string> errors(indices.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
    try {
      const GrayImage img = load_image(m.resolve(m.entries[indices[i]]));
      write_network_input(prepare_image(img, prep), set.images.slice0(static_cast<std::size_t>(i)));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
    set.labels[i] = m.entries[indices[i]].label;
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }
  return set;
}

void attach_items(FeatureMatrix& f, const Manifest& m, std::span<const std::size_t> indices) {
  if (f.rows != indices.size()) throw ShapeError("feature rows do not match item count");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    f.ids[i] = m.entries[indices[i]].path;
    f.labels[i] = m.entries[indices[i]].label;
  }
}

FeatureMatrix cnn_features(const Network& net, const Manifest& m, std::span<const std::size_t> indices,
                           const ImagePrep& prep, std::optional<std::size_t> tap) {
  const ImageSet set = make_image_set(m, indices, prep);
  FeatureMatrix f = extract_features(net, set.images, tap.value_or(first_fc_index(net.spec)));
  attach_items(f, m, indices);
  return f;
}

std::vector<LocalDescriptorSet> compute_descriptors(const Manifest& m, std::span<const std::size_t> indices,
                                                    const BowConfig& cfg) {
  std::vector<LocalDescriptorSet> out(indices.size());
  std::vector<std::string> errors(indices.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
    try {
      const GrayImage img = resize_antialiased(load_image(m.resolve(m.entries[indices[i]])),
                                               cfg.image_height, cfg.image_width);
      out[i] = dense_descriptors(img, cfg.patch, cfg.stride);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  return out;
}

KMeansResult fit_vocabulary(std::span<const LocalDescriptorSet> sets, const BowConfig& cfg, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (std::size_t i = 0; i < sets[s].count(); ++i) {
      if (cfg.skip_uniform && sets[s].uniform[i]) continue;
      pool.emplace_back(s, i);
    }
  if (pool.empty()) throw InvalidArgument("vocabulary: no informative descriptors");
  Rng rng(derive_seed(seed, 0x5a3b));
  // Partial Fisher-Yates: the first `take` entries become a uniform sample.
  const std::size_t take = std::min(cfg.sample, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  std::vector<float> data;
  data.reserve(take * kDescriptorDim);
  for (std::size_t i = 0; i < take; ++i) {
    const auto row = sets[pool[i].first].row(pool[i].second);
    data.insert(data.end(), row.begin(), row.end());
  }
  return kmeans_fit(data, take, kDescriptorDim, cfg.vocabulary, seed, cfg.kmeans_iters);
}

std::vector<WordSet> assign_all(std::span<const LocalDescriptorSet> sets, const Vocabulary& vocab,
                                const BowConfig& cfg) {
  std::vector<WordSet> out(sets.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(sets.size()); ++s) {
    const auto words = assign_words(sets[s], vocab);
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (cfg.skip_uniform && sets[s].uniform[i]) continue;
      out[s].words.push_back(words[i]);
      out[s].positions.push_back(sets[s].positions[i]);
    }
  }
  return out;
}

FeatureMatrix bow_features(std::span<const WordSet> words, std::size_t k, const PartitionScheme& scheme) {
  const std::size_t dim = k * partition_cells(scheme).size();
  FeatureMatrix f(words.size(), dim);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(words.size()); ++i) {
    const auto v = bow_encode_words(words[i].words, words[i].positions, k, scheme);
    std::copy(v.begin(), v.end(), f.row(static_cast<std::size_t>(i)).begin());
  }
  return f;
}

namespace {

template <typename Fn>
FeatureMatrix per_image(const Manifest& m, std::span<const std::size_t> indices, std::size_t dim, Fn fn) {
  FeatureMatrix f(indices.size(), dim);
  std::vector<std::string> errors(indices.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
    try {
      const auto v = fn(load_image(m.resolve(m.entries[indices[i]])));
      std::transform(v.begin(), v.end(), f.row(static_cast<std::size_t>(i)).begin(),
                     [](auto x) { return static_cast<float>(x); });
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  attach_items(f, m, indices);
  return f;
}

}  // namespace

FeatureMatrix gist_features(const Manifest& m, std::span<const std::size_t> indices, const GistConfig& cfg,
                            const BowConfig& frame) {
  const std::size_t dim = cfg.orientations * cfg.scales * cfg.grid * cfg.grid;
  return per_image(m, indices, dim, [&](const GrayImage& img) {
    return gist_like(resize_antialiased(img, frame.image_height, frame.image_width), cfg);
  });
}

FeatureMatrix brightness_features(const Manifest& m, std::span<const std::size_t> indices) {
  return per_image(m, indices, 1, [](const GrayImage& img) { return std::vector<double>{brightness(img)}; });
}

FeatureMatrix region_brightness_features(const Manifest& m, std::span<const std::size_t> indices) {
  return per_image(m, indices, kEnsembleOrder.size(), [](const GrayImage& img) { return region_brightness(img); });
}

RetrievalPrep fit_retrieval_prep(const FeatureMatrix& index_rows, std::size_t dim) {
  RetrievalPrep prep;
  if (index_rows.cols <= dim) return prep;
  FeatureMatrix x = index_rows;
  l2_normalize_rows(x);
  prep.pca = pca_fit(x, std::min(dim, x.rows - 1));
  prep.normalize = true;
  return prep;
}

FeatureMatrix apply_retrieval_prep(const RetrievalPrep& prep, const FeatureMatrix& rows) {
  if (!prep.pca) return rows;
  FeatureMatrix x = rows;
  l2_normalize_rows(x);
  FeatureMatrix y = pca_transform(*prep.pca, x);
  if (prep.normalize) l2_normalize_rows(y);
  return y;
}

}  // namespace docstyle
