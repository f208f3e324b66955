#pragma once
// Glue between manifests, image preparation and the feature extractors.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docstyle/classic.hpp"
#include "docstyle/compress.hpp"
#include "docstyle/dataset.hpp"
#include "docstyle/features.hpp"
#include "docstyle/image.hpp"
#include "docstyle/network.hpp"

namespace docstyle {

// How a page becomes a network input: optionally cropped to a region of
// the 780x600 frame, then resized.
struct ImagePrep {
  std::size_t height = 64;
  std::size_t width = 64;
  std::optional<Region> region;
  ResizeFilter filter = ResizeFilter::Antialiased;
};

GrayImage prepare_image(const GrayImage& img, const ImagePrep& prep);

// [N, 1, H, W] inputs (ink = 1 - pixel) with labels.
ImageSet make_image_set(const Manifest& m, std::span<const std::size_t> indices, const ImagePrep& prep);

// Ids are manifest paths, labels the manifest labels.
void attach_items(FeatureMatrix& f, const Manifest& m, std::span<const std::size_t> indices);

FeatureMatrix cnn_features(const Network& net, const Manifest& m, std::span<const std::size_t> indices,
                           const ImagePrep& prep, std::optional<std::size_t> tap = std::nullopt);

struct BowConfig {
  std::size_t image_height = 256;  // pages are resized before description
  std::size_t image_width = 192;
  std::size_t patch = 16;
  std::size_t stride = 8;
  std::size_t vocabulary = 300;
  std::size_t sample = 40000;  // descriptors drawn for k-means
  std::size_t kmeans_iters = 30;
  bool skip_uniform = true;  // uniform patches carry no word
};

std::vector<LocalDescriptorSet> compute_descriptors(const Manifest& m, std::span<const std::size_t> indices,
                                                    const BowConfig& cfg);

// k-means over a seeded sample of the non-uniform descriptors.
KMeansResult fit_vocabulary(std::span<const LocalDescriptorSet> sets, const BowConfig& cfg, std::uint64_t seed);

// Word assignments per image (uniform patches dropped when configured).
struct WordSet {
  std::vector<std::uint32_t> words;
  std::vector<Position> positions;
};
std::vector<WordSet> assign_all(std::span<const LocalDescriptorSet> sets, const Vocabulary& vocab,
                                const BowConfig& cfg);

FeatureMatrix bow_features(std::span<const WordSet> words, std::size_t k, const PartitionScheme& scheme);

FeatureMatrix gist_features(const Manifest& m, std::span<const std::size_t> indices, const GistConfig& cfg,
                            const BowConfig& frame);
FeatureMatrix brightness_features(const Manifest& m, std::span<const std::size_t> indices);
FeatureMatrix region_brightness_features(const Manifest& m, std::span<const std::size_t> indices);

// Retrieval post-processing: descriptors wider than `dim` are L2-normalized,
// projected with PCA fitted on the index rows, and L2-normalized again.
// Narrower descriptors are used as they are.
struct RetrievalPrep {
  std::optional<PcaModel> pca;
  bool normalize = false;
};
RetrievalPrep fit_retrieval_prep(const FeatureMatrix& index_rows, std::size_t dim);
FeatureMatrix apply_retrieval_prep(const RetrievalPrep& prep, const FeatureMatrix& rows);

}  // namespace docstyle
