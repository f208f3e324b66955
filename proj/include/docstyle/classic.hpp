#pragma once
// Hand-crafted baselines: dense gradient-orientation descriptors, k-means
// vocabularies, bag-of-words pooling, an oriented-energy global descriptor
// and brightness statistics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "docstyle/image.hpp"

namespace docstyle {

inline constexpr std::size_t kDescriptorDim = 32;  // 2x2 sub-cells x 8 orientations

struct Position {
  double row = 0.0;  // normalized, in [0, 1)
  double col = 0.0;
};

struct LocalDescriptorSet {
  std::size_t dim = kDescriptorDim;
  std::vector<float> descriptors;  // count x dim, row-major
  std::vector<Position> positions;
  std::vector<std::uint8_t> uniform;  // 1 where the patch had no gradient

  std::size_t count() const { return positions.size(); }
  std::span<const float> row(std::size_t i) const { return {descriptors.data() + i * dim, dim}; }
};

// Patches on a regular grid with the given stride. Each patch yields an
// 8-bin magnitude-weighted orientation histogram per 2x2 sub-cell (bins
// centered on multiples of 45 degrees, signed gradient direction),
// L2-normalized. Positions are patch centers.
LocalDescriptorSet dense_descriptors(const GrayImage& img, std::size_t patch, std::size_t stride);

struct Vocabulary {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centroids;  // k x dim

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

struct KMeansResult {
  Vocabulary vocabulary;
  std::vector<double> inertia;  // after each assignment step
  std::size_t iterations = 0;
  bool converged = false;  // assignment reached a fixpoint
};

// Lloyd's algorithm with greedy k-means++ seeding (2 + floor(ln K)
// candidates per step). Empty clusters move to the farthest points.
// Requires at least K distinct rows.
KMeansResult kmeans_fit(std::span<const float> data, std::size_t n, std::size_t dim, std::size_t k,
                        std::uint64_t seed, std::size_t max_iters = 50);

// Nearest centroid per descriptor, lowest index on ties.
std::vector<std::uint32_t> assign_words(const LocalDescriptorSet& desc, const Vocabulary& vocab);

// Partition schemes over the unit square.
struct Holistic {
  friend bool operator==(const Holistic&, const Holistic&) = default;
};
struct HV {
  std::size_t a = 0;  // levels of horizontal bands (level i: 2^i bands)
  std::size_t b = 0;  // levels of vertical strips (level j: 2^j strips)
  friend bool operator==(const HV&, const HV&) = default;
};
struct Pyramid {
  std::size_t levels = 1;  // level l: 2^l x 2^l grid
  friend bool operator==(const Pyramid&, const Pyramid&) = default;
};
using PartitionScheme = std::variant<Holistic, HV, Pyramid>;

// "holistic", "H2V3" (also lower case), "pyramid3" / "P3".
PartitionScheme parse_scheme(const std::string& text);
std::string scheme_name(const PartitionScheme& s);

struct Cell {
  double r0, r1, c0, c1;  // half-open
  bool contains(const Position& p) const {
    return p.row >= r0 && p.row < r1 && p.col >= c0 && p.col < c1;
  }
};

// Whole image first; then bands/strips per level (HV) or grids per level
// (Pyramid), each level in row-major order.
std::vector<Cell> partition_cells(const PartitionScheme& scheme);

// One L1-normalized K-bin histogram per cell, concatenated in cell order.
std::vector<float> bow_encode(const LocalDescriptorSet& desc, const Vocabulary& vocab,
                              const PartitionScheme& scheme);
// Same, from precomputed word assignments.
std::vector<float> bow_encode_words(std::span<const std::uint32_t> words,
                                    std::span<const Position> positions, std::size_t k,
                                    const PartitionScheme& scheme);

struct GistConfig {
  std::size_t orientations = 8;
  std::size_t scales = 4;
  std::size_t grid = 4;
};

// Mean squared steered first-derivative response per orientation, octave
// and grid cell. Orientation o steers to angle o * pi / orientations.
// Layout: [scale][orientation][cell row][cell col].
std::vector<float> gist_like(const GrayImage& img, const GistConfig& config = {});

double brightness(const GrayImage& img);
// Region means over the 780x600 frame, holistic/header/left_body/right_body/footer.
std::vector<double> region_brightness(const GrayImage& img);

// DSVOC1: magic, K, d (u32), K*d f32 centroids.
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v);
Vocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace docstyle
