#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docstyle/image.hpp"

namespace docstyle {

enum class Split { Train, Val, Test, Unassigned };

std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct ManifestEntry {
  std::string path;  // relative to Manifest::base_dir unless absolute
  int label = 0;
  Split split = Split::Unassigned;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> label_names;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<std::size_t> indices(Split s) const;
  // Checks label range and path uniqueness.
  void validate() const;
};

// TSV: a "#labels" header line carrying the vocabulary, then one
// "path<TAB>label_name<TAB>split" line per item.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);
// Paths are rewritten relative to the new manifest's directory.
void save_manifest(const std::filesystem::path& path, const Manifest& m);

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::optional<std::size_t> test;  // empty: the remainder goes to test
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Uniformly random (optionally per-label stratified) assignment by seed.
// Items not covered by the request are marked Unassigned.
Manifest split_dataset(const Manifest& m, const SplitCounts& counts, std::uint64_t seed,
                       bool stratified = false);
Manifest split_dataset(const Manifest& m, const SplitRatios& ratios, std::uint64_t seed,
                       bool stratified = false);

// Index batches over one split; shuffled by (seed, epoch), last partial
// batch kept.
std::vector<std::vector<std::size_t>> iterate_batches(const Manifest& m, Split split,
                                                      std::size_t batch, std::uint64_t seed,
                                                      std::size_t epoch);

std::vector<GrayImage> load_images(const Manifest& m, std::span<const std::size_t> indices);

// Synthetic document layouts.
enum class Layout {
  Letter,
  Memo,
  Form,
  News,
  Email,
  Ad,
  Report,
  Invoice,
  Resume,
  Scientific,
};

std::vector<Layout> all_layouts();
std::string_view layout_name(Layout l);
Layout layout_from_name(std::string_view name);

struct SynthConfig {
  std::vector<Layout> classes;
  std::size_t per_class = 100;
  std::size_t height = 260;
  std::size_t width = 200;
  std::uint64_t seed = 1;
  double noise = 0.3;      // in [0, 1]
  double imbalance = 0.0;  // in [0, 1): class c gets per_class * (1 - imbalance * c / (C-1))

  void validate() const;
};

// Renders one page; deterministic in (layout, seed).
GrayImage render_document(Layout layout, std::size_t height, std::size_t width, double noise,
                          std::uint64_t seed);

// Writes images/<layout>_<index>.pgm and manifest.tsv under out_dir.
Manifest generate_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace docstyle
