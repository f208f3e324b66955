#include "docstyle/classic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string_view>
#include <unordered_set>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"
#include "docstyle/kernels.hpp"
#include "docstyle/random.hpp"

namespace docstyle {

namespace {

// Central differences, one-sided at the border.
void gradients(const GrayImage& img, std::vector<float>& gx, std::vector<float>& gy) {
  const std::size_t h = img.height, w = img.width;
  gx.assign(h * w, 0.0f);
  gy.assign(h * w, 0.0f);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t cl = c > 0 ? c - 1 : c, cr = c + 1 < w ? c + 1 : c;
      const std::size_t ru = r > 0 ? r - 1 : r, rd = r + 1 < h ? r + 1 : r;
      gx[r * w + c] = cr > cl ? (img.at(r, cr) - img.at(r, cl)) / static_cast<float>(cr - cl) : 0.0f;
      gy[r * w + c] = rd > ru ? (img.at(rd, c) - img.at(ru, c)) / static_cast<float>(rd - ru) : 0.0f;
    }
  }
}

}  // namespace

LocalDescriptorSet dense_descriptors(const GrayImage& img, std::size_t patch, std::size_t stride) {
  if (stride < 1) throw InvalidArgument("descriptor stride must be >= 1");
  if (patch < 2) throw InvalidArgument("descriptor patch must be >= 2");
  if (patch > std::min(img.height, img.width)) {
    throw InvalidArgument("descriptor patch " + std::to_string(patch) + " larger than image " +
                          std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  std::vector<float> gx, gy;
  gradients(img, gx, gy);
  const std::size_t w = img.width;
  // Per-pixel orientation bin and magnitude.
  std::vector<std::uint8_t> bin(gx.size());
  std::vector<float> mag(gx.size());
  constexpr double kStep = std::numbers::pi / 4.0;
  for (std::size_t i = 0; i < gx.size(); ++i) {
    mag[i] = std::hypot(gx[i], gy[i]);
    double theta = std::atan2(static_cast<double>(gy[i]), static_cast<double>(gx[i]));
    if (theta < 0) theta += 2.0 * std::numbers::pi;
    bin[i] = static_cast<std::uint8_t>(static_cast<long>(std::lround(theta / kStep)) % 8);
  }

  const std::size_t ny = (img.height - patch) / stride + 1;
  const std::size_t nx = (img.width - patch) / stride + 1;
  LocalDescriptorSet out;
  out.descriptors.assign(ny * nx * kDescriptorDim, 0.0f);
  out.positions.resize(ny * nx);
  out.uniform.assign(ny * nx, 0);
  const std::size_t half = patch / 2;
  for (std::size_t py = 0; py < ny; ++py) {
    for (std::size_t px = 0; px < nx; ++px) {
      const std::size_t id = py * nx + px;
      const std::size_t r0 = py * stride, c0 = px * stride;
      double hist[kDescriptorDim] = {};
      for (std::size_t r = 0; r < patch; ++r) {
        const std::size_t sr = (2 * r) / patch;
        for (std::size_t c = 0; c < patch; ++c) {
          const std::size_t sc = (2 * c) / patch;
          const std::size_t p = (r0 + r) * w + c0 + c;
          hist[(sr * 2 + sc) * 8 + bin[p]] += mag[p];
        }
      }
      double norm = 0.0;
      for (double v : hist) norm += v * v;
      norm = std::sqrt(norm);
      float* d = out.descriptors.data() + id * kDescriptorDim;
      if (norm < 1e-12) {
        out.uniform[id] = 1;
      } else {
        for (std::size_t j = 0; j < kDescriptorDim; ++j) d[j] = static_cast<float>(hist[j] / norm);
      }
      out.positions[id] = {static_cast<double>(r0 + half) / static_cast<double>(img.height),
                           static_cast<double>(c0 + half) / static_cast<double>(img.width)};
    }
  }
  return out;
}

namespace {

std::size_t count_distinct(std::span<const float> data, std::size_t n, std::size_t dim,
                           std::size_t enough) {
  std::unordered_set<std::string_view> seen;
  const char* base = reinterpret_cast<const char*>(data.data());
  for (std::size_t i = 0; i < n && seen.size() < enough; ++i) {
    seen.emplace(base + i * dim * sizeof(float), dim * sizeof(float));
  }
  return seen.size();
}

// Greedy k-means++: each step samples several candidates proportionally to
// the current squared distance and keeps the one with the lowest potential.
std::vector<double> seed_centroids(const std::vector<double>& x, std::size_t n, std::size_t dim,
                                   std::size_t k, Rng& rng) {
  std::vector<double> centroids(k * dim);
  const std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(first * dim), dim, centroids.begin());
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) {
    closest[i] = kernels::squared_distance(x.data() + i * dim, centroids.data(), dim);
  }
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  std::vector<double> trial(n), best_trial(n);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    double best_potential = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      double target = rng.uniform() * total;
      std::size_t cand = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= closest[i];
        if (target < 0.0 && closest[i] > 0.0) {
          cand = i;
          break;
        }
      }
      // Guard against landing on an already-covered point through rounding.
      while (closest[cand] <= 0.0 && cand > 0) --cand;
      const double* cv = x.data() + cand * dim;
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        trial[i] = std::min(closest[i], kernels::squared_distance(x.data() + i * dim, cv, dim));
        potential += trial[i];
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = cand;
        best_trial.swap(trial);
      }
    }
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(best * dim), dim,
                centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    closest.swap(best_trial);
    best_trial.resize(n);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans_fit(std::span<const float> data, std::size_t n, std::size_t dim, std::size_t k,
                        std::uint64_t seed, std::size_t max_iters) {
  if (k < 1) throw InvalidArgument("k-means: K must be >= 1");
  if (dim < 1 || data.size() != n * dim) {
    throw ShapeError("k-means: data size " + std::to_string(data.size()) + " != " +
                     std::to_string(n) + " x " + std::to_string(dim));
  }
  const std::size_t distinct = count_distinct(data, n, dim, k);
  if (distinct < k) {
    throw InvalidArgument("k-means: only " + std::to_string(distinct) + " distinct rows for K = " +
                          std::to_string(k));
  }
  const std::vector<double> x(data.begin(), data.end());
  Rng rng(derive_seed(seed, 0x6b6d));
  std::vector<double> centroids = seed_centroids(x, n, dim, k, rng);

  KMeansResult result;
  std::vector<std::uint32_t> assign(n), prev(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> dist(n);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iters, 1); ++it) {
    kernels::nearest_centroid(x, n, centroids, k, dim, assign, dist);
    result.inertia.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
    result.iterations = it + 1;
    if (assign == prev) {
      result.converged = true;
      break;
    }
    prev = assign;
    if (it + 1 == max_iters) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = x.data() + i * dim;
      double* s = sums.data() + assign[i] * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
      ++counts[assign[i]];
    }
    std::vector<std::size_t> far;  // points by decreasing distance, built lazily
    std::size_t far_next = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double* cen = centroids.data() + c * dim;
      if (counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < dim; ++j) cen[j] = sums[c * dim + j] * inv;
        continue;
      }
      if (far.empty()) {
        far.resize(n);
        std::iota(far.begin(), far.end(), 0);
        std::stable_sort(far.begin(), far.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
      }
      const std::size_t p = far[far_next++ % n];
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(p * dim), dim, cen);
    }
  }
  result.vocabulary.k = k;
  result.vocabulary.dim = dim;
  result.vocabulary.centroids.assign(centroids.begin(), centroids.end());
  return result;
}

std::vector<std::uint32_t> assign_words(const LocalDescriptorSet& desc, const Vocabulary& vocab) {
  if (desc.dim != vocab.dim) {
    throw ShapeError("descriptor dim " + std::to_string(desc.dim) + " != vocabulary dim " +
                     std::to_string(vocab.dim));
  }
  const std::size_t n = desc.count();
  std::vector<std::uint32_t> words(n);
  if (n == 0) return words;
  const std::vector<double> x(desc.descriptors.begin(), desc.descriptors.end());
  const std::vector<double> c(vocab.centroids.begin(), vocab.centroids.end());
  std::vector<double> dist(n);
  kernels::nearest_centroid(x, n, c, vocab.k, vocab.dim, words, dist);
  return words;
}

PartitionScheme parse_scheme(const std::string& text) {
  std::string s;
  for (char ch : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  auto number = [&](std::string_view digits) -> std::size_t {
    if (digits.empty() || digits.size() > 2 ||
        !std::all_of(digits.begin(), digits.end(), [](char ch) { return std::isdigit(ch); })) {
      throw ParseError("bad partition scheme '" + text + "'");
    }
    return static_cast<std::size_t>(std::stoul(std::string(digits)));
  };
  if (s == "holistic") return Holistic{};
  if (s.starts_with("pyramid") || s.starts_with('p')) {
    const std::size_t levels = number(std::string_view(s).substr(s[1] == 'y' ? 7 : 1));
    if (levels < 1) throw ParseError("pyramid needs at least one level");
    return Pyramid{levels};
  }
  if (s.starts_with('h')) {
    const auto v = s.find('v');
    if (v == std::string::npos) throw ParseError("bad partition scheme '" + text + "'");
    return HV{number(std::string_view(s).substr(1, v - 1)), number(std::string_view(s).substr(v + 1))};
  }
  throw ParseError("bad partition scheme '" + text + "' (holistic | HaVb | pyramidL)");
}

std::string scheme_name(const PartitionScheme& s) {
  if (std::holds_alternative<Holistic>(s)) return "holistic";
  if (const auto* hv = std::get_if<HV>(&s)) {
    return "H" + std::to_string(hv->a) + "V" + std::to_string(hv->b);
  }
  return "pyramid" + std::to_string(std::get<Pyramid>(s).levels);
}

std::vector<Cell> partition_cells(const PartitionScheme& scheme) {
  std::vector<Cell> cells{{0.0, 1.0, 0.0, 1.0}};
  if (const auto* hv = std::get_if<HV>(&scheme)) {
    for (std::size_t i = 1; i <= hv->a; ++i) {
      const double n = std::ldexp(1.0, static_cast<int>(i));
      for (double j = 0; j < n; ++j) cells.push_back({j / n, (j + 1) / n, 0.0, 1.0});
    }
    for (std::size_t i = 1; i <= hv->b; ++i) {
      const double n = std::ldexp(1.0, static_cast<int>(i));
      for (double j = 0; j < n; ++j) cells.push_back({0.0, 1.0, j / n, (j + 1) / n});
    }
  } else if (const auto* p = std::get_if<Pyramid>(&scheme)) {
    if (p->levels < 1) throw InvalidArgument("pyramid needs at least one level");
    for (std::size_t l = 1; l < p->levels; ++l) {
      const double n = std::ldexp(1.0, static_cast<int>(l));
      for (double r = 0; r < n; ++r)
        for (double c = 0; c < n; ++c) cells.push_back({r / n, (r + 1) / n, c / n, (c + 1) / n});
    }
  }
  return cells;
}

std::vector<float> bow_encode_words(std::span<const std::uint32_t> words,
                                    std::span<const Position> positions, std::size_t k,
                                    const PartitionScheme& scheme) {
  if (words.size() != positions.size()) throw ShapeError("word and position counts differ");
  const auto cells = partition_cells(scheme);
  std::vector<float> out(k * cells.size(), 0.0f);
  std::vector<double> hist(k);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::fill(hist.begin(), hist.end(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!cells[c].contains(positions[i])) continue;
      if (words[i] >= k) throw ShapeError("word index out of vocabulary range");
      hist[words[i]] += 1.0;
      total += 1.0;
    }
    if (total == 0.0) continue;
    for (std::size_t j = 0; j < k; ++j) out[c * k + j] = static_cast<float>(hist[j] / total);
  }
  return out;
}

std::vector<float> bow_encode(const LocalDescriptorSet& desc, const Vocabulary& vocab,
                              const PartitionScheme& scheme) {
  const auto words = assign_words(desc, vocab);
  return bow_encode_words(words, desc.positions, vocab.k, scheme);
}

namespace {

GrayImage halve(const GrayImage& img) {
  GrayImage out(std::max<std::size_t>(1, img.height / 2), std::max<std::size_t>(1, img.width / 2));
  for (std::size_t r = 0; r < out.height; ++r)
    for (std::size_t c = 0; c < out.width; ++c) {
      const std::size_t r0 = std::min(2 * r, img.height - 1), r1 = std::min(2 * r + 1, img.height - 1);
      const std::size_t c0 = std::min(2 * c, img.width - 1), c1 = std::min(2 * c + 1, img.width - 1);
      out.at(r, c) = 0.25f * ((img.at(r0, c0) + img.at(r0, c1)) + (img.at(r1, c0) + img.at(r1, c1)));
    }
  return out;
}

}  // namespace

std::vector<float> gist_like(const GrayImage& img, const GistConfig& cfg) {
  if (cfg.orientations < 1 || cfg.scales < 1 || cfg.grid < 1) {
    throw InvalidArgument("gist: orientations, scales and grid must be >= 1");
  }
  if (img.height < 1 || img.width < 1) throw InvalidArgument("gist: empty image");
  const std::size_t g = cfg.grid;
  std::vector<float> out(cfg.orientations * cfg.scales * g * g, 0.0f);
  std::vector<double> cos_t(cfg.orientations), sin_t(cfg.orientations);
  for (std::size_t o = 0; o < cfg.orientations; ++o) {
    const double t = std::numbers::pi * static_cast<double>(o) / static_cast<double>(cfg.orientations);
    cos_t[o] = std::cos(t);
    sin_t[o] = std::sin(t);
  }
  GrayImage level = img;
  std::vector<float> gx, gy;
  for (std::size_t s = 0; s < cfg.scales; ++s) {
    if (s > 0) level = halve(level);
    gradients(level, gx, gy);
    for (std::size_t cr = 0; cr < g; ++cr) {
      const std::size_t r0 = cr * level.height / g, r1 = (cr + 1) * level.height / g;
      for (std::size_t cc = 0; cc < g; ++cc) {
        const std::size_t c0 = cc * level.width / g, c1 = (cc + 1) * level.width / g;
        const double area = static_cast<double>((r1 - r0) * (c1 - c0));
        if (area == 0.0) continue;
        for (std::size_t o = 0; o < cfg.orientations; ++o) {
          double e = 0.0;
          for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = c0; c < c1; ++c) {
              const std::size_t p = r * level.width + c;
              const double v = cos_t[o] * gx[p] + sin_t[o] * gy[p];
              e += v * v;
            }
          out[((s * cfg.orientations + o) * g + cr) * g + cc] = static_cast<float>(e / area);
        }
      }
    }
  }
  return out;
}

double brightness(const GrayImage& img) { return img.mean(); }

std::vector<double> region_brightness(const GrayImage& img) {
  const GrayImage frame = to_frame(img);
  std::vector<double> out;
  for (Region r : kEnsembleOrder) out.push_back(region_crop(frame, r).mean());
  return out;
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v) {
  if (v.centroids.size() != v.k * v.dim) throw ShapeError("vocabulary size mismatch");
  BinaryWriter w(path);
  w.magic("DSVOC1");
  w.u32(static_cast<std::uint32_t>(v.k));
  w.u32(static_cast<std::uint32_t>(v.dim));
  w.f32s(v.centroids);
  w.close();
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("DSVOC1");
  Vocabulary v;
  v.k = r.u32();
  v.dim = r.u32();
  if (v.k < 1 || v.dim < 1) throw ParseError(path.string() + ": empty vocabulary");
  v.centroids = r.f32s(v.k * v.dim);
  r.expect_end();
  for (float c : v.centroids) {
    if (!std::isfinite(c)) throw ParseError(path.string() + ": non-finite centroid");
  }
  return v;
}

}  // namespace docstyle
