#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "docstyle/tensor.hpp"

namespace docstyle {

// Grayscale image with row-major pixels in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

  float& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  float at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  double mean() const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Binary PGM (P5, 8- or 16-bit) and binary PPM (P6, converted by the
// unweighted channel mean).
GrayImage load_image(const std::filesystem::path& path);
// Writes P5 with maxval 255; pixels are rounded to the nearest level.
void save_pgm(const std::filesystem::path& path, const GrayImage& img);

// Corner-aligned bilinear resampling: output sample i maps to source
// coordinate i * (in - 1) / (out - 1).
GrayImage resize_bilinear(const GrayImage& img, std::size_t out_h, std::size_t out_w);

// Bilinear when enlarging an axis, exact area averaging when shrinking it.
// Used in the pipelines so thin strokes survive strong downscaling.
GrayImage resize_antialiased(const GrayImage& img, std::size_t out_h, std::size_t out_w);

enum class ResizeFilter { Bilinear, Antialiased };

GrayImage resize(const GrayImage& img, std::size_t out_h, std::size_t out_w, ResizeFilter filter);

GrayImage crop(const GrayImage& img, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);

// Region geometry, in the 780x600 reference frame.
inline constexpr std::size_t kFrameHeight = 780;
inline constexpr std::size_t kFrameWidth = 600;
inline constexpr std::size_t kBandRows = 256;
inline constexpr std::size_t kBodyRows = 400;
inline constexpr std::size_t kBodyCols = 300;

enum class Region { Holistic, Header, Footer, LeftBody, RightBody };

struct RegionSpec {
  Region region;
  std::string_view name;
  std::size_t r0, r1, c0, c1;  // half-open ranges
};

inline constexpr std::array<RegionSpec, 5> kRegions = {{
    {Region::Holistic, "holistic", 0, kFrameHeight, 0, kFrameWidth},
    {Region::Header, "header", 0, kBandRows, 0, kFrameWidth},
    {Region::Footer, "footer", kFrameHeight - kBandRows, kFrameHeight, 0, kFrameWidth},
    {Region::LeftBody, "left_body", (kFrameHeight - kBodyRows) / 2,
     (kFrameHeight + kBodyRows) / 2, 0, kBodyCols},
    {Region::RightBody, "right_body", (kFrameHeight - kBodyRows) / 2,
     (kFrameHeight + kBodyRows) / 2, kFrameWidth - kBodyCols, kFrameWidth},
}};

// Fixed ensemble order: holistic first.
inline constexpr std::array<Region, 5> kEnsembleOrder = {
    Region::Holistic, Region::Header, Region::LeftBody, Region::RightBody, Region::Footer};

const RegionSpec& region_spec(Region r);
Region region_from_name(std::string_view name);

// The image resized to the 780x600 frame.
GrayImage to_frame(const GrayImage& img);

// Crop of the frame for one region, before any target resize.
GrayImage region_crop(const GrayImage& frame, Region r);

// Every region cropped from the frame and resized to target x target.
std::map<std::string, GrayImage> extract_regions(const GrayImage& img, std::size_t target,
                                                 ResizeFilter filter = ResizeFilter::Bilinear);

// One region resized to h x w.
GrayImage region_image(const GrayImage& img, Region r, std::size_t h, std::size_t w,
                       ResizeFilter filter = ResizeFilter::Antialiased);

// Network input encoding: ink = 1 - pixel, as a [1, h, w] slice.
void write_network_input(const GrayImage& img, std::span<float> out);

}  // namespace docstyle
