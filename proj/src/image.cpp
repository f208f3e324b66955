#include "docstyle/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"

namespace docstyle {
namespace {

struct Tap {
  std::size_t index;
  float weight;
};

// One output sample as a weighted sum of input samples along an axis.
using AxisPlan = std::vector<std::vector<Tap>>;

AxisPlan bilinear_plan(std::size_t in, std::size_t out) {
  AxisPlan plan(out);
  const double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  for (std::size_t i = 0; i < out; ++i) {
    const double src = out > 1 ? static_cast<double>(i) * scale : static_cast<double>(in - 1) / 2.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    i0 = std::min(i0, in - 1);
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const float f = static_cast<float>(src - static_cast<double>(i0));
    plan[i] = {{i0, 1.0f - f}, {i1, f}};
  }
  return plan;
}

AxisPlan area_plan(std::size_t in, std::size_t out) {
  AxisPlan plan(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t j = 0; j < out; ++j) {
    const double lo = static_cast<double>(j) * scale;
    const double hi = static_cast<double>(j + 1) * scale;
    const std::size_t first = static_cast<std::size_t>(std::floor(lo));
    const std::size_t last = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
    for (std::size_t s = first; s < last; ++s) {
      const double overlap =
          std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) plan[j].push_back({s, static_cast<float>(overlap / scale)});
    }
  }
  return plan;
}

// Bilinear plans are evaluated as a + f * (b - a) so that constant signals
// are reproduced exactly.
float apply_plan(const std::vector<Tap>& taps, const float* src, std::size_t stride, bool lerp) {
  if (lerp) {
    const float a = src[taps[0].index * stride];
    const float b = src[taps[1].index * stride];
    return a + taps[1].weight * (b - a);
  }
  float s = 0.0f;
  for (const auto& t : taps) s += t.weight * src[t.index * stride];
  return s;
}

GrayImage resize_impl(const GrayImage& img, std::size_t out_h, std::size_t out_w, bool antialias) {
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resize: output extents must be >= 1");
  if (img.height < 1 || img.width < 1) throw InvalidArgument("resize: empty input image");
  const bool area_w = antialias && out_w < img.width;
  const bool area_h = antialias && out_h < img.height;
  const AxisPlan pw = area_w ? area_plan(img.width, out_w) : bilinear_plan(img.width, out_w);
  const AxisPlan ph = area_h ? area_plan(img.height, out_h) : bilinear_plan(img.height, out_h);

  GrayImage tmp(img.height, out_w);
  for (std::size_t r = 0; r < img.height; ++r) {
    const float* row = img.pixels.data() + r * img.width;
    for (std::size_t c = 0; c < out_w; ++c) tmp.at(r, c) = apply_plan(pw[c], row, 1, !area_w);
  }
  GrayImage out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      const float v = apply_plan(ph[r], tmp.pixels.data() + c, out_w, !area_h);
      out.at(r, c) = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

class HeaderReader {
 public:
  HeaderReader(const std::vector<unsigned char>& data, const std::filesystem::path& path)
      : data_(data), path_(path) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t v = 0;
    bool any = false;
    while (pos_ < data_.size() && std::isdigit(data_[pos_])) {
      v = v * 10 + static_cast<std::size_t>(data_[pos_] - '0');
      ++pos_;
      any = true;
      if (v > (1u << 24)) fail("header value too large");
    }
    if (!any) fail("expected a number in header");
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_])) fail("missing raster separator");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("malformed image file " + path_.string() + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      if (std::isspace(data_[pos_])) {
        ++pos_;
      } else if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 2;  // past the two-byte magic
};

}  // namespace

double GrayImage::mean() const {
  if (pixels.empty()) return 0.0;
  double s = 0.0;
  for (float p : pixels) s += p;
  return s / static_cast<double>(pixels.size());
}

GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6')) {
    throw IoError("unsupported image format (expected binary PGM P5 or PPM P6): " + path.string());
  }
  const std::size_t channels = data[1] == '5' ? 1 : 3;
  HeaderReader h(data, path);
  const std::size_t width = h.number();
  const std::size_t height = h.number();
  const std::size_t maxval = h.number();
  if (width == 0 || height == 0) h.fail("zero extent");
  if (maxval == 0 || maxval > 65535) h.fail("maxval out of range");
  const std::size_t start = h.raster_start();
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  const std::size_t need = width * height * channels * bytes_per;
  if (data.size() < start + need) h.fail("truncated raster");

  GrayImage img(height, width);
  const unsigned char* p = data.data() + start;
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < width * height; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t v = bytes_per == 1 ? p[0] : (static_cast<std::size_t>(p[0]) << 8) | p[1];
      if (v > maxval) h.fail("sample exceeds maxval");
      acc += static_cast<double>(v);
      p += bytes_per;
    }
    img.pixels[i] = static_cast<float>(acc / static_cast<double>(channels) * inv);
  }
  return img;
}

void save_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (float v : img.pixels) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  write_text_file(path, out);
}

GrayImage resize_bilinear(const GrayImage& img, std::size_t out_h, std::size_t out_w) {
  return resize_impl(img, out_h, out_w, false);
}

GrayImage resize_antialiased(const GrayImage& img, std::size_t out_h, std::size_t out_w) {
  return resize_impl(img, out_h, out_w, true);
}

GrayImage resize(const GrayImage& img, std::size_t out_h, std::size_t out_w, ResizeFilter filter) {
  return resize_impl(img, out_h, out_w, filter == ResizeFilter::Antialiased);
}

GrayImage crop(const GrayImage& img, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  if (r0 >= r1 || c0 >= c1 || r1 > img.height || c1 > img.width) {
    throw InvalidArgument("crop [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
                          std::to_string(c0) + "," + std::to_string(c1) + ") outside " +
                          std::to_string(img.height) + "x" + std::to_string(img.width));
  }
  GrayImage out(r1 - r0, c1 - c0);
  for (std::size_t r = r0; r < r1; ++r) {
    std::copy(img.pixels.begin() + static_cast<std::ptrdiff_t>(r * img.width + c0),
              img.pixels.begin() + static_cast<std::ptrdiff_t>(r * img.width + c1),
              out.pixels.begin() + static_cast<std::ptrdiff_t>((r - r0) * out.width));
  }
  return out;
}

const RegionSpec& region_spec(Region r) {
  for (const auto& s : kRegions) {
    if (s.region == r) return s;
  }
  throw InvalidArgument("unknown region");
}

Region region_from_name(std::string_view name) {
  for (const auto& s : kRegions) {
    if (s.name == name) return s.region;
  }
  throw InvalidArgument("unknown region '" + std::string(name) +
                        "' (holistic|header|footer|left_body|right_body)");
}

GrayImage to_frame(const GrayImage& img) { return resize_bilinear(img, kFrameHeight, kFrameWidth); }

GrayImage region_crop(const GrayImage& frame, Region r) {
  const auto& s = region_spec(r);
  return crop(frame, s.r0, s.r1, s.c0, s.c1);
}

std::map<std::string, GrayImage> extract_regions(const GrayImage& img, std::size_t target,
                                                 ResizeFilter filter) {
  const GrayImage frame = resize(img, kFrameHeight, kFrameWidth, filter);
  std::map<std::string, GrayImage> out;
  for (const auto& s : kRegions) {
    out.emplace(std::string(s.name), resize(region_crop(frame, s.region), target, target, filter));
  }
  return out;
}

GrayImage region_image(const GrayImage& img, Region r, std::size_t h, std::size_t w,
                       ResizeFilter filter) {
  const GrayImage frame = resize(img, kFrameHeight, kFrameWidth, filter);
  return resize(region_crop(frame, r), h, w, filter);
}

void write_network_input(const GrayImage& img, std::span<float> out) {
  if (out.size() != img.pixels.size()) {
    throw ShapeError("network input slice has " + std::to_string(out.size()) +
                     " elements, image has " + std::to_string(img.pixels.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0f - img.pixels[i];
}

}  // namespace docstyle
