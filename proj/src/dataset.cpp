#include "docstyle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"
#include "docstyle/random.hpp"

namespace docstyle {

namespace fs = std::filesystem;

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  if (name == "unassigned") return Split::Unassigned;
  throw ParseError("unknown split tag '" + std::string(name) + "'");
}

fs::path Manifest::resolve(const ManifestEntry& e) const {
  fs::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::size_t> Manifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == s) out.push_back(i);
  }
  return out;
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= label_names.size()) {
      throw ParseError("manifest entry '" + e.path + "' has label index " +
                       std::to_string(e.label) + " but only " +
                       std::to_string(label_names.size()) + " label names");
    }
    if (!seen.insert(e.path).second) throw ParseError("duplicate manifest path '" + e.path + "'");
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

Manifest load_manifest(const fs::path& path, bool check_files) {
  const std::string text = read_text_file(path);
  Manifest m;
  m.base_dir = path.parent_path();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::map<std::string, int> label_index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (!have_header) {
      if (cols[0] != "#labels") {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": expected '#labels' header line");
      }
      for (std::size_t i = 1; i < cols.size(); ++i) {
        if (!label_index.emplace(cols[i], static_cast<int>(i - 1)).second) {
          throw ParseError(path.string() + ": duplicate label name '" + cols[i] + "'");
        }
        m.label_names.push_back(cols[i]);
      }
      have_header = true;
      continue;
    }
    if (cols.size() != 3) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected path<TAB>label<TAB>split");
    }
    ManifestEntry e;
    e.path = cols[0];
    auto it = label_index.find(cols[1]);
    if (it != label_index.end()) {
      e.label = it->second;
    } else {
      // Numeric label indices are accepted too; range is checked below.
      char* end = nullptr;
      const long v = std::strtol(cols[1].c_str(), &end, 10);
      if (cols[1].empty() || *end != '\0') {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown label '" +
                         cols[1] + "'");
      }
      e.label = static_cast<int>(v);
    }
    e.split = split_from_name(cols[2]);
    m.entries.push_back(std::move(e));
  }
  if (!have_header) throw ParseError(path.string() + ": empty manifest");
  m.validate();
  if (check_files) {
    for (const auto& e : m.entries) {
      if (!fs::exists(m.resolve(e))) {
        throw IoError("manifest " + path.string() + " references missing file " + e.path);
      }
    }
  }
  return m;
}

void save_manifest(const fs::path& path, const Manifest& m) {
  m.validate();
  const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  std::ostringstream out;
  out << "#labels";
  for (const auto& n : m.label_names) out << '\t' << n;
  out << '\n';
  for (const auto& e : m.entries) {
    fs::path p(e.path);
    std::string rel = e.path;
    if (!p.is_absolute()) {
      std::error_code ec;
      const fs::path abs = fs::weakly_canonical(m.base_dir.empty() ? p : m.base_dir / p, ec);
      const fs::path here = fs::weakly_canonical(dir, ec);
      rel = fs::proximate(abs, here, ec).generic_string();
    }
    out << rel << '\t' << m.label_names[static_cast<std::size_t>(e.label)] << '\t'
        << split_name(e.split) << '\n';
  }
  write_text_file(path, out.str());
}

namespace {

// Largest-remainder apportionment of `total` over groups proportional to sizes.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total,
                                   std::size_t population) {
  std::vector<std::size_t> out(sizes.size(), 0);
  if (population == 0) return out;
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double exact = static_cast<double>(total) * static_cast<double>(sizes[i]) /
                         static_cast<double>(population);
    out[i] = std::min(sizes[i], static_cast<std::size_t>(std::floor(exact)));
    assigned += out[i];
    rema.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < rema.size(); ++k) {
    const std::size_t i = rema[k].second;
    if (out[i] < sizes[i]) {
      ++out[i];
      ++assigned;
    }
  }
  return out;
}

Manifest assign(const Manifest& m, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                std::uint64_t seed, bool stratified) {
  Manifest out = m;
  for (auto& e : out.entries) e.split = Split::Unassigned;
  Rng rng(derive_seed(seed, 0x5711));
  auto place = [&](std::vector<std::size_t> pool, std::size_t a, std::size_t b, std::size_t c) {
    rng.shuffle(pool);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      Split s = Split::Unassigned;
      if (i < a) s = Split::Train;
      else if (i < a + b) s = Split::Val;
      else if (i < a + b + c) s = Split::Test;
      out.entries[pool[i]].split = s;
    }
  };
  if (!stratified) {
    std::vector<std::size_t> all(m.entries.size());
    std::iota(all.begin(), all.end(), 0);
    place(std::move(all), n_train, n_val, n_test);
    return out;
  }
  std::vector<std::vector<std::size_t>> by_label(m.label_names.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    by_label[static_cast<std::size_t>(m.entries[i].label)].push_back(i);
  }
  std::vector<std::size_t> sizes;
  for (const auto& g : by_label) sizes.push_back(g.size());
  const std::size_t n = m.entries.size();
  const auto tr = apportion(sizes, n_train, n);
  std::vector<std::size_t> left(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) left[i] = sizes[i] - tr[i];
  const auto va = apportion(sizes, n_val, n);
  std::vector<std::size_t> va_c(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) va_c[i] = std::min(va[i], left[i]);
  const auto te = apportion(sizes, n_test, n);
  for (std::size_t g = 0; g < by_label.size(); ++g) {
    const std::size_t te_c = std::min(te[g], left[g] - va_c[g]);
    place(by_label[g], tr[g], va_c[g], te_c);
  }
  return out;
}

}  // namespace

Manifest split_dataset(const Manifest& m, const SplitCounts& c, std::uint64_t seed, bool stratified) {
  const std::size_t n = m.entries.size();
  const std::size_t fixed = c.train + c.val + c.test.value_or(0);
  if (fixed > n) {
    throw InvalidArgument("split counts " + std::to_string(fixed) + " exceed corpus size " +
                          std::to_string(n));
  }
  const std::size_t test = c.test.value_or(n - c.train - c.val);
  return assign(m, c.train, c.val, test, seed, stratified);
}

Manifest split_dataset(const Manifest& m, const SplitRatios& r, std::uint64_t seed, bool stratified) {
  if (r.train < 0 || r.val < 0 || r.test < 0) throw InvalidArgument("split ratios must be >= 0");
  if (r.train + r.val + r.test > 1.0 + 1e-12) {
    throw InvalidArgument("split ratios sum to " + std::to_string(r.train + r.val + r.test) +
                          " > 1");
  }
  const double n = static_cast<double>(m.entries.size());
  auto count = [&](double ratio) { return static_cast<std::size_t>(std::floor(ratio * n + 1e-9)); };
  return assign(m, count(r.train), count(r.val), count(r.test), seed, stratified);
}

std::vector<std::vector<std::size_t>> iterate_batches(const Manifest& m, Split split,
                                                      std::size_t batch, std::uint64_t seed,
                                                      std::size_t epoch) {
  if (batch < 1) throw InvalidArgument("batch size must be >= 1");
  auto idx = m.indices(split);
  Rng rng(derive_seed(seed, 0xba7c, epoch));
  rng.shuffle(idx);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < idx.size(); b += batch) {
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(b),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), b + batch)));
  }
  return out;
}

std::vector<GrayImage> load_images(const Manifest& m, std::span<const std::size_t> indices) {
  std::vector<GrayImage> out(indices.size());
  std::vector<std::string> errors(indices.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
    try {
      out[i] = load_image(m.resolve(m.entries[indices[i]]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic documents

std::vector<Layout> all_layouts() {
  return {Layout::Letter, Layout::Memo,   Layout::Form,    Layout::News,   Layout::Email,
          Layout::Ad,     Layout::Report, Layout::Invoice, Layout::Resume, Layout::Scientific};
}

std::string_view layout_name(Layout l) {
  switch (l) {
    case Layout::Letter: return "letter";
    case Layout::Memo: return "memo";
    case Layout::Form: return "form";
    case Layout::News: return "news";
    case Layout::Email: return "email";
    case Layout::Ad: return "ad";
    case Layout::Report: return "report";
    case Layout::Invoice: return "invoice";
    case Layout::Resume: return "resume";
    case Layout::Scientific: return "scientific";
  }
  return "letter";
}

Layout layout_from_name(std::string_view name) {
  for (Layout l : all_layouts()) {
    if (layout_name(l) == name) return l;
  }
  throw InvalidArgument("unknown layout '" + std::string(name) + "'");
}

void SynthConfig::validate() const {
  if (classes.empty()) throw InvalidArgument("synth: at least one class required");
  if (per_class < 1) throw InvalidArgument("synth: images per class must be >= 1");
  if (height < 32 || width < 32) throw InvalidArgument("synth: image extents must be >= 32");
  if (!(noise >= 0.0 && noise <= 1.0)) throw InvalidArgument("synth: noise must be in [0, 1]");
  if (!(imbalance >= 0.0 && imbalance < 1.0)) {
    throw InvalidArgument("synth: imbalance must be in [0, 1)");
  }
}

namespace {

// Page canvas in relative coordinates; ink is painted with min() so strokes
// never lighten each other.
class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w, Rng& rng, float paper, float ink, double font_scale)
      : img_(h, w, paper), rng_(rng), ink_(ink), h_(static_cast<double>(h)), w_(static_cast<double>(w)),
        scale_(font_scale) {}

  GrayImage& image() { return img_; }
  Rng& rng() { return rng_; }
  double height() const { return h_; }
  double width() const { return w_; }
  // Base stroke thickness in pixels.
  int stroke() const { return std::max(1, static_cast<int>(std::lround(scale_ * h_ / 130.0))); }
  // Default text line pitch, relative.
  double pitch() const { return 0.0346 * scale_; }

  void fill_px(long r0, long c0, long r1, long c1, float v) {
    r0 = std::max(0L, r0);
    c0 = std::max(0L, c0);
    r1 = std::min(static_cast<long>(img_.height), r1);
    c1 = std::min(static_cast<long>(img_.width), c1);
    for (long r = r0; r < r1; ++r)
      for (long c = c0; c < c1; ++c) {
        float& p = img_.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        p = std::min(p, v);
      }
  }

  long py(double y) const { return std::lround(y * h_); }
  long px(double x) const { return std::lround(x * w_); }

  void rect(double y0, double x0, double y1, double x1, float v) {
    fill_px(py(y0), px(x0), py(y1), px(x1), v);
  }
  void rect(double y0, double x0, double y1, double x1) { rect(y0, x0, y1, x1, ink_); }

  void hrule(double y, double x0, double x1, int thick) {
    fill_px(py(y), px(x0), py(y) + thick, px(x1), ink_);
  }
  void vrule(double x, double y0, double y1, int thick) {
    fill_px(py(y0), px(x), py(y1), px(x) + thick, ink_);
  }
  void box(double y0, double x0, double y1, double x1, int thick) {
    hrule(y0, x0, x1, thick);
    hrule(y1, x0, x1, thick);
    vrule(x0, y0, y1, thick);
    vrule(x1, y0, y1 + static_cast<double>(thick) / h_, thick);
  }

  // A run of glyph-like marks between x0 and x1 on baseline row y.
  void text(double y, double x0, double x1, int thick) {
    const long base = py(y);
    long c = px(x0);
    const long end = px(x1);
    const int xh = std::max(2, thick + 1);
    while (c < end) {
      const long word_end = std::min(end, c + static_cast<long>(rng_.range(6, 22) * w_ / 200.0));
      while (c < word_end) {
        const int gw = rng_.range(1, 3);
        const int asc = rng_.bernoulli(0.3) ? rng_.range(1, xh) : 0;
        fill_px(base - asc, c, base + xh, c + gw, ink_);
        c += gw + 1;
      }
      c += std::max(2L, static_cast<long>(rng_.range(3, 6) * w_ / 200.0));
    }
  }

  // Bold text: a solid bar with occasional notches.
  void bold(double y, double x0, double x1, int thick) {
    const long base = py(y);
    long c = px(x0);
    const long end = px(x1);
    while (c < end) {
      const long word_end = std::min(end, c + static_cast<long>(rng_.range(10, 30) * w_ / 200.0));
      fill_px(base, c, base + thick, word_end, ink_);
      c = word_end + std::max(2L, static_cast<long>(rng_.range(3, 6) * w_ / 200.0));
    }
  }

  // Lines of text filling [y0, y1) with ragged right edges.
  double paragraph(double y0, double y1, double x0, double x1, double pitch, double indent = 0.0) {
    double y = y0;
    bool first = true;
    while (y + pitch <= y1) {
      const double right = x1 - rng_.uniform(0.0, 0.06) * (x1 - x0);
      text(y, x0 + (first ? indent : 0.0), right, stroke());
      first = false;
      y += pitch;
    }
    // A short closing line.
    if (y0 + pitch <= y1) text(y, x0, x0 + rng_.uniform(0.2, 0.6) * (x1 - x0), stroke());
    return y + pitch;
  }

  // Paragraphs of min_lines..max_lines lines stacked from y until y1.
  double flow(double y, double y1, double x0, double x1, double pitch, int min_lines, int max_lines,
              double indent = 0.0) {
    while (y + pitch <= y1) {
      const int lines = rng_.range(min_lines, max_lines);
      for (int i = 0; i < lines && y + pitch <= y1; ++i) {
        const bool last = i + 1 == lines;
        const double right = last ? x0 + rng_.uniform(0.2, 0.7) * (x1 - x0)
                                  : x1 - rng_.uniform(0.0, 0.06) * (x1 - x0);
        text(y, x0 + (i == 0 ? indent : 0.0), right, stroke());
        y += pitch;
      }
      y += pitch;
    }
    return y;
  }

  void ellipse(double cy, double cx, double ry, double rx, float v) {
    const long r0 = py(cy - ry), r1 = py(cy + ry), c0 = px(cx - rx), c1 = px(cx + rx);
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        const double dy = (static_cast<double>(r) / h_ - cy) / ry;
        const double dx = (static_cast<double>(c) / w_ - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) fill_px(r, c, r + 1, c + 1, v);
      }
  }

  // Signature-like scribble.
  void scribble(double cy, double x0, double x1) {
    double y = cy * h_;
    const int thick = stroke();
    for (long c = px(x0); c < px(x1); ++c) {
      y += rng_.normal(0.0, 1.2);
      y = std::clamp(y, cy * h_ - 0.025 * h_, cy * h_ + 0.025 * h_);
      const long r = std::lround(y);
      fill_px(r, c, r + thick, c + 1, ink_);
    }
  }

  float ink() const { return ink_; }

 private:
  GrayImage img_;
  Rng& rng_;
  float ink_;
  double h_;
  double w_;
  double scale_;
};

void draw_letter(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch();
  const double x1 = 1.0 - mx;
  // Letterhead centered.
  const double hw = r.uniform(0.2, 0.3);
  cv.bold(my, 0.5 - hw, 0.5 + hw, s + 2);
  cv.text(my + 0.035, 0.5 - hw * 0.8, 0.5 + hw * 0.8, s);
  // Date on the right, then the inside address block.
  cv.text(my + 0.09, x1 - r.uniform(0.18, 0.25), x1, s);
  double y = my + 0.13;
  const int lines = r.range(4, 5);
  for (int i = 0; i < lines; ++i) {
    cv.text(y, mx, mx + r.uniform(0.22, 0.38), s);
    y += p;
  }
  y += p;
  cv.text(y, mx, mx + r.uniform(0.12, 0.2), s);  // salutation
  y += 1.5 * p;
  const double body_end = std::max(y + 6 * p, r.uniform(0.68, 0.76));
  cv.flow(y, body_end, mx, x1, p, 2, 5);
  y = body_end + p;
  cv.text(y, mx, mx + r.uniform(0.12, 0.2), s);  // closing
  cv.scribble(y + 0.06, mx, mx + r.uniform(0.2, 0.32));
  cv.text(y + 0.11, mx, mx + r.uniform(0.18, 0.28), s);
}

void draw_memo(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch();
  const double x1 = 1.0 - mx;
  cv.bold(my, mx, mx + r.uniform(0.35, 0.5), s + 3);
  double y = my + 0.08;
  const double label_w = r.uniform(0.08, 0.11);
  for (int i = 0; i < 4; ++i) {
    cv.bold(y, mx, mx + label_w, s);
    cv.text(y, mx + label_w + 0.05, mx + label_w + 0.05 + r.uniform(0.15, 0.3), s);
    y += 1.6 * p;
  }
  y += 0.3 * p;
  cv.hrule(y, mx, x1, s);
  y += 1.5 * p;
  const double end = r.uniform(0.72, 0.88);
  cv.flow(y, end, mx, x1, p, 2, 6);
  if (r.bernoulli(0.5)) cv.text(end + p, mx, mx + 0.1, s);  // initials
}

void draw_form(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch();
  const double x1 = 1.0 - mx;
  cv.bold(my, 0.5 - 0.15, 0.5 + 0.15, s);
  double y = my + 0.1;
  for (int i = 0; i < 2; ++i) {
    cv.text(y, mx, mx + 0.1, s);
    cv.hrule(y + 0.015, mx + 0.12, mx + r.uniform(0.4, 0.5), 1);
    y += 1.8 * p;
  }
  // Table grid.
  const double top = r.uniform(0.3, 0.36);
  const double bottom = 1.0 - my;
  const int rows = r.range(8, 13);
  const int cols = r.range(2, 4);
  const double rh = (bottom - top) / rows;
  for (int i = 0; i <= rows; ++i) cv.hrule(top + i * rh, mx, x1, 1);
  std::vector<double> xs{mx};
  for (int j = 1; j < cols; ++j) xs.push_back(mx + (x1 - mx) * (j + r.uniform(-0.2, 0.2)) / cols);
  xs.push_back(x1);
  for (double x : xs) cv.vrule(x, top, bottom, 1);
  for (int i = 0; i < rows; ++i) {
    const double cy = top + i * rh + rh * 0.35;
    if (r.bernoulli(0.7)) cv.text(cy, xs[0] + 0.02, xs[0] + 0.02 + r.uniform(0.05, 0.15), s);
    // Check boxes in the last column.
    if (r.bernoulli(0.6)) {
      const double bx = xs[xs.size() - 2] + 0.03;
      cv.box(cy - 0.008, bx, cy + 0.02, bx + 0.035, 1);
      if (r.bernoulli(0.5)) cv.rect(cy - 0.004, bx + 0.008, cy + 0.016, bx + 0.027);
    }
  }
}

void draw_news(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch() * 0.85;
  const double x1 = 1.0 - mx;
  cv.rect(my, mx, my + r.uniform(0.035, 0.05), x1);  // masthead
  cv.hrule(my + 0.065, mx, x1, 1);
  cv.bold(my + 0.09, mx, mx + r.uniform(0.5, 0.8) * (x1 - mx), s + 2);
  const double top = my + 0.14;
  const double gutter = 0.03;
  const double mid = 0.5;
  const double bottom = 1.0 - my;
  const bool photo_left = r.bernoulli(0.5);
  for (int col = 0; col < 2; ++col) {
    const double c0 = col == 0 ? mx : mid + gutter / 2;
    const double c1 = col == 0 ? mid - gutter / 2 : x1;
    double y = top;
    if ((col == 0) == photo_left) {
      const double ph = r.uniform(0.15, 0.25);
      cv.rect(y, c0, y + ph, c1, cv.ink() + 0.35f);
      y += ph + p;
    }
    while (y + p < bottom) {
      const double seg = std::min(bottom, y + r.uniform(0.12, 0.3));
      cv.paragraph(y, seg, c0, c1, p, 0.02);
      y = seg + p * 0.6;
    }
  }
  cv.vrule(mid, top, bottom, 1);
}

void draw_email(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch() * 0.9;
  double y = my;
  const int rows = r.range(5, 7);
  const double label_w = r.uniform(0.07, 0.1);
  for (int i = 0; i < rows; ++i) {
    cv.bold(y, mx, mx + label_w, s);
    cv.text(y, mx + label_w + 0.03, mx + label_w + 0.03 + r.uniform(0.35, 0.7), s);
    y += p;
  }
  y += 0.5 * p;
  cv.hrule(y, mx, 1.0 - mx, 1);
  y += 1.5 * p;
  // Short conversational lines, then a quoted block with a bar.
  const int lines = r.range(6, 12);
  for (int i = 0; i < lines; ++i) {
    if (r.bernoulli(0.2)) {
      y += p;
      continue;
    }
    cv.text(y, mx, mx + r.uniform(0.25, 0.75), s);
    y += p;
  }
  if (r.bernoulli(0.7)) {
    y += p;
    const double q0 = y;
    const int q = r.range(3, 7);
    for (int i = 0; i < q; ++i) {
      cv.text(y, mx + 0.04, mx + 0.04 + r.uniform(0.3, 0.6), s);
      y += p;
    }
    cv.vrule(mx + 0.01, q0 - 0.01, y - 0.01, s);
  }
}

void draw_ad(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const int shapes = r.range(1, 3);
  for (int i = 0; i < shapes; ++i) {
    const float tone = cv.ink() + static_cast<float>(r.uniform(0.15, 0.45));
    const double cy = r.uniform(0.25, 0.8);
    const double cx = r.uniform(0.25, 0.75);
    if (r.bernoulli(0.5)) {
      cv.ellipse(cy, cx, r.uniform(0.08, 0.2), r.uniform(0.12, 0.3), tone);
    } else {
      const double hh = r.uniform(0.06, 0.18), hw = r.uniform(0.12, 0.35);
      cv.rect(cy - hh, cx - hw, cy + hh, cx + hw, tone);
    }
  }
  const double hy = r.uniform(my, 0.2);
  cv.bold(hy, 0.5 - r.uniform(0.2, 0.35), 0.5 + r.uniform(0.2, 0.35), s * 4);
  const int lines = r.range(1, 4);
  for (int i = 0; i < lines; ++i) {
    const double y = r.uniform(0.55, 1.0 - my);
    const double hw = r.uniform(0.08, 0.25);
    cv.text(y, 0.5 - hw, 0.5 + hw, s);
  }
  if (r.bernoulli(0.6)) cv.bold(1.0 - my - 0.03, mx, mx + r.uniform(0.2, 0.4), s * 2);
}

void draw_report(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch();
  const double x1 = 1.0 - mx;
  double y = my + r.uniform(0.04, 0.08);
  for (int i = 0; i < 2; ++i) {
    const double hw = r.uniform(0.2, 0.35);
    cv.bold(y, 0.5 - hw, 0.5 + hw, s + 1);
    y += 1.6 * p;
  }
  cv.text(y, 0.5 - 0.12, 0.5 + 0.12, s);
  y += 3 * p;
  while (y < 0.88) {
    cv.bold(y, mx, mx + r.uniform(0.15, 0.3), s);
    y += 1.5 * p;
    const double end = std::min(0.9, y + r.uniform(0.12, 0.25));
    y = cv.paragraph(y, end, mx, x1, p, 0.05) + 0.5 * p;
  }
  cv.text(0.96, 0.48, 0.52, s);  // page number
}

void draw_invoice(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch();
  const double x1 = 1.0 - mx;
  cv.rect(my, mx, my + r.uniform(0.06, 0.09), mx + r.uniform(0.12, 0.18));  // logo
  double y = my;
  for (int i = 0; i < 3; ++i) {
    cv.text(y, x1 - r.uniform(0.2, 0.3), x1, s);
    y += p;
  }
  y = r.uniform(0.18, 0.22);
  for (int i = 0; i < 3; ++i) {
    cv.text(y, mx, mx + r.uniform(0.2, 0.3), s);
    y += p;
  }
  const double top = r.uniform(0.34, 0.4);
  const double x_cols[4] = {mx, mx + 0.45 * (x1 - mx), mx + 0.65 * (x1 - mx), mx + 0.82 * (x1 - mx)};
  cv.rect(top, mx, top + 0.035, x1, cv.ink() + 0.4f);
  const int rows = r.range(5, 10);
  double ry = top + 0.06;
  for (int i = 0; i < rows; ++i) {
    cv.text(ry, x_cols[0] + 0.01, x_cols[0] + r.uniform(0.15, 0.35), s);
    for (int c = 1; c < 4; ++c) {
      const double right = (c == 3 ? x1 : x_cols[c + 1]) - 0.02;
      cv.text(ry, right - r.uniform(0.04, 0.09), right, s);
    }
    cv.hrule(ry + 0.022, mx, x1, 1);
    ry += 1.5 * p;
  }
  const double by = std::max(ry + p, r.uniform(0.78, 0.84));
  cv.box(by, x_cols[2], by + 0.08, x1, 1);
  cv.bold(by + 0.03, x_cols[2] + 0.02, x_cols[2] + 0.1, s);
  cv.text(by + 0.03, x1 - 0.1, x1 - 0.02, s);
}

void draw_resume(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch();
  const double x1 = 1.0 - mx;
  cv.bold(my, 0.5 - r.uniform(0.12, 0.2), 0.5 + r.uniform(0.12, 0.2), s + 3);
  cv.text(my + 0.05, 0.5 - 0.25, 0.5 + 0.25, s);
  double y = my + 0.1;
  while (y < 0.9) {
    cv.bold(y, mx, mx + r.uniform(0.12, 0.22), s + 1);
    cv.hrule(y + 0.025, mx, x1, 1);
    y += 2.0 * p;
    const int items = r.range(2, 4);
    for (int i = 0; i < items && y < 0.94; ++i) {
      cv.rect(y, mx + 0.02, y + 0.012, mx + 0.035);  // bullet
      cv.text(y, mx + 0.06, mx + r.uniform(0.4, 0.8), s);
      y += 1.2 * p;
    }
    y += p;
  }
}

void draw_scientific(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  const double p = cv.pitch() * 0.8;
  const double x1 = 1.0 - mx;
  cv.bold(my, 0.5 - r.uniform(0.25, 0.38), 0.5 + r.uniform(0.25, 0.38), s + 1);
  cv.text(my + 0.04, 0.5 - 0.2, 0.5 + 0.2, s);
  double y = cv.paragraph(my + 0.08, my + 0.2, mx + 0.08, x1 - 0.08, p);
  const double top = y + p;
  const double bottom = 1.0 - my;
  const double mid = 0.5;
  const int fig_col = r.range(0, 1);
  for (int col = 0; col < 2; ++col) {
    const double c0 = col == 0 ? mx : mid + 0.02;
    const double c1 = col == 0 ? mid - 0.02 : x1;
    double yy = top;
    while (yy + p < bottom) {
      const double roll = r.uniform();
      if (col == fig_col && roll < 0.15 && yy < 0.6) {
        const double fh = r.uniform(0.12, 0.2);
        cv.box(yy, c0, yy + fh, c1, 1);
        // A curve inside the plot frame.
        double cy = yy + fh * 0.7;
        for (long c = cv.px(c0 + 0.02); c < cv.px(c1 - 0.02); ++c) {
          cy -= r.uniform(0.0, 0.002);
          cv.fill_px(cv.py(cy), c, cv.py(cy) + 1, c + 1, cv.ink());
        }
        yy += fh + 2 * p;
      } else if (roll < 0.3) {
        cv.text(yy, (c0 + c1) / 2 - 0.08, (c0 + c1) / 2 + 0.08, s);  // equation
        yy += 1.5 * p;
      } else {
        yy = cv.paragraph(yy, std::min(bottom, yy + r.uniform(0.08, 0.2)), c0, c1, p, 0.02);
      }
    }
  }
}

// Page furniture that occurs on any kind of document.
void draw_furniture(Canvas& cv, double mx, double my) {
  auto& r = cv.rng();
  const int s = cv.stroke();
  if (r.bernoulli(0.25)) {  // fax transmission header
    cv.text(0.012, 0.03, r.uniform(0.5, 0.97), std::max(1, s - 1));
  }
  if (r.bernoulli(0.3)) {  // logo block
    const double x = r.bernoulli(0.5) ? mx : 1.0 - mx - 0.12;
    cv.rect(my, x, my + r.uniform(0.03, 0.06), x + r.uniform(0.06, 0.12), cv.ink() + 0.1f);
  }
  if (r.bernoulli(0.35)) {  // page number or footer line
    const double y = 1.0 - my * r.uniform(0.3, 0.7);
    const double hw = r.uniform(0.02, 0.3);
    cv.text(y, 0.5 - hw, 0.5 + hw, s);
  }
  if (r.bernoulli(0.15)) {  // received stamp
    const double cy = r.uniform(0.1, 0.9), cx = r.uniform(0.2, 0.8);
    const double ry = r.uniform(0.03, 0.05), rx = r.uniform(0.08, 0.14);
    cv.box(cy - ry, cx - rx, cy + ry, cx + rx, 1);
    cv.text(cy - 0.008, cx - rx * 0.7, cx + rx * 0.7, 1);
  }
  if (r.bernoulli(0.2)) {  // handwritten annotation
    const double cy = r.uniform(0.05, 0.95), x0 = r.uniform(0.05, 0.6);
    cv.scribble(cy, x0, x0 + r.uniform(0.1, 0.3));
  }
  if (r.bernoulli(0.15)) {  // punch holes
    const double cx = r.uniform(0.02, 0.04);
    for (double cy : {0.25, 0.75}) cv.ellipse(cy, cx, 0.012, 0.016, cv.ink());
  }
}

// Scanner geometry: small rotation, scale and shift, bilinear resampling;
// uncovered pixels take the paper tone, and an optional dark edge mimics
// the scanner lid.
GrayImage scan_warp(const GrayImage& page, float paper, float ink, Rng& rng) {
  const double h = static_cast<double>(page.height), w = static_cast<double>(page.width);
  const double angle = rng.uniform(-1.5, 1.5) * std::numbers::pi / 180.0;
  const double scale = rng.uniform(0.92, 1.08);
  const double ty = rng.uniform(-0.04, 0.04) * h, tx = rng.uniform(-0.04, 0.04) * w;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double cy = 0.5 * (h - 1), cx = 0.5 * (w - 1);
  GrayImage out(page.height, page.width, paper);
  for (std::size_t r = 0; r < page.height; ++r)
    for (std::size_t c = 0; c < page.width; ++c) {
      const double y = (static_cast<double>(r) - cy - ty) / scale;
      const double x = (static_cast<double>(c) - cx - tx) / scale;
      const double sy = ca * y + sa * x + cy;
      const double sx = -sa * y + ca * x + cx;
      if (sy < 0 || sx < 0 || sy > h - 1 || sx > w - 1) continue;
      const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
      const std::size_t y1 = std::min(y0 + 1, page.height - 1), x1 = std::min(x0 + 1, page.width - 1);
      const float fy = static_cast<float>(sy - static_cast<double>(y0));
      const float fx = static_cast<float>(sx - static_cast<double>(x0));
      const float top = page.at(y0, x0) + fx * (page.at(y0, x1) - page.at(y0, x0));
      const float bot = page.at(y1, x0) + fx * (page.at(y1, x1) - page.at(y1, x0));
      out.at(r, c) = top + fy * (bot - top);
    }
  if (rng.bernoulli(0.2)) {
    const std::size_t band = static_cast<std::size_t>(rng.range(2, 6));
    const int side = rng.range(0, 3);
    const float edge = ink + 0.5f * (paper - ink) * static_cast<float>(rng.uniform());
    for (std::size_t r = 0; r < page.height; ++r)
      for (std::size_t c = 0; c < page.width; ++c) {
        const bool hit = (side == 0 && r < band) || (side == 1 && r + band >= page.height) ||
                         (side == 2 && c < band) || (side == 3 && c + band >= page.width);
        if (hit) out.at(r, c) = edge;
      }
  }
  return out;
}

}  // namespace

GrayImage render_document(Layout layout, std::size_t height, std::size_t width, double noise,
                          std::uint64_t seed) {
  Rng rng(seed);
  const float paper = static_cast<float>(rng.uniform(0.65, 1.0));
  const float ink = static_cast<float>(rng.uniform(0.0, 0.35));
  const double font_scale = rng.uniform(0.8, 1.3);
  Canvas cv(height, width, rng, paper, ink, font_scale);
  const double mx = rng.uniform(0.05, 0.12);
  const double my = rng.uniform(0.03, 0.08);
  switch (layout) {
    case Layout::Letter: draw_letter(cv, mx, my); break;
    case Layout::Memo: draw_memo(cv, mx, my); break;
    case Layout::Form: draw_form(cv, mx, my); break;
    case Layout::News: draw_news(cv, mx, my); break;
    case Layout::Email: draw_email(cv, mx, my); break;
    case Layout::Ad: draw_ad(cv, mx, my); break;
    case Layout::Report: draw_report(cv, mx, my); break;
    case Layout::Invoice: draw_invoice(cv, mx, my); break;
    case Layout::Resume: draw_resume(cv, mx, my); break;
    case Layout::Scientific: draw_scientific(cv, mx, my); break;
  }
  draw_furniture(cv, mx, my);
  GrayImage img = scan_warp(cv.image(), paper, ink, rng);
  const double sd = 0.08 * noise;
  const double speck = 0.002 * noise;
  for (auto& v : img.pixels) {
    double x = v + (sd > 0.0 ? rng.normal(0.0, sd) : 0.0);
    if (speck > 0.0 && rng.bernoulli(speck)) x = ink;
    v = static_cast<float>(std::clamp(x, 0.0, 1.0));
  }
  return img;
}

Manifest generate_synthetic(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec || !fs::is_directory(out_dir / "images")) {
    throw IoError("cannot create output directory " + (out_dir / "images").string());
  }
  Manifest m;
  m.base_dir = out_dir;
  for (Layout l : config.classes) m.label_names.emplace_back(layout_name(l));
  const std::size_t n_classes = config.classes.size();
  struct Job {
    Layout layout;
    int label;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < n_classes; ++c) {
    double frac = 1.0;
    if (n_classes > 1) frac -= config.imbalance * static_cast<double>(c) / static_cast<double>(n_classes - 1);
    const std::size_t count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(static_cast<double>(config.per_class) * frac)));
    for (std::size_t i = 0; i < count; ++i) jobs.push_back({config.classes[c], static_cast<int>(c), i});
  }
  std::vector<std::string> names(jobs.size());
  std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(jobs.size()); ++j) {
    const Job& job = jobs[j];
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05zu.pgm", std::string(layout_name(job.layout)).c_str(),
                  job.index);
    names[j] = std::string("images/") + buf;
    try {
      const auto img = render_document(
          job.layout, config.height, config.width, config.noise,
          derive_seed(config.seed, static_cast<std::uint64_t>(job.label), job.index));
      save_pgm(out_dir / names[j], img);
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw IoError(e);
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    m.entries.push_back({names[j], jobs[j].label, Split::Unassigned});
  }
  save_manifest(out_dir / "manifest.tsv", m);
  return m;
}

}  // namespace docstyle
