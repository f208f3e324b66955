#include "docstyle/features.hpp"

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"

namespace docstyle {

namespace {
constexpr std::string_view kMagic = "DSFEA1";
}

void FeatureMatrix::validate() const {
  if (values.size() != rows * cols || ids.size() != rows || labels.size() != rows) {
    throw ShapeError("feature matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " has " + std::to_string(values.size()) + " values, " +
                     std::to_string(ids.size()) + " ids, " + std::to_string(labels.size()) +
                     " labels");
  }
}

FeatureMatrix concat_rows(std::span<const FeatureMatrix> parts) {
  FeatureMatrix out;
  if (parts.empty()) return out;
  out.cols = parts.front().cols;
  for (const auto& p : parts) {
    p.validate();
    if (p.cols != out.cols) {
      throw ShapeError("concat_rows: column counts differ (" + std::to_string(p.cols) + " vs " +
                       std::to_string(out.cols) + ")");
    }
    out.rows += p.rows;
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    out.ids.insert(out.ids.end(), p.ids.begin(), p.ids.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& m) {
  m.validate();
  BinaryWriter w(path);
  w.magic(kMagic);
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  w.f32s(m.values);
  for (const auto& id : m.ids) w.string(id);
  for (int y : m.labels) w.i32(y);
  w.close();
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kMagic);
  FeatureMatrix m;
  m.rows = r.u32();
  m.cols = r.u32();
  m.values = r.f32s(m.rows * m.cols);
  m.ids.reserve(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) m.ids.push_back(r.string());
  m.labels.reserve(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) m.labels.push_back(r.i32());
  r.expect_end();
  return m;
}

}  // namespace docstyle
