#include "docstyle/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"
#include "docstyle/linalg.hpp"

namespace docstyle {

namespace {

template <typename T>
bool normalize_impl(std::span<T> v) {
  double s = 0.0;
  for (T x : v) s += static_cast<double>(x) * static_cast<double>(x);
  const double norm = std::sqrt(s);
  if (!(norm > kZeroNorm)) return false;
  for (T& x : v) x = static_cast<T>(static_cast<double>(x) / norm);
  return true;
}

using idx = std::ptrdiff_t;

// Projects column j of basis (D x d) off columns [0, j) and normalizes it.
double orthogonalize_column(std::vector<double>& basis, std::size_t dim, std::size_t d, std::size_t j) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < j; ++i) {
      double dot = 0.0;
      for (std::size_t r = 0; r < dim; ++r) dot += basis[r * d + i] * basis[r * d + j];
      for (std::size_t r = 0; r < dim; ++r) basis[r * d + j] -= dot * basis[r * d + i];
    }
  }
  double norm = 0.0;
  for (std::size_t r = 0; r < dim; ++r) norm += basis[r * d + j] * basis[r * d + j];
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (std::size_t r = 0; r < dim; ++r) basis[r * d + j] /= norm;
  }
  return norm;
}

void apply_sign_convention(std::vector<double>& basis, std::size_t dim, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < dim; ++r) {
      const double a = std::abs(basis[r * d + j]);
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (basis[arg * d + j] < 0.0) {
      for (std::size_t r = 0; r < dim; ++r) basis[r * d + j] = -basis[r * d + j];
    }
  }
}

}  // namespace

bool l2_normalize(std::span<double> v) { return normalize_impl(v); }
bool l2_normalize(std::span<float> v) { return normalize_impl(v); }

std::size_t l2_normalize_rows(FeatureMatrix& m) {
  std::size_t zero = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    if (!l2_normalize(m.row(i))) ++zero;
  }
  return zero;
}

double PcaModel::captured_variance() const {
  return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0);
}

PcaModel pca_fit(std::span<const double> x, std::size_t n, std::size_t dim, std::size_t d) {
  if (x.size() != n * dim) throw ShapeError("pca: data is not N x D");
  if (n < 2) throw InvalidArgument("pca: need at least 2 rows, got " + std::to_string(n));
  if (d < 1 || d > std::min(n - 1, dim)) {
    throw InvalidArgument("pca: target dim " + std::to_string(d) + " must be in [1, min(N-1, D)] = [1, " +
                          std::to_string(std::min(n - 1, dim)) + "]");
  }
  PcaModel m;
  m.input_dim = dim;
  m.output_dim = d;
  m.mean.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) m.mean[j] += x[i * dim + j];
  for (double& v : m.mean) v /= static_cast<double>(n);
  std::vector<double> xc(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j) xc[i * dim + j] = x[i * dim + j] - m.mean[j];

  const double denom = static_cast<double>(n - 1);
  double total = 0.0;
  for (double v : xc) total += v * v;
  m.total_variance = total / denom;
  if (!(m.total_variance > 0.0)) {
    throw InvalidArgument("pca: all rows are identical (rank 0), no principal direction exists");
  }

  m.basis.assign(dim * d, 0.0);
  m.eigenvalues.assign(d, 0.0);
  if (dim <= n) {
    std::vector<double> cov(dim * dim);
#pragma omp parallel for schedule(dynamic, 8)
    for (idx a = 0; a < static_cast<idx>(dim); ++a) {
      for (std::size_t b = static_cast<std::size_t>(a); b < dim; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += xc[i * dim + a] * xc[i * dim + b];
        cov[a * dim + b] = s / denom;
      }
    }
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < a; ++b) cov[a * dim + b] = cov[b * dim + a];
    const auto eig = jacobi_eigen(std::move(cov), dim);
    for (std::size_t j = 0; j < d; ++j) {
      m.eigenvalues[j] = eig.values[j];
      for (std::size_t r = 0; r < dim; ++r) m.basis[r * d + j] = eig.vectors[j * dim + r];
    }
  } else {
    std::vector<double> gram(n * n);
#pragma omp parallel for schedule(dynamic, 8)
    for (idx a = 0; a < static_cast<idx>(n); ++a) {
      for (std::size_t b = static_cast<std::size_t>(a); b < n; ++b) {
        double s = 0.0;
        const double* ra = xc.data() + a * dim;
        const double* rb = xc.data() + b * dim;
        for (std::size_t k = 0; k < dim; ++k) s += ra[k] * rb[k];
        gram[a * n + b] = s / denom;
      }
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < a; ++b) gram[a * n + b] = gram[b * n + a];
    const auto eig = jacobi_eigen(std::move(gram), n);
    const double floor = 1e-12 * std::max(eig.values[0], 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      const double lambda = eig.values[j];
      m.eigenvalues[j] = lambda;
      if (lambda <= floor) continue;  // completed below
      const double* u = eig.vectors.data() + j * n;
      const double inv = 1.0 / std::sqrt(denom * lambda);
      for (std::size_t r = 0; r < dim; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += xc[i * dim + r] * u[i];
        m.basis[r * d + j] = s * inv;
      }
    }
  }

  // Null-space components (and Gram-path rounding) are cleaned up by
  // re-orthonormalizing in order; columns with no direction left are
  // completed from the standard basis.
  std::size_t next_unit = 0;
  for (std::size_t j = 0; j < d; ++j) {
    if (orthogonalize_column(m.basis, dim, d, j) > 0.5) continue;
    for (;; ++next_unit) {
      if (next_unit == dim) throw Error("pca: cannot complete an orthonormal basis");
      for (std::size_t r = 0; r < dim; ++r) m.basis[r * d + j] = r == next_unit ? 1.0 : 0.0;
      if (orthogonalize_column(m.basis, dim, d, j) > 0.5) {
        ++next_unit;
        break;
      }
    }
  }
  for (double& e : m.eigenvalues) e = std::max(e, 0.0);
  apply_sign_convention(m.basis, dim, d);
  return m;
}

PcaModel pca_fit(const FeatureMatrix& m, std::size_t d) {
  const auto x = m.as_double();
  return pca_fit(x, m.rows, m.cols, d);
}

std::vector<double> pca_transform(const PcaModel& model, std::span<const double> x, std::size_t n) {
  if (x.size() != n * model.input_dim) {
    throw ShapeError("pca: input has " + std::to_string(n ? x.size() / n : 0) +
                     " columns, model expects " + std::to_string(model.input_dim));
  }
  const std::size_t dim = model.input_dim, d = model.output_dim;
  std::vector<double> out(n * d, 0.0);
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(n); ++i) {
    double* o = out.data() + i * d;
    for (std::size_t r = 0; r < dim; ++r) {
      const double c = x[i * dim + r] - model.mean[r];
      const double* b = model.basis.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += c * b[j];
    }
  }
  return out;
}

FeatureMatrix pca_transform(const PcaModel& model, const FeatureMatrix& m) {
  if (m.cols != model.input_dim) {
    throw ShapeError("pca: features have " + std::to_string(m.cols) + " columns, model expects " +
                     std::to_string(model.input_dim));
  }
  const auto y = pca_transform(model, m.as_double(), m.rows);
  FeatureMatrix out(m.rows, model.output_dim);
  std::transform(y.begin(), y.end(), out.values.begin(), [](double v) { return static_cast<float>(v); });
  out.ids = m.ids;
  out.labels = m.labels;
  return out;
}

PcaModel pca_truncate(const PcaModel& model, std::size_t d) {
  if (d < 1 || d > model.output_dim) {
    throw InvalidArgument("pca: cannot truncate a " + std::to_string(model.output_dim) +
                          "-component model to " + std::to_string(d));
  }
  PcaModel out;
  out.input_dim = model.input_dim;
  out.output_dim = d;
  out.mean = model.mean;
  out.total_variance = model.total_variance;
  out.eigenvalues.assign(model.eigenvalues.begin(), model.eigenvalues.begin() + static_cast<idx>(d));
  out.basis.resize(model.input_dim * d);
  for (std::size_t r = 0; r < model.input_dim; ++r)
    for (std::size_t j = 0; j < d; ++j) out.basis[r * d + j] = model.basis[r * model.output_dim + j];
  return out;
}

void save_pca(const std::filesystem::path& path, const PcaModel& m) {
  BinaryWriter w(path);
  w.magic("DSPCA1");
  w.u32(static_cast<std::uint32_t>(m.input_dim));
  w.u32(static_cast<std::uint32_t>(m.output_dim));
  w.f64s(m.mean);
  w.f64s(m.basis);
  w.f64s(m.eigenvalues);
  w.f64(m.total_variance);
  w.close();
}

PcaModel load_pca(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("DSPCA1");
  PcaModel m;
  m.input_dim = r.u32();
  m.output_dim = r.u32();
  if (m.input_dim < 1 || m.output_dim < 1 || m.output_dim > m.input_dim) {
    throw ParseError(path.string() + ": bad PCA dimensions");
  }
  m.mean = r.f64s(m.input_dim);
  m.basis = r.f64s(m.input_dim * m.output_dim);
  m.eigenvalues = r.f64s(m.output_dim);
  m.total_variance = r.f64();
  r.expect_end();
  return m;
}

EnsembleDescriptor build_ensemble_descriptor(std::span<const RegionInput> inputs, std::size_t d_each) {
  EnsembleDescriptor out;
  for (const auto& in : inputs) {
    if (in.model == nullptr) throw InvalidArgument("ensemble: region '" + in.region + "' has no PCA model");
    if (in.model->output_dim != d_each) {
      throw ShapeError("ensemble: region '" + in.region + "' model outputs " +
                       std::to_string(in.model->output_dim) + " dims, expected " + std::to_string(d_each));
    }
    std::vector<double> v(in.vector.begin(), in.vector.end());
    std::vector<double> part(d_each, 0.0);
    if (l2_normalize(v)) {
      part = pca_transform(*in.model, v, 1);
      l2_normalize(part);
    }
    out.regions.push_back(in.region);
    out.values.insert(out.values.end(), part.begin(), part.end());
    out.parts.push_back(std::move(part));
  }
  return out;
}

FeatureMatrix build_ensemble_features(std::span<const FeatureMatrix> regions,
                                      std::span<const PcaModel> models, std::size_t d_each) {
  if (regions.empty() || regions.size() != models.size()) {
    throw ShapeError("ensemble: need one PCA model per region");
  }
  const std::size_t n = regions[0].rows;
  FeatureMatrix out(n, d_each * regions.size());
  out.ids = regions[0].ids;
  out.labels = regions[0].labels;
  for (std::size_t g = 0; g < regions.size(); ++g) {
    if (regions[g].rows != n || regions[g].ids != out.ids) {
      throw ShapeError("ensemble: region feature rows are not aligned");
    }
    if (models[g].output_dim != d_each) {
      throw ShapeError("ensemble: model " + std::to_string(g) + " outputs " +
                       std::to_string(models[g].output_dim) + " dims, expected " + std::to_string(d_each));
    }
    FeatureMatrix x = regions[g];
    std::vector<char> zero(n, 0);
    for (std::size_t i = 0; i < n; ++i) zero[i] = !l2_normalize(x.row(i));
    FeatureMatrix y = pca_transform(models[g], x);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = out.row(i).subspan(g * d_each, d_each);
      if (zero[i]) continue;
      std::copy(y.row(i).begin(), y.row(i).end(), dst.begin());
      l2_normalize(dst);
    }
  }
  return out;
}

}  // namespace docstyle
