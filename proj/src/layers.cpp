#include "docstyle/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "docstyle/kernels.hpp"
#include "docstyle/random.hpp"

namespace docstyle {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

[[noreturn]] void shape_fail(const LayerSpec& layer, const std::string& what) {
  throw ShapeError(layer_name(layer) + ": " + what);
}

Shape batch_shape(std::size_t n, const Shape& sample) {
  Shape s{n};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

Shape sample_shape(const Shape& batch) { return Shape(batch.begin() + 1, batch.end()); }

kernels::ConvGeometry conv_geometry(const Conv& c, const Shape& in, std::size_t batch) {
  kernels::ConvGeometry g;
  g.batch = batch;
  g.in_channels = in[0];
  g.in_h = in[1];
  g.in_w = in[2];
  g.out_channels = c.out_channels;
  g.kernel_h = c.kernel_h;
  g.kernel_w = c.kernel_w;
  g.stride = c.stride;
  g.pad = c.pad;
  g.out_h = (in[1] + 2 * c.pad - c.kernel_h) / c.stride + 1;
  g.out_w = (in[2] + 2 * c.pad - c.kernel_w) / c.stride + 1;
  return g;
}

kernels::PoolGeometry pool_geometry(const Pool& p, const Shape& in, std::size_t batch) {
  kernels::PoolGeometry g;
  g.batch = batch;
  g.channels = in[0];
  g.in_h = in[1];
  g.in_w = in[2];
  g.size = p.size;
  g.stride = p.stride;
  g.out_h = (in[1] - p.size) / p.stride + 1;
  g.out_w = (in[2] - p.size) / p.stride + 1;
  return g;
}

template <typename T>
void check_params(const LayerSpec& layer, std::span<const Tensor<T>> params, const Shape& in) {
  const auto shapes = layer_param_shapes(layer, in);
  if (params.size() != shapes.size()) {
    shape_fail(layer, "expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      shape_fail(layer, "parameter " + std::to_string(i) + " has shape " +
                            shape_string(params[i].shape()) + ", expected " +
                            shape_string(shapes[i]));
    }
  }
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  return std::visit(
      overloaded{
          [](const Conv& c) {
            std::ostringstream os;
            os << "Conv(" << c.kernel_h << "x" << c.kernel_w << "x" << c.out_channels
               << ", stride " << c.stride << ", pad " << c.pad << ")";
            return os.str();
          },
          [](const Pool& p) {
            return "Pool(" + std::to_string(p.size) + ", stride " + std::to_string(p.stride) + ")";
          },
          [](const Relu&) { return std::string("ReLU"); },
          [](const Dropout& d) {
            std::ostringstream os;
            os << "Dropout(" << d.rate << ")";
            return os.str();
          },
          [](const FullyConnected& f) { return "FullyConnected(" + std::to_string(f.units) + ")"; },
          [](const Softmax&) { return std::string("Softmax"); },
      },
      layer);
}

void validate_layer(const LayerSpec& layer) {
  std::visit(overloaded{
                 [&](const Conv& c) {
                   if (c.kernel_h < 1 || c.kernel_w < 1 || c.out_channels < 1 || c.stride < 1)
                     throw InvalidArgument(layer_name(layer) + ": extents and stride must be >= 1");
                 },
                 [&](const Pool& p) {
                   if (p.size < 1 || p.stride < 1)
                     throw InvalidArgument(layer_name(layer) + ": size and stride must be >= 1");
                 },
                 [](const Relu&) {},
                 [&](const Dropout& d) {
                   if (!(d.rate >= 0.0 && d.rate < 1.0))
                     throw InvalidArgument(layer_name(layer) + ": rate must be in [0, 1)");
                 },
                 [&](const FullyConnected& f) {
                   if (f.units < 1) throw InvalidArgument(layer_name(layer) + ": units must be >= 1");
                 },
                 [](const Softmax&) {},
             },
             layer);
}

bool has_params(const LayerSpec& layer) {
  return std::holds_alternative<Conv>(layer) || std::holds_alternative<FullyConnected>(layer);
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& in) {
  validate_layer(layer);
  return std::visit(
      overloaded{
          [&](const Conv& c) -> Shape {
            if (in.size() != 3) shape_fail(layer, "needs a CxHxW input, got " + shape_string(in));
            if (in[1] + 2 * c.pad < c.kernel_h || in[2] + 2 * c.pad < c.kernel_w) {
              shape_fail(layer, "kernel " + std::to_string(c.kernel_h) + "x" +
                                    std::to_string(c.kernel_w) + " larger than padded input " +
                                    shape_string(in));
            }
            return {c.out_channels, (in[1] + 2 * c.pad - c.kernel_h) / c.stride + 1,
                    (in[2] + 2 * c.pad - c.kernel_w) / c.stride + 1};
          },
          [&](const Pool& p) -> Shape {
            if (in.size() != 3) shape_fail(layer, "needs a CxHxW input, got " + shape_string(in));
            if (in[1] < p.size || in[2] < p.size) {
              shape_fail(layer, "window larger than input " + shape_string(in));
            }
            return {in[0], (in[1] - p.size) / p.stride + 1, (in[2] - p.size) / p.stride + 1};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const Dropout&) -> Shape { return in; },
          [&](const FullyConnected& f) -> Shape { return {f.units}; },
          [&](const Softmax&) -> Shape {
            if (in.size() != 1) shape_fail(layer, "needs a vector input, got " + shape_string(in));
            return in;
          },
      },
      layer);
}

std::vector<Shape> layer_param_shapes(const LayerSpec& layer, const Shape& in) {
  if (const auto* c = std::get_if<Conv>(&layer)) {
    if (in.size() != 3) shape_fail(layer, "needs a CxHxW input, got " + shape_string(in));
    return {{c->out_channels, in[0], c->kernel_h, c->kernel_w}, {c->out_channels}};
  }
  if (const auto* f = std::get_if<FullyConnected>(&layer)) {
    return {{f->units, shape_size(in)}, {f->units}};
  }
  return {};
}

template <typename T>
LayerOutput<T> apply_layer(const LayerSpec& layer, std::span<const Tensor<T>> params,
                           const Tensor<T>& input, Mode mode, std::uint64_t rng_seed) {
  if (input.rank() < 2) {
    shape_fail(layer, "input must have a batch axis, got " + shape_string(input.shape()));
  }
  const std::size_t batch = input.dim(0);
  const Shape in = sample_shape(input.shape());
  const Shape out = layer_output_shape(layer, in);
  check_params(layer, params, in);

  LayerOutput<T> r;
  r.cache.kind = layer.index();
  r.cache.input_shape = input.shape();
  r.cache.output_shape = batch_shape(batch, out);
  r.output = Tensor<T>(r.cache.output_shape);

  std::visit(
      overloaded{
          [&](const Conv& c) {
            const auto g = conv_geometry(c, in, batch);
            kernels::conv2d_forward<T>(g, input.data(), params[0].data(), params[1].data(),
                                       r.output.data());
            r.cache.input = input;
          },
          [&](const Pool& p) {
            const auto g = pool_geometry(p, in, batch);
            r.cache.argmax.resize(r.output.size());
            kernels::maxpool_forward<T>(g, input.data(), r.output.data(), r.cache.argmax);
          },
          [&](const Relu&) {
            auto x = input.data();
            auto y = r.output.data();
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
            r.cache.input = input;
          },
          [&](const Dropout& d) {
            if (mode == Mode::Infer) {
              r.output = input.reshaped(r.cache.output_shape);
              return;
            }
            Rng rng(rng_seed);
            const T scale = static_cast<T>(1.0 / (1.0 - d.rate));
            r.cache.mask.resize(input.size());
            for (auto& m : r.cache.mask) m = rng.bernoulli(d.rate) ? T{0} : scale;
            auto x = input.data();
            auto y = r.output.data();
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * r.cache.mask[i];
          },
          [&](const FullyConnected& f) {
            kernels::DenseGeometry g{batch, shape_size(in), f.units};
            kernels::dense_forward<T>(g, input.data(), params[0].data(), params[1].data(),
                                      r.output.data());
            r.cache.input = input;
          },
          [&](const Softmax&) {
            r.output = softmax_rows(input);
            r.cache.output = r.output;
          },
      },
      layer);
  return r;
}

template <typename T>
LayerGrads<T> backprop_layer(const LayerSpec& layer, std::span<const Tensor<T>> params,
                             const LayerCache<T>& cache, const Tensor<T>& grad_output,
                             bool want_input_grad) {
  if (cache.kind != layer.index()) {
    throw InvalidArgument("backprop: cache was produced by a different layer kind than " +
                          layer_name(layer));
  }
  if (grad_output.shape() != cache.output_shape) {
    shape_fail(layer, "upstream gradient shape " + shape_string(grad_output.shape()) +
                          " differs from forward output " + shape_string(cache.output_shape));
  }
  const std::size_t batch = cache.input_shape[0];
  const Shape in = sample_shape(cache.input_shape);
  check_params(layer, params, in);

  LayerGrads<T> g;
  if (want_input_grad) g.input = Tensor<T>(cache.input_shape);
  std::span<T> dx = want_input_grad ? g.input.data() : std::span<T>{};

  std::visit(
      overloaded{
          [&](const Conv& c) {
            const auto geo = conv_geometry(c, in, batch);
            g.params.emplace_back(params[0].shape());
            g.params.emplace_back(params[1].shape());
            kernels::conv2d_backward<T>(geo, cache.input.data(), params[0].data(),
                                        grad_output.data(), dx, g.params[0].data(),
                                        g.params[1].data());
          },
          [&](const Pool& p) {
            if (!want_input_grad) return;
            const auto geo = pool_geometry(p, in, batch);
            kernels::maxpool_backward<T>(geo, cache.argmax, grad_output.data(), dx);
          },
          [&](const Relu&) {
            if (!want_input_grad) return;
            auto x = cache.input.data();
            auto dy = grad_output.data();
            for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
          },
          [&](const Dropout&) {
            if (!want_input_grad) return;
            auto dy = grad_output.data();
            if (cache.mask.empty()) {
              std::copy(dy.begin(), dy.end(), dx.begin());
              return;
            }
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * cache.mask[i];
          },
          [&](const FullyConnected& f) {
            kernels::DenseGeometry geo{batch, shape_size(in), f.units};
            g.params.emplace_back(params[0].shape());
            g.params.emplace_back(params[1].shape());
            kernels::dense_backward<T>(geo, cache.input.data(), params[0].data(),
                                       grad_output.data(), dx, g.params[0].data(),
                                       g.params[1].data());
          },
          [&](const Softmax&) {
            if (!want_input_grad) return;
            const std::size_t k = in[0];
            auto y = cache.output.data();
            auto dy = grad_output.data();
            for (std::size_t n = 0; n < batch; ++n) {
              T s{};
              for (std::size_t j = 0; j < k; ++j) s += dy[n * k + j] * y[n * k + j];
              for (std::size_t j = 0; j < k; ++j) dx[n * k + j] = y[n * k + j] * (dy[n * k + j] - s);
            }
          },
      },
      layer);
  return g;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [batch, classes], got " +
                                           shape_string(logits.shape()));
  const std::size_t batch = logits.dim(0);
  const std::size_t k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* z = logits.ptr() + n * k;
    T* out = p.ptr() + n * k;
    const T m = *std::max_element(z, z + k);
    T s{};
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = std::exp(z[j] - m);
      s += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] /= s;
  }
  return p;
}

template <typename T>
LossResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_xent expects [batch, classes], got " + shape_string(logits.shape()));
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InvalidArgument("softmax_xent: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(k) + ")");
    }
  }
  LossResult<T> r;
  r.grad_logits = Tensor<T>(logits.shape());
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* z = logits.ptr() + n * k;
    T* g = r.grad_logits.ptr() + n * k;
    double m = z[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(z[j]));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j]) - m);
    const double log_s = std::log(s);
    const std::size_t y = static_cast<std::size_t>(labels[n]);
    total += -(static_cast<double>(z[y]) - m - log_s);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(z[j]) - m - log_s);
      g[j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) * inv_batch);
    }
  }
  r.loss = total * inv_batch;
  return r;
}

template <typename T>
void sgd_update(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
                SgdState<T>& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_update: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.velocity.empty()) {
    for (const auto& p : params) state.velocity.emplace_back(p.shape(), T{0});
  }
  if (state.velocity.size() != params.size()) {
    throw ShapeError("sgd_update: velocity count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.velocity[i].shape()) {
      throw ShapeError("sgd_update: shape mismatch at parameter " + std::to_string(i) + ": " +
                       shape_string(params[i].shape()) + " vs grad " +
                       shape_string(grads[i].shape()) + " vs velocity " +
                       shape_string(state.velocity[i].shape()));
    }
  }
  const T lr = static_cast<T>(state.learning_rate);
  const T mu = static_cast<T>(state.momentum);
  const T decay = static_cast<T>(state.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].ptr();
    const T* g = grads[i].ptr();
    T* v = state.velocity[i].ptr();
    const std::size_t n = params[i].size();
    for (std::size_t j = 0; j < n; ++j) {
      v[j] = mu * v[j] - lr * (g[j] + decay * p[j]);
      p[j] += v[j];
    }
  }
}

#define DOCSTYLE_INSTANTIATE(T)                                                               \
  template LayerOutput<T> apply_layer<T>(const LayerSpec&, std::span<const Tensor<T>>,       \
                                         const Tensor<T>&, Mode, std::uint64_t);             \
  template LayerGrads<T> backprop_layer<T>(const LayerSpec&, std::span<const Tensor<T>>,     \
                                           const LayerCache<T>&, const Tensor<T>&, bool);    \
  template LossResult<T> softmax_xent<T>(const Tensor<T>&, std::span<const int>);            \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                      \
  template void sgd_update<T>(std::span<Tensor<T>>, std::span<const Tensor<T>>, SgdState<T>&);

DOCSTYLE_INSTANTIATE(float)
DOCSTYLE_INSTANTIATE(double)
#undef DOCSTYLE_INSTANTIATE

}  // namespace docstyle
