#pragma once

// Forward/backward passes for the fixed layer set used by the document
// classification networks, softmax cross-entropy, and the SGD update rule.
//
// Activations are batch-major tensors: [N, C, H, W] for convolution and
// pooling, [N, D] after a fully-connected layer. Per-sample shapes (without
// the batch axis) are used for shape inference.

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "docstyle/tensor.hpp"

namespace docstyle {

struct Conv {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  friend bool operator==(const Conv&, const Conv&) = default;
};

struct Pool {
  std::size_t size = 2;
  std::size_t stride = 2;
  friend bool operator==(const Pool&, const Pool&) = default;
};

struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};

struct Dropout {
  double rate = 0.5;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};

struct FullyConnected {
  std::size_t units = 1;
  friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};

struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

using LayerSpec = std::variant<Conv, Pool, Relu, Dropout, FullyConnected, Softmax>;

enum class Mode { Train, Infer };

std::string layer_name(const LayerSpec& layer);

// Throws InvalidArgument when a hyperparameter is out of range.
void validate_layer(const LayerSpec& layer);

// Per-sample output shape; throws ShapeError naming the layer and dimensions.
Shape layer_output_shape(const LayerSpec& layer, const Shape& sample_in);

// Parameter shapes ({weight, bias} for Conv/FullyConnected, none otherwise).
std::vector<Shape> layer_param_shapes(const LayerSpec& layer, const Shape& sample_in);

bool has_params(const LayerSpec& layer);

template <typename T>
struct LayerCache {
  std::size_t kind = 0;  // LayerSpec::index() of the producing layer
  Shape input_shape;
  Shape output_shape;
  Tensor<T> input;                  // Conv, FullyConnected, Relu
  Tensor<T> output;                 // Softmax
  std::vector<std::size_t> argmax;  // Pool
  std::vector<T> mask;              // Dropout (already scaled by 1/(1-p))
};

template <typename T>
struct LayerOutput {
  Tensor<T> output;
  LayerCache<T> cache;
};

template <typename T>
struct LayerGrads {
  Tensor<T> input;  // empty when the input gradient was not requested
  std::vector<Tensor<T>> params;
};

template <typename T>
LayerOutput<T> apply_layer(const LayerSpec& layer, std::span<const Tensor<T>> params,
                           const Tensor<T>& input, Mode mode, std::uint64_t rng_seed);

template <typename T>
LayerGrads<T> backprop_layer(const LayerSpec& layer, std::span<const Tensor<T>> params,
                             const LayerCache<T>& cache, const Tensor<T>& grad_output,
                             bool want_input_grad = true);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_logits;
};

// Mean softmax cross-entropy over the batch; logits are [batch, classes].
template <typename T>
LossResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels);

// Row-wise softmax of a [batch, classes] tensor.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

template <typename T>
struct SgdState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<Tensor<T>> velocity;  // lazily sized on the first update
};

// v <- momentum*v - lr*(grad + decay*param); param <- param + v.
template <typename T>
void sgd_update(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
                SgdState<T>& state);

}  // namespace docstyle
