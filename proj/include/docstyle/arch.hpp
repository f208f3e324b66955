#pragma once

// Architecture strings.
//
// Compact form, as used to describe the reference networks:
//
//   227x227-11x11x96-5x5x256-3x3x384-3x3x384-3x3x256-4096-4096-N
//
// The first token is the input (HxW, HxWxC, or a bare integer D for a
// vector input). AxBxC is a convolution with an AxB kernel and C filters,
// a bare integer is a fully-connected layer, and the trailing N is the
// classifier over n_classes outputs; a softmax is always appended.
//
// When the string carries no layer annotations, the usual placement is
// filled in: ReLU after every convolution and every hidden fully-connected
// layer; 3x3/stride-2 max-pooling after convolutions 1, 2 and 5 of a
// five-convolution network (after every convolution otherwise); stride 4
// for a first convolution with a kernel of 11 or more, stride 1 elsewhere;
// "same" padding for odd stride-1 kernels; dropout 0.5 after the first two
// hidden fully-connected layers.
//
// Explicit form (what render_arch produces) spells out every layer:
//
//   AxBxC/S+P  convolution with stride S and padding P
//   pK:S       max-pooling, window K, stride S
//   r          ReLU
//   dP         dropout with rate P
//   s          softmax (final token, after N)
//
// Any annotation token switches the parser to explicit mode, where nothing
// is inserted.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docstyle/layers.hpp"

namespace docstyle {

struct ArchSpec {
  std::size_t input_height = 1;
  std::size_t input_width = 1;
  std::size_t input_channels = 1;
  std::vector<LayerSpec> layers;
  std::size_t n_classes = 2;

  Shape input_shape() const { return {input_channels, input_height, input_width}; }
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

ArchSpec parse_arch(std::string_view text, std::size_t n_classes);
std::string render_arch(const ArchSpec& spec);

// Checks the structural invariants (final FullyConnected(n_classes) +
// Softmax, positive extents everywhere); throws ShapeError/InvalidArgument.
void validate_arch(const ArchSpec& spec);

// Per-sample output shape of every layer, in order.
std::vector<Shape> activation_shapes(const ArchSpec& spec);

// Index of the first FullyConnected layer (the default feature tap).
std::size_t first_fc_index(const ArchSpec& spec);

// Named presets: "big" (227x227 reference), "small" (150x150),
// "desk" (64x64, kernels scaled down from "small"), "ensemble-head"
// (3200-4096-N over concatenated region descriptors).
std::string arch_preset(std::string_view name);
std::vector<std::string> arch_preset_names();

}  // namespace docstyle
