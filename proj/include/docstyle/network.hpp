#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docstyle/arch.hpp"
#include "docstyle/features.hpp"
#include "docstyle/layers.hpp"
#include "docstyle/tensor.hpp"

namespace docstyle {

struct InitRecord {
  bool transfer = false;
  std::uint64_t seed = 0;
  std::string donor;               // transfer only
  std::size_t layers_copied = 0;   // number of leading layers taken from the donor
  friend bool operator==(const InitRecord&, const InitRecord&) = default;
};

// Trained (or freshly initialized) network. Parameters are stored flat, in
// layer order; layer i owns params[param_offset[i] .. param_offset[i+1]).
struct Network {
  ArchSpec spec;
  std::vector<Tensor32> params;
  std::vector<std::size_t> param_offset;
  InitRecord init;

  std::span<const Tensor32> layer_params(std::size_t layer) const {
    return std::span<const Tensor32>(params).subspan(
        param_offset[layer], param_offset[layer + 1] - param_offset[layer]);
  }
  std::span<Tensor32> layer_params(std::size_t layer) {
    return std::span<Tensor32>(params).subspan(param_offset[layer],
                                               param_offset[layer + 1] - param_offset[layer]);
  }
};

struct RandomInit {
  std::uint64_t seed = 1;
  // Standard deviation of the zero-mean normal weight draw; 0 selects
  // sqrt(2 / fan_in) per layer.
  double scale = 0.0;
};

struct TransferInit {
  const Network* donor = nullptr;
  std::string donor_name;
  // Number of leading layers to copy; default is everything except the
  // classifier head (final FullyConnected + Softmax).
  std::optional<std::size_t> prefix_layers;
  std::uint64_t seed = 1;  // for the freshly initialized remainder
  double scale = 0.0;
};

Network init_network(const ArchSpec& spec, const RandomInit& mode);
Network init_network(const ArchSpec& spec, const TransferInit& mode);

// Images as [N, C, H, W] with aligned labels.
struct ImageSet {
  Tensor32 images;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 40;
  std::size_t patience = 8;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stopping_epoch = 0;  // number of epochs run
  std::size_t best_epoch = 0;      // 1-based; 0 when no epoch ran
};

struct TrainResult {
  Network net;
  TrainHistory history;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochRecord&)>;

// Minibatch SGD with plateau stopping on validation accuracy; returns the
// parameters of the best-validation epoch. An empty validation set selects
// on training accuracy instead.
TrainResult train(Network net, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Forward pass in inference mode up to and including layer `last`.
Tensor32 forward(const Network& net, const Tensor32& batch, std::size_t last);

// Post-activation output of FullyConnected layer `tap` (the following ReLU
// is applied when present). Ids and labels are left default.
FeatureMatrix extract_features(const Network& net, const Tensor32& images, std::size_t tap);

struct Classification {
  int label = 0;
  std::vector<double> probabilities;
};

// image is [C, H, W] or [1, C, H, W].
Classification classify(const Network& net, const Tensor32& image);

// Softmax outputs for every image, [N, n_classes].
Tensor32 predict_probabilities(const Network& net, const Tensor32& images);

// Argmax with ties to the lowest index.
int argmax(std::span<const float> v);
double accuracy(const Network& net, const ImageSet& set);

// DSNET1 model file.
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

}  // namespace docstyle
