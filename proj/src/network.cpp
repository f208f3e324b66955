#include "docstyle/network.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"
#include "docstyle/random.hpp"

namespace docstyle {
namespace {

constexpr std::string_view kMagic = "DSNET1";

struct ParamLayout {
  std::vector<std::size_t> offset;
  std::vector<Shape> shapes;
};

ParamLayout param_layout(const ArchSpec& spec) {
  ParamLayout layout;
  const auto acts = activation_shapes(spec);
  Shape in = spec.input_shape();
  layout.offset.push_back(0);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    for (auto& s : layer_param_shapes(spec.layers[i], in)) layout.shapes.push_back(std::move(s));
    layout.offset.push_back(layout.shapes.size());
    in = acts[i];
  }
  return layout;
}

std::size_t fan_in(const Shape& weight_shape) {
  return shape_size(weight_shape) / weight_shape[0];
}

void random_fill_layer(Network& net, std::size_t layer, std::uint64_t seed, double scale) {
  auto params = net.layer_params(layer);
  if (params.empty()) return;
  Rng rng(derive_seed(seed, layer));
  const double sd = scale > 0.0 ? scale : std::sqrt(2.0 / static_cast<double>(fan_in(params[0].shape())));
  for (auto& w : params[0].data()) w = static_cast<float>(rng.normal(0.0, sd));
  params[1].fill(0.0f);
}

Network empty_network(const ArchSpec& spec) {
  validate_arch(spec);
  Network net;
  net.spec = spec;
  const auto layout = param_layout(spec);
  net.param_offset = layout.offset;
  for (const auto& s : layout.shapes) net.params.emplace_back(s, 0.0f);
  return net;
}

void check_images(const Network& net, const Tensor32& images, const char* what) {
  const Shape want = net.spec.input_shape();
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != want) {
    throw ShapeError(std::string(what) + ": images have shape " + shape_string(images.shape()) +
                     ", network expects [N, " + std::to_string(want[0]) + ", " +
                     std::to_string(want[1]) + ", " + std::to_string(want[2]) + "]");
  }
}

void check_set(const Network& net, const ImageSet& set, const char* what) {
  if (set.size() == 0) return;
  check_images(net, set.images, what);
  if (set.images.dim(0) != set.labels.size()) {
    throw ShapeError(std::string(what) + ": image count does not match label count");
  }
  for (int y : set.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= net.spec.n_classes) {
      throw InvalidArgument(std::string(what) + ": label " + std::to_string(y) +
                            " out of range for " + std::to_string(net.spec.n_classes) +
                            " classes");
    }
  }
}

Tensor32 gather(const Tensor32& images, std::span<const std::size_t> rows) {
  Shape s = images.shape();
  s[0] = rows.size();
  Tensor32 out(s);
  const std::size_t stride = images.stride0();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = images.slice0(rows[i]);
    std::copy(src.begin(), src.end(), out.ptr() + i * stride);
  }
  return out;
}

Tensor32 chunk(const Tensor32& images, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return gather(images, rows);
}

constexpr std::size_t kInferChunk = 64;

}  // namespace

Network init_network(const ArchSpec& spec, const RandomInit& mode) {
  Network net = empty_network(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) random_fill_layer(net, i, mode.seed, mode.scale);
  net.init = InitRecord{false, mode.seed, "", 0};
  return net;
}

Network init_network(const ArchSpec& spec, const TransferInit& mode) {
  if (mode.donor == nullptr) throw InvalidArgument("transfer init requires a donor network");
  const Network& donor = *mode.donor;
  Network net = empty_network(spec);
  const std::size_t cut = mode.prefix_layers.value_or(spec.layers.size() - 2);
  if (cut > spec.layers.size() || cut > donor.spec.layers.size()) {
    throw InvalidArgument("transfer prefix of " + std::to_string(cut) +
                          " layers exceeds the network depth");
  }
  std::string problems;
  for (std::size_t i = 0; i < cut; ++i) {
    if (spec.layers[i] != donor.spec.layers[i]) {
      problems += " layer " + std::to_string(i) + ": " + layer_name(spec.layers[i]) +
                  " vs donor " + layer_name(donor.spec.layers[i]) + ";";
      continue;
    }
    auto mine = net.layer_params(i);
    auto theirs = donor.layer_params(i);
    for (std::size_t p = 0; p < mine.size(); ++p) {
      if (mine[p].shape() != theirs[p].shape()) {
        problems += " layer " + std::to_string(i) + " parameter " + std::to_string(p) + ": " +
                    shape_string(mine[p].shape()) + " vs donor " +
                    shape_string(theirs[p].shape()) + ";";
      }
    }
  }
  if (!problems.empty()) throw ShapeError("transfer init incompatible:" + problems);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (i < cut) {
      auto mine = net.layer_params(i);
      auto theirs = donor.layer_params(i);
      for (std::size_t p = 0; p < mine.size(); ++p) mine[p] = theirs[p];
    } else {
      random_fill_layer(net, i, mode.seed, mode.scale);
    }
  }
  net.init = InitRecord{true, mode.seed, mode.donor_name, cut};
  return net;
}

Tensor32 forward(const Network& net, const Tensor32& batch, std::size_t last) {
  Tensor32 x = batch;
  for (std::size_t i = 0; i <= last && i < net.spec.layers.size(); ++i) {
    x = apply_layer<float>(net.spec.layers[i], net.layer_params(i), x, Mode::Infer, 0).output;
  }
  return x;
}

int argmax(std::span<const float> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

Tensor32 predict_probabilities(const Network& net, const Tensor32& images) {
  check_images(net, images, "predict");
  const std::size_t n = images.dim(0);
  const std::size_t k = net.spec.n_classes;
  Tensor32 out({n, k});
  for (std::size_t b = 0; b < n; b += kInferChunk) {
    const std::size_t e = std::min(n, b + kInferChunk);
    Tensor32 p = forward(net, chunk(images, b, e), net.spec.layers.size() - 1);
    std::copy(p.data().begin(), p.data().end(), out.ptr() + b * k);
  }
  return out;
}

double accuracy(const Network& net, const ImageSet& set) {
  if (set.size() == 0) return 0.0;
  const Tensor32 p = predict_probabilities(net, set.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (argmax(p.slice0(i)) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

Classification classify(const Network& net, const Tensor32& image) {
  Tensor32 batch = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                                     : image;
  check_images(net, batch, "classify");
  if (batch.dim(0) != 1) throw ShapeError("classify: expected a single image");
  const Tensor32 p = forward(net, batch, net.spec.layers.size() - 1);
  Classification c;
  c.label = argmax(p.data());
  c.probabilities.assign(p.data().begin(), p.data().end());
  return c;
}

FeatureMatrix extract_features(const Network& net, const Tensor32& images, std::size_t tap) {
  if (tap >= net.spec.layers.size()) {
    throw InvalidArgument("feature tap " + std::to_string(tap) + " out of range (" +
                          std::to_string(net.spec.layers.size()) + " layers)");
  }
  const auto* fc = std::get_if<FullyConnected>(&net.spec.layers[tap]);
  if (fc == nullptr) {
    throw InvalidArgument("feature tap " + std::to_string(tap) + " is " +
                          layer_name(net.spec.layers[tap]) + ", not a fully-connected layer");
  }
  check_images(net, images, "extract_features");
  std::size_t last = tap;
  if (tap + 1 < net.spec.layers.size() && std::holds_alternative<Relu>(net.spec.layers[tap + 1])) {
    last = tap + 1;
  }
  const std::size_t n = images.dim(0);
  FeatureMatrix m(n, fc->units);
  for (std::size_t b = 0; b < n; b += kInferChunk) {
    const std::size_t e = std::min(n, b + kInferChunk);
    const Tensor32 f = forward(net, chunk(images, b, e), last);
    std::copy(f.data().begin(), f.data().end(), m.values.begin() + b * fc->units);
  }
  return m;
}

TrainResult train(Network net, const ImageSet& train_set, const ImageSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  if (config.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (config.patience < 1) throw InvalidArgument("patience must be >= 1");
  TrainResult result;
  if (config.max_epochs == 0) {
    result.net = std::move(net);
    return result;
  }
  if (train_set.size() == 0) throw InvalidArgument("train: empty training set");
  check_set(net, train_set, "train");
  check_set(net, val_set, "validation");

  const auto& layers = net.spec.layers;
  const std::size_t n_layers = layers.size();
  const std::size_t logits_layer = n_layers - 2;  // layer before the softmax
  const std::size_t n = train_set.size();

  SgdState<float> sgd;
  sgd.learning_rate = config.learning_rate;
  sgd.momentum = config.momentum;
  sgd.weight_decay = config.weight_decay;

  std::vector<Tensor32> best_params = net.params;
  double best_score = -1.0;
  std::size_t since_best = 0;

  std::vector<Tensor32> grads(net.params.size());
  std::vector<LayerCache<float>> caches(n_layers);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, 0x5eed, epoch));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += config.batch_size) {
      const std::size_t e = std::min(n, b + config.batch_size);
      std::span<const std::size_t> rows(order.data() + b, e - b);
      Tensor32 x = gather(train_set.images, rows);
      std::vector<int> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) y[i] = train_set.labels[rows[i]];

      for (std::size_t l = 0; l <= logits_layer; ++l) {
        auto out = apply_layer<float>(layers[l], net.layer_params(l), x, Mode::Train,
                                      derive_seed(config.seed, epoch, batches, l));
        caches[l] = std::move(out.cache);
        x = std::move(out.output);
      }
      auto loss = softmax_xent<float>(x, y);
      if (!std::isfinite(loss.loss)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (argmax(x.slice0(i)) == y[i]) ++correct;
      }
      loss_sum += loss.loss;
      ++batches;

      Tensor32 g = std::move(loss.grad_logits);
      for (std::size_t l = logits_layer + 1; l-- > 0;) {
        auto lg = backprop_layer<float>(layers[l], net.layer_params(l), caches[l], g, l > 0);
        for (std::size_t p = 0; p < lg.params.size(); ++p) {
          grads[net.param_offset[l] + p] = std::move(lg.params[p]);
        }
        g = std::move(lg.input);
        caches[l] = {};
      }
      sgd_update<float>(net.params, grads, sgd);
    }

    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    rec.val_accuracy = val_set.size() > 0 ? accuracy(net, val_set) : rec.train_accuracy;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(epoch + 1, rec);

    if (rec.val_accuracy > best_score) {
      best_score = rec.val_accuracy;
      best_params = net.params;
      result.history.best_epoch = epoch + 1;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  result.history.stopping_epoch = result.history.epochs.size();
  net.params = std::move(best_params);
  result.net = std::move(net);
  return result;
}

void save_network(const std::filesystem::path& path, const Network& net) {
  BinaryWriter w(path);
  w.magic(kMagic);
  w.string(render_arch(net.spec));
  w.u32(static_cast<std::uint32_t>(net.spec.n_classes));
  w.u32(static_cast<std::uint32_t>(net.params.size()));
  for (const auto& p : net.params) {
    w.u32(static_cast<std::uint32_t>(p.rank()));
    for (std::size_t e : p.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f32s(p.data());
  }
  // Initialization provenance trailer.
  w.u8(net.init.transfer ? 1 : 0);
  w.u64(net.init.seed);
  w.string(net.init.donor);
  w.u32(static_cast<std::uint32_t>(net.init.layers_copied));
  w.close();
}

Network load_network(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kMagic);
  const std::string arch = r.string();
  const std::uint32_t classes = r.u32();
  Network net = empty_network(parse_arch(arch, classes));
  const std::uint32_t count = r.u32();
  if (count != net.params.size()) {
    throw IoError("model " + path.string() + " has " + std::to_string(count) +
                  " parameter tensors, architecture implies " + std::to_string(net.params.size()));
  }
  for (auto& p : net.params) {
    const std::uint32_t rank = r.u32();
    Shape s(rank);
    for (auto& e : s) e = r.u32();
    if (s != p.shape()) {
      throw IoError("model " + path.string() + ": parameter shape " + shape_string(s) +
                    " does not match architecture " + shape_string(p.shape()));
    }
    p = Tensor32(s, r.f32s(shape_size(s)));
  }
  net.init.transfer = r.u8() != 0;
  net.init.seed = r.u64();
  net.init.donor = r.string();
  net.init.layers_copied = r.u32();
  r.expect_end();
  return net;
}

}  // namespace docstyle
