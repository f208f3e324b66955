#include "docstyle/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "docstyle/arch.hpp"
#include "docstyle/binio.hpp"
#include "docstyle/classic.hpp"
#include "docstyle/compress.hpp"
#include "docstyle/config.hpp"
#include "docstyle/dataset.hpp"
#include "docstyle/error.hpp"
#include "docstyle/features.hpp"
#include "docstyle/forest.hpp"
#include "docstyle/kernels.hpp"
#include "docstyle/network.hpp"
#include "docstyle/pipeline.hpp"
#include "docstyle/retrieval.hpp"

#ifndef DOCSTYLE_VERSION
#define DOCSTYLE_VERSION "0.0.0"
#endif

namespace docstyle {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Raised for argument combinations CLI11 cannot express; maps to exit 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Option bindings: each option may also be filled from a config key when the
// flag itself was not given.

struct Binding {
  std::string key;
  CLI::Option* option = nullptr;
  bool input_path = false;
  std::function<void(const ConfigDoc&)> assign;
};

template <typename T>
void assign_from(const ConfigDoc& doc, const std::string& key, T& var) {
  if constexpr (std::is_same_v<T, std::string>) {
    var = doc.get_string(key);
  } else if constexpr (std::is_same_v<T, bool>) {
    var = doc.get_bool(key);
  } else if constexpr (std::is_same_v<T, double>) {
    var = doc.get_number(key);
  } else if constexpr (std::is_integral_v<T>) {
    const auto v = doc.get_integer(key);
    if (std::is_unsigned_v<T> && v < 0) throw ParseError(doc.origin() + ": '" + key + "' must be >= 0");
    var = static_cast<T>(v);
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    var = doc.get_strings(key);
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    var = doc.get_numbers(key);
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    var.clear();
    for (double d : doc.get_numbers(key)) {
      if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
        throw ParseError(doc.origin() + ": '" + key + "' must hold non-negative integers");
      }
      var.push_back(static_cast<std::size_t>(d));
    }
  } else {
    static_assert(sizeof(T) == 0, "unsupported config type");
  }
}

struct Common {
  std::string out;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string config;
};

struct Context {
  fs::path out;
  std::uint64_t seed = 1;
  int threads = 1;
  std::ostream* log = nullptr;
  std::vector<std::string> outputs;

  fs::path output(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void write(const std::string& name, const std::string& text) { write_text_file(output(name), text); }
};

class Command {
 public:
  Command(CLI::App& root, const std::string& name, const std::string& description)
      : app_(root.add_subcommand(name, description)) {
    app_->fallthrough(false);
    bind("--out", common_.out, "output directory", "out");
    bind("--seed", common_.seed, "master random seed", "seed");
    bind("--threads", common_.threads, "worker threads (0: all cores; 1: bit-reproducible)", "threads");
    app_->add_option("--config", common_.config, "TOML-style config file")->check(CLI::ExistingFile);
  }

  template <typename T>
  CLI::Option* bind(const std::string& flag, T& var, const std::string& help, const std::string& key = "",
                    bool input_path = false) {
    CLI::Option* opt;
    if constexpr (std::is_same_v<T, bool>) {
      opt = app_->add_flag(flag, var, help);
    } else {
      opt = app_->add_option(flag, var, help);
      if constexpr (!std::is_same_v<T, std::string> && !std::is_same_v<T, std::vector<std::string>>) {
        opt->capture_default_str();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!var.empty()) opt->capture_default_str();
      }
      if constexpr (std::is_same_v<T, std::vector<std::string>> ||
                    std::is_same_v<T, std::vector<std::size_t>> ||
                    std::is_same_v<T, std::vector<double>>) {
        opt->delimiter(',');
      }
      if (input_path) opt->check(CLI::ExistingPath);
    }
    if (!key.empty()) {
      bindings_.push_back({key, opt, input_path, [key, &var](const ConfigDoc& doc) { assign_from(doc, key, var); }});
    }
    return opt;
  }

  CLI::App* app() const { return app_; }
  const Common& common() const { return common_; }
  const std::vector<Binding>& bindings() const { return bindings_; }
  std::function<void(Context&)> run;

 private:
  CLI::App* app_;
  Common common_;
  std::vector<Binding> bindings_;
};

// ---------------------------------------------------------------------------
// Shared helpers.

std::vector<std::size_t> split_indices(const Manifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<std::size_t> all(m.entries.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return m.indices(split_from_name(split));
}

std::vector<std::size_t> nonempty_split(const Manifest& m, const std::string& split) {
  auto idx = split_indices(m, split);
  if (idx.empty()) throw InvalidArgument("manifest has no entries in split '" + split + "'");
  return idx;
}

std::optional<Region> region_option(const std::string& name) {
  if (name.empty() || name == "page") return std::nullopt;
  return region_from_name(name);
}

ImagePrep prep_for(const ArchSpec& spec, const std::string& region) {
  if (spec.input_channels != 1 || (spec.input_height == 1 && spec.input_width == 1)) {
    throw InvalidArgument("architecture does not take single-channel images");
  }
  ImagePrep prep;
  prep.height = spec.input_height;
  prep.width = spec.input_width;
  prep.region = region_option(region);
  return prep;
}

std::string resolve_arch(const std::string& arch) {
  const auto names = arch_preset_names();
  if (std::find(names.begin(), names.end(), arch) != names.end()) return arch_preset(arch);
  return arch;
}

ImageSet vector_set(const FeatureMatrix& f) {
  ImageSet set;
  set.images = Tensor32({f.rows, f.cols, 1, 1});
  std::copy(f.values.begin(), f.values.end(), set.images.ptr());
  set.labels = f.labels;
  return set;
}

std::size_t class_count(std::initializer_list<const FeatureMatrix*> parts) {
  int top = -1;
  for (const auto* p : parts) {
    for (int l : p->labels) top = std::max(top, l);
  }
  if (top < 0) throw InvalidArgument("features carry no labels");
  return static_cast<std::size_t>(top) + 1;
}

std::vector<std::string> label_names_from(const std::string& manifest_path) {
  if (manifest_path.empty()) return {};
  return load_manifest(manifest_path, false).label_names;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_metrics(Context& ctx, const std::string& command, const json& metrics) {
  json doc;
  doc["command"] = command;
  doc["metrics"] = metrics;
  ctx.write("metrics.json", doc.dump(2) + "\n");
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------------------
// Subcommands.

void add_synth(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "synth", "Generate a synthetic labelled document corpus");
  struct Opts {
    std::size_t classes = 6;
    std::vector<std::string> layouts;
    std::size_t per_class = 100;
    std::size_t height = 260;
    std::size_t width = 200;
    double noise = 0.3;
    double imbalance = 0.0;
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--classes", o->classes, "number of classes (first N layouts)", "dataset.classes")
      ->check(CLI::Range(1, 10));
  std::string layout_help = "explicit layout names:";
  for (Layout l : all_layouts()) layout_help += " " + std::string(layout_name(l));
  cmd->bind("--layouts", o->layouts, layout_help, "dataset.layouts");
  cmd->bind("--per-class", o->per_class, "images per class", "dataset.per_class")->check(CLI::PositiveNumber);
  cmd->bind("--height", o->height, "page height in pixels", "dataset.height");
  cmd->bind("--width", o->width, "page width in pixels", "dataset.width");
  cmd->bind("--noise", o->noise, "scan noise level in [0, 1]", "dataset.noise");
  cmd->bind("--imbalance", o->imbalance, "linear class-size decay in [0, 1)", "dataset.imbalance");
  cmd->run = [o](Context& ctx) {
    SynthConfig sc;
    if (!o->layouts.empty()) {
      for (const auto& name : o->layouts) sc.classes.push_back(layout_from_name(name));
    } else {
      const auto all = all_layouts();
      sc.classes.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(o->classes));
    }
    sc.per_class = o->per_class;
    sc.height = o->height;
    sc.width = o->width;
    sc.noise = o->noise;
    sc.imbalance = o->imbalance;
    sc.seed = ctx.seed;
    const Manifest m = generate_synthetic(sc, ctx.out);
    ctx.outputs.push_back("manifest.tsv");
    ctx.outputs.push_back("images/");
    *ctx.log << "wrote " << m.entries.size() << " images to " << (ctx.out / "images").string() << "\n";
  };
  cmds.push_back(std::move(cmd));
}

void add_split(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "split", "Assign train/val/test splits to a manifest");
  struct Opts {
    std::string manifest;
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
    std::vector<double> ratios;
    bool stratified = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--manifest", o->manifest, "input manifest", "dataset.manifest", true);
  auto* train = cmd->bind("--train", o->train, "training items", "split.train");
  auto* val = cmd->bind("--val", o->val, "validation items", "split.val");
  auto* test = cmd->bind("--test", o->test, "test items (default: the remainder)", "split.test");
  auto* ratios = cmd->bind("--ratios", o->ratios, "train,val,test fractions instead of counts", "split.ratios");
  ratios->excludes(train)->excludes(val)->excludes(test);
  cmd->bind("--stratified", o->stratified, "split each class separately", "split.stratified");
  cmd->run = [o, test](Context& ctx) {
    if (o->manifest.empty()) throw UsageError("split: --manifest is required");
    const Manifest in = load_manifest(o->manifest);
    Manifest m;
    if (!o->ratios.empty()) {
      if (o->ratios.size() != 3) throw UsageError("split: --ratios needs three values");
      m = split_dataset(in, SplitRatios{o->ratios[0], o->ratios[1], o->ratios[2]}, ctx.seed, o->stratified);
    } else {
      if (o->train == 0) throw UsageError("split: give --train/--val counts or --ratios");
      SplitCounts c{o->train, o->val, std::nullopt};
      if (test->count() > 0 || o->test > 0) c.test = o->test;
      m = split_dataset(in, c, ctx.seed, o->stratified);
    }
    save_manifest(ctx.output("manifest.tsv"), m);
    json counts;
    for (Split s : {Split::Train, Split::Val, Split::Test, Split::Unassigned}) {
      counts[std::string(split_name(s))] = m.indices(s).size();
    }
    write_metrics(ctx, "split", counts);
    *ctx.log << "split " << m.entries.size() << " items: " << counts.dump() << "\n";
  };
  cmds.push_back(std::move(cmd));
}

struct TrainOpts {
  std::string manifest;
  std::string features;
  std::string val_features;
  std::string arch = "desk";
  std::string region = "page";
  std::size_t classes = 0;
  std::string init_from;
  std::size_t transfer_layers = 0;
  TrainConfig tc;
};

void add_train_cnn(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "train-cnn", "Train a network on images or feature vectors");
  auto o = std::make_shared<TrainOpts>();
  auto* man = cmd->bind("--manifest", o->manifest, "split manifest (image training)", "dataset.manifest", true);
  auto* feat = cmd->bind("--features", o->features, "training features (vector head training)", "", true);
  cmd->bind("--val-features", o->val_features, "validation features", "", true)->needs(feat);
  man->excludes(feat);
  std::string presets;
  for (const auto& p : arch_preset_names()) presets += (presets.empty() ? "" : "|") + p;
  cmd->bind("--arch", o->arch, "preset (" + presets + ") or architecture string", "arch.preset");
  cmd->bind("--region", o->region, "page|holistic|header|footer|left_body|right_body", "representation.region");
  cmd->bind("--num-classes", o->classes, "class count (default: from the data)");
  auto* init = cmd->bind("--init-from", o->init_from, "donor network for transfer initialization", "", true);
  cmd->bind("--transfer-layers", o->transfer_layers, "leading layers copied from the donor (0: all but the classifier)")
      ->needs(init);
  cmd->bind("--lr", o->tc.learning_rate, "learning rate", "train.learning_rate");
  cmd->bind("--momentum", o->tc.momentum, "momentum", "train.momentum");
  cmd->bind("--weight-decay", o->tc.weight_decay, "L2 weight decay", "train.weight_decay");
  cmd->bind("--batch", o->tc.batch_size, "mini-batch size", "train.batch_size")->check(CLI::PositiveNumber);
  cmd->bind("--epochs", o->tc.max_epochs, "maximum epochs", "train.max_epochs");
  cmd->bind("--patience", o->tc.patience, "early-stopping patience in epochs", "train.patience");
  cmd->run = [o](Context& ctx) {
    ImageSet tr, va;
    std::optional<ImageSet> te;
    std::size_t n_classes = o->classes;
    ArchSpec spec;
    if (!o->manifest.empty()) {
      const Manifest m = load_manifest(o->manifest);
      if (n_classes == 0) n_classes = m.label_names.size();
      spec = parse_arch(resolve_arch(o->arch), n_classes);
      const ImagePrep prep = prep_for(spec, o->region);
      tr = make_image_set(m, nonempty_split(m, "train"), prep);
      va = make_image_set(m, nonempty_split(m, "val"), prep);
      const auto test_idx = m.indices(Split::Test);
      if (!test_idx.empty()) te = make_image_set(m, test_idx, prep);
    } else if (!o->features.empty()) {
      if (o->val_features.empty()) throw UsageError("train-cnn: --features needs --val-features");
      const FeatureMatrix ftr = load_features(o->features);
      const FeatureMatrix fva = load_features(o->val_features);
      if (n_classes == 0) n_classes = class_count({&ftr, &fva});
      spec = parse_arch(resolve_arch(o->arch), n_classes);
      if (spec.input_channels != ftr.cols || spec.input_height != 1 || spec.input_width != 1) {
        throw ShapeError("architecture input does not match the " + std::to_string(ftr.cols) + "-dim features");
      }
      tr = vector_set(ftr);
      va = vector_set(fva);
    } else {
      throw UsageError("train-cnn: give --manifest or --features");
    }
    TrainConfig tc = o->tc;
    tc.seed = ctx.seed;
    Network net;
    if (!o->init_from.empty()) {
      const Network donor = load_network(o->init_from);
      TransferInit ti;
      ti.donor = &donor;
      ti.donor_name = fs::path(o->init_from).filename().string();
      if (o->transfer_layers > 0) ti.prefix_layers = o->transfer_layers;
      ti.seed = ctx.seed;
      net = init_network(spec, ti);
    } else {
      net = init_network(spec, RandomInit{ctx.seed});
    }
    std::ostream& log = *ctx.log;
    auto result = train(std::move(net), tr, va, tc, [&log](std::size_t e, const EpochRecord& r) {
      log << "epoch " << e << " loss " << fmt(r.train_loss) << " train " << fmt(r.train_accuracy) << " val "
          << fmt(r.val_accuracy) << "\n";
    });
    save_network(ctx.output("model.dsnet"), result.net);
    std::string hist = "epoch,train_loss,train_accuracy,val_accuracy\n";
    std::string timing = "epoch,seconds\n";
    for (std::size_t e = 0; e < result.history.epochs.size(); ++e) {
      const auto& r = result.history.epochs[e];
      hist += std::to_string(e + 1) + "," + fmt(r.train_loss) + "," + fmt(r.train_accuracy) + "," +
              fmt(r.val_accuracy) + "\n";
      timing += std::to_string(e + 1) + "," + fmt(r.seconds) + "\n";
    }
    ctx.write("history.csv", hist);
    ctx.write("timing.csv", timing);
    json metrics;
    metrics["arch"] = render_arch(spec);
    metrics["epochs_run"] = result.history.stopping_epoch;
    metrics["best_epoch"] = result.history.best_epoch;
    metrics["best_val_accuracy"] =
        result.history.best_epoch ? result.history.epochs[result.history.best_epoch - 1].val_accuracy : 0.0;
    if (te) metrics["test_accuracy"] = accuracy(result.net, *te);
    write_metrics(ctx, "train-cnn", metrics);
  };
  cmds.push_back(std::move(cmd));
}

struct ExtractOpts {
  std::string manifest;
  std::string split = "all";
  std::string kind = "holistic-cnn";
  std::string model;
  std::string model_dir;
  std::string region = "page";
  std::string vocab;
  std::string scheme = "holistic";
  std::string name = "features";
  std::size_t layer = 0;
  BowConfig bow;
};

void bind_bow_frame(Command& cmd, BowConfig& bow) {
  cmd.bind("--patch", bow.patch, "descriptor patch size", "bow.patch")->check(CLI::PositiveNumber);
  cmd.bind("--stride", bow.stride, "descriptor grid stride", "bow.stride")->check(CLI::PositiveNumber);
  cmd.bind("--page-height", bow.image_height, "page height before description", "bow.height");
  cmd.bind("--page-width", bow.image_width, "page width before description", "bow.width");
}

FeatureMatrix encode_bow(const Manifest& m, std::span<const std::size_t> idx, const std::string& vocab_path,
                         const std::string& scheme_text, const BowConfig& cfg) {
  const Vocabulary vocab = load_vocabulary(vocab_path);
  const PartitionScheme scheme = parse_scheme(scheme_text);
  const auto desc = compute_descriptors(m, idx, cfg);
  const auto words = assign_all(desc, vocab, cfg);
  FeatureMatrix f = bow_features(words, vocab.k, scheme);
  attach_items(f, m, idx);
  return f;
}

const std::set<std::string> kRepresentations = {"holistic-cnn", "small-cnn", "ensemble-cnn", "bow",
                                                "gist",         "brightness", "region-brightness"};

void add_extract(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "extract-features", "Compute per-image descriptors");
  auto o = std::make_shared<ExtractOpts>();
  cmd->bind("--manifest", o->manifest, "split manifest", "dataset.manifest", true);
  cmd->bind("--split", o->split, "train|val|test|all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  cmd->bind("--representation", o->kind, "holistic-cnn|small-cnn|ensemble-cnn|bow|gist|brightness|region-brightness",
            "representation.kind")
      ->check(CLI::IsMember(kRepresentations));
  cmd->bind("--model", o->model, "trained network (cnn representations)", "", true);
  cmd->bind("--model-dir", o->model_dir, "directory holding <region>.dsnet (ensemble-cnn)", "", true);
  cmd->bind("--region", o->region, "page|holistic|header|footer|left_body|right_body", "representation.region");
  cmd->bind("--layer", o->layer, "feature tap layer index (0: first fully connected)");
  cmd->bind("--vocab", o->vocab, "visual vocabulary (bow)", "", true);
  cmd->bind("--scheme", o->scheme, "holistic, HaVb or pyramidL (bow)", "representation.scheme");
  cmd->bind("--name", o->name, "output file stem");
  bind_bow_frame(*cmd, o->bow);
  cmd->run = [o](Context& ctx) {
    if (o->manifest.empty()) throw UsageError("extract-features: --manifest is required");
    const Manifest m = load_manifest(o->manifest);
    const auto idx = nonempty_split(m, o->split);
    const std::optional<std::size_t> tap = o->layer ? std::optional<std::size_t>(o->layer) : std::nullopt;
    auto save = [&](const std::string& stem, const FeatureMatrix& f) {
      save_features(ctx.output(stem + ".dsfea"), f);
      *ctx.log << stem << ".dsfea: " << f.rows << " x " << f.cols << "\n";
    };
    if (o->kind == "holistic-cnn" || o->kind == "small-cnn") {
      if (o->model.empty()) throw UsageError("extract-features: cnn representations need --model");
      const Network net = load_network(o->model);
      save(o->name, cnn_features(net, m, idx, prep_for(net.spec, o->region), tap));
    } else if (o->kind == "ensemble-cnn") {
      if (o->model_dir.empty()) throw UsageError("extract-features: ensemble-cnn needs --model-dir");
      for (Region r : kEnsembleOrder) {
        const std::string rname(region_spec(r).name);
        const Network net = load_network(fs::path(o->model_dir) / (rname + ".dsnet"));
        save(o->name + "_" + rname, cnn_features(net, m, idx, prep_for(net.spec, rname), tap));
      }
    } else if (o->kind == "bow") {
      if (o->vocab.empty()) throw UsageError("extract-features: bow needs --vocab");
      save(o->name, encode_bow(m, idx, o->vocab, o->scheme, o->bow));
    } else if (o->kind == "gist") {
      save(o->name, gist_features(m, idx, GistConfig{}, o->bow));
    } else if (o->kind == "brightness") {
      save(o->name, brightness_features(m, idx));
    } else {
      save(o->name, region_brightness_features(m, idx));
    }
  };
  cmds.push_back(std::move(cmd));
}

void add_fit_pca(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "fit-pca", "Fit PCA on L2-normalized feature rows");
  struct Opts {
    std::vector<std::string> features;
    std::size_t dim = 128;
    bool raw = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--features", o->features, "feature file(s); one model per file", "", true)->required();
  cmd->bind("--dim", o->dim, "output dimensionality", "pca.dim")->check(CLI::PositiveNumber);
  cmd->bind("--raw", o->raw, "skip L2 normalization before fitting");
  cmd->run = [o](Context& ctx) {
    json metrics = json::object();
    for (const auto& path : o->features) {
      FeatureMatrix x = load_features(path);
      if (!o->raw) l2_normalize_rows(x);
      if (o->dim > x.cols) {
        throw InvalidArgument("fit-pca: --dim " + std::to_string(o->dim) + " exceeds feature dimensionality " +
                              std::to_string(x.cols) + " of " + path);
      }
      const PcaModel model = pca_fit(x, o->dim);
      const std::string stem = o->features.size() == 1 ? "pca" : "pca_" + stem_of(path);
      save_pca(ctx.output(stem + ".dspca"), model);
      std::string csv = "component,eigenvalue,cumulative_fraction\n";
      double cum = 0.0;
      for (std::size_t j = 0; j < model.output_dim; ++j) {
        cum += model.eigenvalues[j];
        const double frac = model.total_variance > 0 ? cum / model.total_variance : 0.0;
        csv += std::to_string(j + 1) + "," + fmt(model.eigenvalues[j]) + "," + fmt(frac) + "\n";
      }
      ctx.write(stem + "_variance.csv", csv);
      metrics[stem] = {{"input_dim", model.input_dim},
                       {"output_dim", model.output_dim},
                       {"captured_variance", model.captured_variance()}};
    }
    write_metrics(ctx, "fit-pca", metrics);
  };
  cmds.push_back(std::move(cmd));
}

void add_compress(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "compress",
                                       "Project features with PCA; several inputs build the region ensemble");
  struct Opts {
    std::vector<std::string> features;
    std::vector<std::string> pca;
    std::string name = "compressed";
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--features", o->features, "feature file(s), ensemble order when several", "", true)->required();
  cmd->bind("--pca", o->pca, "PCA model(s), one per feature file", "", true)->required();
  cmd->bind("--name", o->name, "output file stem");
  cmd->run = [o](Context& ctx) {
    if (o->features.size() != o->pca.size()) throw UsageError("compress: need one --pca per --features");
    FeatureMatrix out;
    if (o->features.size() == 1) {
      RetrievalPrep prep;
      prep.pca = load_pca(o->pca[0]);
      prep.normalize = true;
      out = apply_retrieval_prep(prep, load_features(o->features[0]));
    } else {
      std::vector<FeatureMatrix> parts;
      std::vector<PcaModel> models;
      for (std::size_t i = 0; i < o->features.size(); ++i) {
        parts.push_back(load_features(o->features[i]));
        models.push_back(load_pca(o->pca[i]));
      }
      out = build_ensemble_features(parts, models, models[0].output_dim);
    }
    save_features(ctx.output(o->name + ".dsfea"), out);
    *ctx.log << o->name << ".dsfea: " << out.rows << " x " << out.cols << "\n";
  };
  cmds.push_back(std::move(cmd));
}

void add_bow_vocab(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "bow-vocab", "Cluster local descriptors into a visual vocabulary");
  struct Opts {
    std::string manifest;
    std::string split = "train";
    BowConfig bow;
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--manifest", o->manifest, "split manifest", "dataset.manifest", true);
  cmd->bind("--split", o->split, "images to sample from")->check(CLI::IsMember({"train", "val", "test", "all"}));
  cmd->bind("--k", o->bow.vocabulary, "vocabulary size", "bow.vocabulary")->check(CLI::PositiveNumber);
  cmd->bind("--sample", o->bow.sample, "descriptors drawn for clustering", "bow.sample")->check(CLI::PositiveNumber);
  cmd->bind("--iterations", o->bow.kmeans_iters, "Lloyd iterations", "bow.iterations");
  bind_bow_frame(*cmd, o->bow);
  cmd->run = [o](Context& ctx) {
    if (o->manifest.empty()) throw UsageError("bow-vocab: --manifest is required");
    const Manifest m = load_manifest(o->manifest);
    const auto idx = nonempty_split(m, o->split);
    const auto desc = compute_descriptors(m, idx, o->bow);
    const KMeansResult km = fit_vocabulary(desc, o->bow, ctx.seed);
    save_vocabulary(ctx.output("vocab.dsvoc"), km.vocabulary);
    std::string csv = "iteration,inertia\n";
    for (std::size_t i = 0; i < km.inertia.size(); ++i) csv += std::to_string(i + 1) + "," + fmt(km.inertia[i]) + "\n";
    ctx.write("inertia.csv", csv);
    write_metrics(ctx, "bow-vocab",
                  {{"k", km.vocabulary.k}, {"iterations", km.iterations}, {"converged", km.converged}});
  };
  cmds.push_back(std::move(cmd));
}

void add_encode(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "encode", "Encode images as spatially partitioned bags of words");
  struct Opts {
    std::string manifest;
    std::string split = "all";
    std::string vocab;
    std::vector<std::string> schemes = {"holistic"};
    BowConfig bow;
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--manifest", o->manifest, "split manifest", "dataset.manifest", true);
  cmd->bind("--split", o->split, "train|val|test|all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  cmd->bind("--vocab", o->vocab, "visual vocabulary", "", true)->required();
  cmd->bind("--scheme", o->schemes, "partition scheme(s): holistic, HaVb, pyramidL", "representation.scheme");
  bind_bow_frame(*cmd, o->bow);
  cmd->run = [o](Context& ctx) {
    if (o->manifest.empty()) throw UsageError("encode: --manifest is required");
    const Manifest m = load_manifest(o->manifest);
    const auto idx = nonempty_split(m, o->split);
    const Vocabulary vocab = load_vocabulary(o->vocab);
    std::vector<PartitionScheme> schemes;
    for (const auto& s : o->schemes) schemes.push_back(parse_scheme(s));
    const auto desc = compute_descriptors(m, idx, o->bow);
    const auto words = assign_all(desc, vocab, o->bow);
    for (const auto& s : schemes) {
      FeatureMatrix f = bow_features(words, vocab.k, s);
      attach_items(f, m, idx);
      const std::string stem = "bow_" + scheme_name(s);
      save_features(ctx.output(stem + ".dsfea"), f);
      *ctx.log << stem << ".dsfea: " << f.rows << " x " << f.cols << "\n";
    }
  };
  cmds.push_back(std::move(cmd));
}

struct PrepOpts {
  std::string pca;
  bool normalize = false;
};

void bind_prep(Command& cmd, PrepOpts& p) {
  cmd.bind("--pca", p.pca, "PCA model: rows become L2 -> PCA -> L2", "", true);
  cmd.bind("--normalize", p.normalize, "L2-normalize rows (without --pca)");
}

FeatureMatrix apply_prep(const PrepOpts& p, FeatureMatrix rows) {
  if (!p.pca.empty()) {
    RetrievalPrep prep;
    prep.pca = load_pca(p.pca);
    prep.normalize = true;
    return apply_retrieval_prep(prep, rows);
  }
  if (p.normalize) l2_normalize_rows(rows);
  return rows;
}

void add_build_index(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "build-index", "Prepare the retrieval index rows");
  struct Opts {
    std::string features;
    PrepOpts prep;
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--features", o->features, "index features", "", true)->required();
  bind_prep(*cmd, o->prep);
  cmd->run = [o](Context& ctx) {
    const Index index(apply_prep(o->prep, load_features(o->features)));
    save_features(ctx.output("index.dsfea"), index.features());
    *ctx.log << "index: " << index.size() << " items x " << index.dim() << " dims\n";
  };
  cmds.push_back(std::move(cmd));
}

struct QueryOpts {
  std::string index;
  std::string queries;
  PrepOpts prep;
  std::size_t k = 10;
};

void bind_query(Command& cmd, QueryOpts& q) {
  cmd.bind("--index", q.index, "index built by build-index", "", true)->required();
  cmd.bind("--queries", q.queries, "query features (raw; prepared like the index)", "", true)->required();
  bind_prep(cmd, q.prep);
  cmd.bind("--k", q.k, "neighbors retrieved per query", "retrieval.k")->check(CLI::PositiveNumber);
}

void add_retrieve(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "retrieve", "List the k nearest index items for each query");
  auto o = std::make_shared<QueryOpts>();
  bind_query(*cmd, *o);
  cmd->run = [o](Context& ctx) {
    const Index index(load_features(o->index));
    const FeatureMatrix q = apply_prep(o->prep, load_features(o->queries));
    const auto rankings = knn_all(index, q, o->k);
    std::string csv = "query_id,query_label,rank,item_id,item_label,distance,relevant\n";
    char dist[40];
    for (const auto& r : rankings) {
      for (std::size_t j = 0; j < r.neighbors.size(); ++j) {
        const auto& nb = r.neighbors[j];
        std::snprintf(dist, sizeof dist, "%.9g", nb.distance);
        csv += csv_field(r.query_id) + "," + std::to_string(r.query_label) + "," + std::to_string(j + 1) + "," +
               csv_field(index.features().ids[nb.item]) + "," + std::to_string(index.features().labels[nb.item]) +
               "," + dist + "," + (nb.relevant ? "1" : "0") + "\n";
      }
    }
    ctx.write("rankings.csv", csv);
  };
  cmds.push_back(std::move(cmd));
}

void add_eval_retrieve(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "eval-retrieve", "mAP@1..k curve and retrieval confusion");
  struct Opts {
    QueryOpts q;
    std::string ap_mode = "truncated";
    std::string manifest;
  };
  auto o = std::make_shared<Opts>();
  bind_query(*cmd, o->q);
  cmd->bind("--ap-mode", o->ap_mode, "truncated|strict|retrieved", "retrieval.ap_mode")
      ->check(CLI::IsMember({"truncated", "strict", "retrieved"}));
  cmd->bind("--manifest", o->manifest, "manifest supplying label names", "", true);
  cmd->run = [o](Context& ctx) {
    const Index index(load_features(o->q.index));
    const FeatureMatrix q = apply_prep(o->q.prep, load_features(o->q.queries));
    const ApMode mode = ap_mode_from_name(o->ap_mode);
    const auto rankings = knn_all(index, q, o->q.k);
    const auto curve = map_curve(rankings, o->q.k, mode);
    ctx.write("map.csv", map_csv(curve));
    const std::size_t n_classes = class_count({&index.features(), &q});
    ctx.write("confusion.csv",
              confusion_csv(retrieval_confusion(rankings, index, o->q.k, n_classes), label_names_from(o->manifest)));
    Series s{"mAP", {}, curve};
    for (std::size_t j = 0; j < curve.size(); ++j) s.x.push_back(static_cast<double>(j + 1));
    ctx.write("map.svg", svg_line_chart("mAP@k", "k", "mAP", std::span<const Series>(&s, 1)));
    write_metrics(ctx, "eval-retrieve",
                  {{"k", o->q.k}, {"ap_mode", o->ap_mode}, {"queries", q.rows}, {"map_at_k", curve.back()}});
    *ctx.log << "mAP@" << o->q.k << " = " << fmt(curve.back()) << "\n";
  };
  cmds.push_back(std::move(cmd));
}

void add_eval_classify(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "eval-classify",
                                       "Classification accuracy of a network or a random forest");
  struct Opts {
    std::string model;
    std::string manifest;
    std::string split = "test";
    std::string region = "page";
    std::string features;
    std::string forest;
    std::string forest_train;
    ForestConfig fc;
  };
  auto o = std::make_shared<Opts>();
  auto* model = cmd->bind("--model", o->model, "trained network", "", true);
  cmd->bind("--manifest", o->manifest, "split manifest (image input; also label names)", "dataset.manifest", true);
  cmd->bind("--split", o->split, "train|val|test|all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  cmd->bind("--region", o->region, "page|holistic|header|footer|left_body|right_body", "representation.region");
  cmd->bind("--features", o->features, "evaluation features (vector input)", "", true);
  auto* forest = cmd->bind("--forest", o->forest, "trained forest", "", true);
  auto* ftrain = cmd->bind("--forest-train", o->forest_train, "train a forest on these features first", "", true);
  model->excludes(forest)->excludes(ftrain);
  forest->excludes(ftrain);
  cmd->bind("--trees", o->fc.trees, "forest size", "forest.trees")->check(CLI::PositiveNumber);
  cmd->bind("--mtry", o->fc.features_per_split, "features tried per split (0: sqrt(D))", "forest.features_per_split");
  cmd->bind("--max-depth", o->fc.max_depth, "tree depth limit (0: none)", "forest.max_depth");
  cmd->bind("--min-leaf", o->fc.min_samples_leaf, "minimum samples per leaf", "forest.min_samples_leaf")
      ->check(CLI::PositiveNumber);
  cmd->run = [o](Context& ctx) {
    std::vector<std::string> ids;
    std::vector<int> truth, predicted;
    std::size_t n_classes = 0;
    json metrics;
    if (!o->model.empty()) {
      const Network net = load_network(o->model);
      n_classes = net.spec.n_classes;
      ImageSet set;
      if (!o->features.empty()) {
        const FeatureMatrix f = load_features(o->features);
        set = vector_set(f);
        ids = f.ids;
      } else {
        if (o->manifest.empty()) throw UsageError("eval-classify: --model needs --manifest or --features");
        const Manifest m = load_manifest(o->manifest);
        const auto idx = nonempty_split(m, o->split);
        set = make_image_set(m, idx, prep_for(net.spec, o->region));
        for (auto i : idx) ids.push_back(m.entries[i].path);
      }
      const Tensor32 probs = predict_probabilities(net, set.images);
      for (std::size_t i = 0; i < set.size(); ++i) {
        predicted.push_back(argmax(std::span<const float>(probs.ptr() + i * n_classes, n_classes)));
      }
      truth = set.labels;
    } else if (!o->forest.empty() || !o->forest_train.empty()) {
      if (o->features.empty()) throw UsageError("eval-classify: forests need --features");
      const FeatureMatrix f = load_features(o->features);
      Forest forest;
      if (!o->forest_train.empty()) {
        const FeatureMatrix tr = load_features(o->forest_train);
        ForestConfig fc = o->fc;
        fc.seed = ctx.seed;
        forest = forest_train(tr, class_count({&tr, &f}), fc);
        save_forest(ctx.output("forest.dsrf"), forest);
        if (forest.has_oob) metrics["oob_accuracy"] = forest.oob_accuracy;
      } else {
        forest = load_forest(o->forest);
      }
      n_classes = forest.n_classes;
      predicted = forest_predict_all(forest, f);
      truth = f.labels;
      ids = f.ids;
    } else {
      throw UsageError("eval-classify: give --model, --forest or --forest-train");
    }
    std::vector<std::vector<double>> confusion(n_classes, std::vector<double>(n_classes, 0.0));
    std::size_t correct = 0;
    std::string csv = "id,label,predicted\n";
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= n_classes) {
        throw InvalidArgument("eval-classify: label " + std::to_string(truth[i]) + " outside the model's classes");
      }
      correct += truth[i] == predicted[i];
      confusion[truth[i]][predicted[i]] += 1.0;
      csv += csv_field(ids[i]) + "," + std::to_string(truth[i]) + "," + std::to_string(predicted[i]) + "\n";
    }
    const double acc = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    // Rows hold the fraction of each true class assigned to each prediction.
    for (auto& row : confusion) {
      const double total = std::accumulate(row.begin(), row.end(), 0.0);
      if (total > 0) {
        for (auto& v : row) v /= total;
      }
    }
    ctx.write("predictions.csv", csv);
    ctx.write("confusion.csv", confusion_csv(confusion, label_names_from(o->manifest)));
    metrics["items"] = truth.size();
    metrics["accuracy"] = acc;
    write_metrics(ctx, "eval-classify", metrics);
    *ctx.log << "accuracy " << fmt(acc) << " on " << truth.size() << " items\n";
  };
  cmds.push_back(std::move(cmd));
}

void add_pca_sweep(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "pca-sweep", "mAP@k as a function of PCA output dimensionality");
  struct Opts {
    std::string train;
    std::string queries;
    std::vector<std::size_t> dims = {2, 4, 8, 16, 32, 64, 128};
    std::size_t k = 10;
    std::string ap_mode = "truncated";
  };
  auto o = std::make_shared<Opts>();
  cmd->bind("--train", o->train, "index features; PCA is fitted on these", "", true)->required();
  cmd->bind("--queries", o->queries, "query features", "", true)->required();
  cmd->bind("--dims", o->dims, "output dimensionalities", "pca.dims")->check(CLI::PositiveNumber);
  cmd->bind("--k", o->k, "retrieval depth", "retrieval.k")->check(CLI::PositiveNumber);
  cmd->bind("--ap-mode", o->ap_mode, "truncated|strict|retrieved", "retrieval.ap_mode")
      ->check(CLI::IsMember({"truncated", "strict", "retrieved"}));
  cmd->run = [o](Context& ctx) {
    FeatureMatrix tr = load_features(o->train);
    FeatureMatrix q = load_features(o->queries);
    if (tr.cols != q.cols) throw ShapeError("pca-sweep: train and query dimensionality differ");
    if (tr.rows < 2) throw InvalidArgument("pca-sweep: need at least two index rows");
    const std::size_t limit = std::min(tr.rows - 1, tr.cols);
    for (std::size_t d : o->dims) {
      if (d > limit) {
        throw InvalidArgument("pca-sweep: dim " + std::to_string(d) + " exceeds min(N-1, D) = " +
                              std::to_string(limit));
      }
    }
    const ApMode mode = ap_mode_from_name(o->ap_mode);
    l2_normalize_rows(tr);
    l2_normalize_rows(q);
    const PcaModel full = pca_fit(tr, *std::max_element(o->dims.begin(), o->dims.end()));

    // Reference: the same normalize -> center -> normalize path without projection.
    auto center = [&full](FeatureMatrix x) {
      for (std::size_t i = 0; i < x.rows; ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) r[j] = static_cast<float>(r[j] - full.mean[j]);
      }
      l2_normalize_rows(x);
      return x;
    };
    const double reference = map_at_k(center(q), Index(center(tr)), o->k, mode).back();

    std::string csv = "dim,map\n";
    Series s{"mAP@" + std::to_string(o->k), {}, {}};
    json rows = json::array();
    for (std::size_t d : o->dims) {
      const PcaModel model = pca_truncate(full, d);
      FeatureMatrix ytr = pca_transform(model, tr);
      FeatureMatrix yq = pca_transform(model, q);
      l2_normalize_rows(ytr);
      l2_normalize_rows(yq);
      const double v = map_at_k(yq, Index(std::move(ytr)), o->k, mode).back();
      csv += std::to_string(d) + "," + fmt(v) + "\n";
      s.x.push_back(static_cast<double>(d));
      s.y.push_back(v);
      rows.push_back({{"dim", d}, {"map", v}});
      *ctx.log << "dim " << d << " mAP@" << o->k << " " << fmt(v) << "\n";
    }
    ctx.write("sweep.csv", csv);
    ctx.write("sweep.svg", svg_line_chart("PCA sweep", "dimensions", "mAP@" + std::to_string(o->k),
                                          std::span<const Series>(&s, 1)));
    write_metrics(ctx, "pca-sweep", {{"k", o->k}, {"uncompressed_map", reference}, {"sweep", rows}});
  };
  cmds.push_back(std::move(cmd));
}

void flatten(const json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
  } else if (j.is_number_float()) {
    out[prefix] = fmt(j.get<double>());
  } else if (j.is_string()) {
    out[prefix] = j.get<std::string>();
  } else {
    out[prefix] = j.dump();
  }
}

void add_report(CLI::App& root, std::vector<std::unique_ptr<Command>>& cmds) {
  auto cmd = std::make_unique<Command>(root, "report", "Collect metrics.json files into one table");
  struct Opts {
    std::vector<std::string> inputs;
  };
  auto o = std::make_shared<Opts>();
  cmd->app()->add_option("inputs", o->inputs, "run directories to scan")->required()->check(CLI::ExistingDirectory);
  cmd->run = [o](Context& ctx) {
    std::vector<fs::path> files;
    for (const auto& dir : o->inputs) {
      for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() == "metrics.json") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw InvalidArgument("report: no metrics.json found");
    std::string csv = "run,command,metric,value\n";
    std::string md = "| run | command | metric | value |\n|---|---|---|---|\n";
    for (const auto& f : files) {
      const json doc = json::parse(read_text_file(f));
      const std::string run = f.parent_path().lexically_proximate(ctx.out).generic_string();
      const std::string command = doc.value("command", "");
      std::map<std::string, std::string> flat;
      flatten(doc.contains("metrics") ? doc["metrics"] : json::object(), "", flat);
      for (const auto& [k, v] : flat) {
        csv += csv_field(run) + "," + command + "," + csv_field(k) + "," + csv_field(v) + "\n";
        md += "| " + run + " | " + command + " | " + k + " | " + v + " |\n";
      }
    }
    ctx.write("report.csv", csv);
    ctx.write("report.md", md);
    *ctx.log << "collected " << files.size() << " metric files\n";
  };
  cmds.push_back(std::move(cmd));
}

struct Registry {
  CLI::App app{"Document image classification and retrieval toolkit", "docstyle"};
  std::vector<std::unique_ptr<Command>> commands;

  Registry() {
    app.require_subcommand(1);
    app.set_version_flag("--version", DOCSTYLE_VERSION);
    add_synth(app, commands);
    add_split(app, commands);
    add_train_cnn(app, commands);
    add_extract(app, commands);
    add_fit_pca(app, commands);
    add_compress(app, commands);
    add_bow_vocab(app, commands);
    add_encode(app, commands);
    add_build_index(app, commands);
    add_retrieve(app, commands);
    add_eval_classify(app, commands);
    add_eval_retrieve(app, commands);
    add_pca_sweep(app, commands);
    add_report(app, commands);
  }

  std::set<std::string> config_keys() const {
    std::set<std::string> keys;
    for (const auto& c : commands)
      for (const auto& b : c->bindings()) keys.insert(b.key);
    return keys;
  }
};

void apply_config(const Command& cmd, const ConfigDoc& doc) {
  for (const auto& b : cmd.bindings()) {
    if (b.option->count() > 0 || !doc.has(b.key)) continue;
    b.assign(doc);
    if (b.input_path) {
      const std::string p = doc.get_string(b.key);
      if (!fs::exists(p)) throw ParseError(doc.origin() + ": '" + b.key + "' names a missing path: " + p);
    }
  }
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

std::vector<std::string> command_names() {
  Registry r;
  std::vector<std::string> names;
  for (const auto& c : r.commands) names.push_back(c->app()->get_name());
  return names;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Registry reg;
  CLI::App& app = reg.app;
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << DOCSTYLE_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  Command* cmd = nullptr;
  for (auto& c : reg.commands) {
    if (c->app()->parsed()) cmd = c.get();
  }
  std::optional<ConfigDoc> config;
  try {
    if (!cmd->common().config.empty()) {
      config = ConfigDoc::load(cmd->common().config);
      config->reject_unknown(reg.config_keys());
      apply_config(*cmd, *config);
    }
    if (cmd->common().out.empty()) throw UsageError("--out is required (flag or config key 'out')");
  } catch (const Error& e) {
    err << "usage error: " << e.what() << "\n" << cmd->app()->help();
    return kExitUsage;
  }

  const std::string name = cmd->app()->get_name();
  Context ctx;
  ctx.out = cmd->common().out;
  ctx.seed = cmd->common().seed;
  ctx.threads = resolve_threads(cmd->common().threads);
  ctx.log = &out;
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fs::create_directories(ctx.out);
    kernels::set_threads(ctx.threads);
    cmd->run(ctx);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << cmd->app()->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    if (msg.rfind(name + ": ", 0) != 0) msg = name + ": " + msg;
    err << "error: " << msg << "\n";
    return kExitFailure;
  }

  json run;
  run["command"] = name;
  run["args"] = args;
  run["versions"] = {{"docstyle", DOCSTYLE_VERSION},
                     {"cli11", CLI11_VERSION},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"compiler", __VERSION__},
                     {"openmp", _OPENMP}};
  run["seed"] = ctx.seed;
  run["threads"] = ctx.threads;
  if (config) {
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config->hash()));
    run["config"] = {{"path", config->origin()}, {"fnv1a64", hash}};
  } else {
    run["config"] = nullptr;
  }
  std::sort(ctx.outputs.begin(), ctx.outputs.end());
  run["outputs"] = ctx.outputs;
  run["started_utc"] = started;
  run["finished_utc"] = utc_now();
  run["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    write_text_file(ctx.out / "run.json", run.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << name << ": " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace docstyle
