// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance --work DIR [--only 1,2,...] [--seeds 5]
//
// Criteria 5, 6 and 8 share one corpus and CNN per seed; seed 1 of the
// ordering study is the criterion 5 run.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "docstyle/arch.hpp"
#include "docstyle/binio.hpp"
#include "docstyle/classic.hpp"
#include "docstyle/cli.hpp"
#include "docstyle/compress.hpp"
#include "docstyle/forest.hpp"
#include "docstyle/image.hpp"
#include "docstyle/kernels.hpp"
#include "docstyle/pipeline.hpp"
#include "docstyle/retrieval.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace docstyle;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

void report(const Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << o.id << " " << o.name << ": " << o.detail
            << std::endl;
}

void note(const std::string& s) { std::cout << "      " << s << std::endl; }

// 1. Gradient suite.
Outcome gradients() {
  constexpr double kTol = 1e-4;
  constexpr int kShapes = 20;
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  std::string worst_label;
  std::size_t cases = 0;
  for (std::size_t kind = 0; kind < testing::kLayerKinds; ++kind) {
    for (int rep = 0; rep < kShapes; ++rep) {
      auto [layer, shape] = testing::random_case(kind, rng);
      const auto r = testing::check_layer(layer, shape, rng, 7000 + kind * 100 + rep);
      ++cases;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_label = r.label;
      }
    }
  }
  for (int rep = 0; rep < kShapes; ++rep) {
    const auto r = testing::check_softmax_xent(1 + rng.below(4), 2 + rng.below(8), rng);
    ++cases;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_label = r.label;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o{1, "gradient suite", worst < kTol && secs < 60.0, ""};
  o.detail = std::to_string(cases) + " cases, max rel err " + fmt("%.2e", worst) + " (" + worst_label +
             ") < 1e-4; " + fmt("%.1f", secs) + " s < 60 s";
  return o;
}

// 2. Geometry suite.
Outcome geometry() {
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  auto range = [&](Region r, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    const auto& s = region_spec(r);
    expect(s.r0 == r0 && s.r1 == r1 && s.c0 == c0 && s.c1 == c1, std::string(s.name) + " range");
  };
  expect(kFrameHeight == 780 && kFrameWidth == 600, "frame");
  range(Region::Holistic, 0, 780, 0, 600);
  range(Region::Header, 0, 256, 0, 600);
  range(Region::Footer, 524, 780, 0, 600);
  range(Region::LeftBody, 190, 590, 0, 300);
  range(Region::RightBody, 190, 590, 300, 600);

  GrayImage frame(780, 600);
  for (std::size_t r = 0; r < 780; ++r)
    for (std::size_t c = 0; c < 600; ++c) frame.at(r, c) = static_cast<float>((r * 600 + c) % 253) / 252.0f;
  const std::map<Region, std::pair<std::size_t, std::size_t>> extents = {
      {Region::Holistic, {780, 600}}, {Region::Header, {256, 600}},   {Region::Footer, {256, 600}},
      {Region::LeftBody, {400, 300}}, {Region::RightBody, {400, 300}}};
  for (const auto& [region, hw] : extents) {
    const auto& s = region_spec(region);
    const GrayImage crop = region_crop(frame, region);
    expect(crop.height == hw.first && crop.width == hw.second, std::string(s.name) + " extent");
    bool same = true;
    for (std::size_t r = 0; r < crop.height && same; ++r)
      for (std::size_t c = 0; c < crop.width && same; ++c) same = crop.at(r, c) == frame.at(s.r0 + r, s.c0 + c);
    expect(same, std::string(s.name) + " pixels");
  }
  // Pages of any size are brought to the frame first; every region lands on the target.
  for (std::size_t target : {227u, 64u}) {
    const auto regions = extract_regions(GrayImage(130, 100, 0.5f), target);
    expect(regions.size() == 5, "region count");
    for (const auto& [name, img] : regions) {
      expect(img.height == target && img.width == target, name + " target " + std::to_string(target));
    }
  }
  Outcome o{2, "region geometry", bad.empty(), ""};
  if (bad.empty()) {
    o.detail = "header 256x600, footer rows [524,780), bodies 400x300 at rows [190,590), targets 227 and 64 exact";
  } else {
    for (const auto& b : bad) o.detail += b + "; ";
  }
  return o;
}

// 3. Dimensional bookkeeping.
Outcome dimensions() {
  std::vector<std::string> got;
  bool ok = true;
  // One word per position on a 4x4 grid covers every cell of every scheme.
  std::vector<std::uint32_t> words;
  std::vector<Position> pos;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      words.push_back(static_cast<std::uint32_t>(i * 4 + j));
      pos.push_back({(i + 0.5) / 4.0, (j + 0.5) / 4.0});
    }
  const std::vector<std::pair<std::string, std::size_t>> schemes = {
      {"holistic", 300}, {"H2V0", 2100}, {"H0V3", 4500}, {"H2V3", 6300}, {"pyramid3", 6300}};
  for (const auto& [name, want] : schemes) {
    const auto v = bow_encode_words(words, pos, 300, parse_scheme(name));
    ok = ok && v.size() == want;
    got.push_back(name + " " + std::to_string(v.size()));
  }

  std::vector<FeatureMatrix> regions;
  for (int r = 0; r < 5; ++r) regions.push_back(testing::labelled_blobs(130, 5, 700, 1.0, 40 + r));
  const PcaModel m640 = pca_fit(regions[0], 640);
  const PcaModel m128 = pca_truncate(m640, 128);
  const std::size_t retrieval_dim = build_ensemble_features(regions, std::vector<PcaModel>(5, m128), 128).cols;
  const std::size_t classifier_dim = build_ensemble_features(regions, std::vector<PcaModel>(5, m640), 640).cols;
  const ArchSpec head = parse_arch(arch_preset("ensemble-head"), 10);
  const std::size_t head_input = shape_size(head.input_shape());
  ok = ok && retrieval_dim == 640 && classifier_dim == 3200 && head_input == 3200;
  got.push_back("ensemble descriptor " + std::to_string(retrieval_dim));
  got.push_back("ensemble classifier input " + std::to_string(classifier_dim) + " (head accepts " +
                std::to_string(head_input) + ")");
  Outcome o{3, "dimensional bookkeeping", ok, ""};
  for (std::size_t i = 0; i < got.size(); ++i) o.detail += (i ? ", " : "") + got[i];
  return o;
}

// 4. Oracle equivalence.
Outcome oracles() {
  constexpr double kRetrievalTol = 1e-12, kPcaTol = 1e-8;
  const auto items = testing::labelled_blobs(100, 5, 16, 0.5, 81, "item");
  const auto queries = testing::labelled_blobs(10, 5, 16, 0.5, 82, "query");
  const Index index(items);
  const std::size_t k = 20;

  // Brute force: full sort by (distance, id), then truncated AP.
  double knn_err = 0.0, map_err = 0.0;
  bool order_ok = true;
  std::vector<double> curve_sum(k, 0.0);
  const auto rankings = knn_all(index, queries, k);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    std::vector<double> d(items.rows);
    for (std::size_t j = 0; j < items.rows; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < items.cols; ++c) {
        const double diff = static_cast<double>(queries.row(q)[c]) - static_cast<double>(items.row(j)[c]);
        s += diff * diff;
      }
      d[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(items.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return d[a] != d[b] ? d[a] < d[b] : items.ids[a] < items.ids[b]; });
    const auto& r = rankings[q];
    for (std::size_t i = 0; i < k; ++i) {
      order_ok = order_ok && r.neighbors[i].item == order[i];
      knn_err = std::max(knn_err, std::abs(r.neighbors[i].distance - d[order[i]]));
    }
    std::size_t relevant = 0;
    for (int l : items.labels) relevant += l == queries.labels[q];
    for (std::size_t n = 1; n <= k; ++n) {
      double sum = 0.0;
      int hits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (items.labels[order[i]] == queries.labels[q]) sum += static_cast<double>(++hits) / static_cast<double>(i + 1);
      }
      curve_sum[n - 1] += sum / static_cast<double>(std::min(relevant, n));
    }
  }
  const auto curve = map_at_k(queries, index, k);
  for (std::size_t n = 0; n < k; ++n) {
    map_err = std::max(map_err, std::abs(curve[n] - curve_sum[n] / static_cast<double>(queries.rows)));
  }

  // PCA captured variance against a dense self-adjoint eigensolver.
  double pca_err = 0.0;
  for (std::uint64_t seed : {91u, 92u, 93u}) {
    Rng rng(seed);
    const std::size_t n = 200, dim = 50;
    std::vector<double> x(n * dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) x[i * dim + j] = rng.normal() * (1.0 + 0.1 * static_cast<double>(j % 7));
    Eigen::MatrixXd m(n, dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) m(i, j) = x[i * dim + j];
    const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    for (std::size_t d : {1u, 10u, 25u, 50u}) {
      double want = 0.0;
      for (std::size_t i = 0; i < d; ++i) want += es.eigenvalues()(static_cast<Eigen::Index>(dim - 1 - i));
      pca_err = std::max(pca_err, std::abs(pca_fit(x, n, dim, d).captured_variance() - want));
    }
  }
  Outcome o{4, "oracle equivalence",
            order_ok && knn_err < kRetrievalTol && map_err < kRetrievalTol && pca_err < kPcaTol, ""};
  o.detail = std::string("50 queries x 500 items: knn order ") + (order_ok ? "identical" : "DIFFERS") +
             ", distance err " + fmt("%.1e", knn_err) + ", mAP@1..20 err " + fmt("%.1e", map_err) +
             " < 1e-12; PCA 200x50 captured variance err " + fmt("%.1e", pca_err) + " < 1e-8";
  return o;
}

// Six-class corpus, CNN and baselines for one seed.
struct SeedRun {
  std::uint64_t seed = 0;
  double cnn_accuracy = 0.0;
  double runtime = 0.0;  // corpus, split, training and test evaluation
  std::size_t epochs = 0;
  FeatureMatrix cnn_train, cnn_test;
  // name -> (accuracy, mAP@10), in the expected order.
  std::vector<std::pair<std::string, std::pair<double, double>>> scores;
};

constexpr std::size_t kMapK = 10;
constexpr std::size_t kRetrievalDim = 128;

double map10(const FeatureMatrix& tr, const FeatureMatrix& te) {
  const RetrievalPrep prep = fit_retrieval_prep(tr, kRetrievalDim);
  const Index index(apply_retrieval_prep(prep, tr));
  return map_at_k(apply_retrieval_prep(prep, te), index, kMapK).back();
}

double forest_accuracy(const FeatureMatrix& tr, const FeatureMatrix& te, std::size_t classes, std::uint64_t seed) {
  ForestConfig fc;
  fc.seed = seed;
  const Forest f = forest_train(tr, classes, fc);
  const auto pred = forest_predict_all(f, te);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == te.labels[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

SeedRun run_seed(const fs::path& work, std::uint64_t seed) {
  constexpr std::size_t kClasses = 6;
  SeedRun run;
  run.seed = seed;
  const auto t0 = Clock::now();
  SynthConfig sc;
  const auto layouts = all_layouts();
  sc.classes.assign(layouts.begin(), layouts.begin() + kClasses);
  sc.per_class = 200;
  sc.seed = seed;
  Manifest m = generate_synthetic(sc, work / ("corpus_seed" + std::to_string(seed)));
  m = split_dataset(m, SplitCounts{800, 200, std::nullopt}, seed);
  const auto tri = m.indices(Split::Train), vai = m.indices(Split::Val), tei = m.indices(Split::Test);
  const ImagePrep prep;
  TrainConfig tc;
  tc.seed = seed;
  const ArchSpec spec = parse_arch(arch_preset("desk"), kClasses);
  const auto trained =
      train(init_network(spec, RandomInit{seed}), make_image_set(m, tri, prep), make_image_set(m, vai, prep), tc);
  run.epochs = trained.history.stopping_epoch;
  run.cnn_accuracy = accuracy(trained.net, make_image_set(m, tei, prep));
  run.runtime = seconds_since(t0);

  run.cnn_train = cnn_features(trained.net, m, tri, prep);
  run.cnn_test = cnn_features(trained.net, m, tei, prep);
  run.scores.push_back({"cnn", {run.cnn_accuracy, map10(run.cnn_train, run.cnn_test)}});

  const BowConfig bow;
  const auto dtr = compute_descriptors(m, tri, bow), dte = compute_descriptors(m, tei, bow);
  const auto km = fit_vocabulary(dtr, bow, seed);
  const auto wtr = assign_all(dtr, km.vocabulary, bow), wte = assign_all(dte, km.vocabulary, bow);
  auto add = [&](const std::string& name, FeatureMatrix tr, FeatureMatrix te) {
    run.scores.push_back({name, {forest_accuracy(tr, te, kClasses, seed), map10(tr, te)}});
  };
  for (const std::string scheme : {"pyramid3", "holistic"}) {
    FeatureMatrix a = bow_features(wtr, bow.vocabulary, parse_scheme(scheme));
    FeatureMatrix b = bow_features(wte, bow.vocabulary, parse_scheme(scheme));
    attach_items(a, m, tri);
    attach_items(b, m, tei);
    add("bow-" + scheme, std::move(a), std::move(b));
  }
  add("region-brightness", region_brightness_features(m, tri), region_brightness_features(m, tei));
  add("brightness", brightness_features(m, tri), brightness_features(m, tei));
  return run;
}

// 5. Desk-scale classification, from seed 1.
Outcome desk_classification(const SeedRun& r) {
  Outcome o{5, "desk-scale CNN classification", r.cnn_accuracy >= 0.90 && r.runtime <= 900.0, ""};
  o.detail = "test accuracy " + fmt("%.4f", r.cnn_accuracy) + " >= 0.90 (" + std::to_string(r.epochs) +
             " epochs); " + fmt("%.0f", r.runtime) + " s <= 900 s";
  return o;
}

// 6. Ordering in both accuracy and mAP@10.
Outcome ordering(const std::vector<SeedRun>& runs) {
  std::size_t good = 0;
  for (const auto& r : runs) {
    bool acc_ok = true, map_ok = true;
    std::string line = "seed " + std::to_string(r.seed) + ":";
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      const auto& [name, s] = r.scores[i];
      line += " " + name + " " + fmt("%.3f", s.first) + "/" + fmt("%.3f", s.second);
      if (i > 0) {
        acc_ok = acc_ok && r.scores[i - 1].second.first >= s.first;
        map_ok = map_ok && r.scores[i - 1].second.second >= s.second;
      }
    }
    line += std::string("  accuracy ") + (acc_ok ? "ordered" : "NOT ordered") + ", mAP@10 " +
            (map_ok ? "ordered" : "NOT ordered");
    note(line);
    good += acc_ok && map_ok;
  }
  Outcome o{6, "baseline ordering", good >= 4, ""};
  o.detail = "cnn >= bow-pyramid3 >= bow-holistic >= region-brightness >= brightness in accuracy and mAP@10 in " +
             std::to_string(good) + "/" + std::to_string(runs.size()) + " seeds (need >= 4 of 5)";
  return o;
}

// 7. Transfer: epochs to the validation threshold, fine-tuned vs random.
constexpr double kTransferThreshold = 0.90;

std::optional<std::size_t> epochs_to(const TrainHistory& h, double threshold) {
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    if (h.epochs[e].val_accuracy >= threshold) return e + 1;
  }
  return std::nullopt;
}

Outcome transfer(const fs::path& work, const std::vector<std::uint64_t>& seeds) {
  const auto layouts = all_layouts();
  const std::vector<Layout> source(layouts.begin(), layouts.begin() + 4);
  const std::vector<Layout> target(layouts.begin() + 4, layouts.begin() + 8);
  std::size_t good = 0;
  for (std::uint64_t seed : seeds) {
    const ImagePrep prep;
    SynthConfig src;
    src.classes = source;
    src.per_class = 200;
    src.seed = seed;
    Manifest ms = generate_synthetic(src, work / ("transfer_source_seed" + std::to_string(seed)));
    ms = split_dataset(ms, SplitCounts{640, 160, 0}, seed, true);
    TrainConfig tc;
    tc.seed = seed;
    const auto donor = train(init_network(parse_arch(arch_preset("desk"), 4), RandomInit{seed}),
                             make_image_set(ms, ms.indices(Split::Train), prep),
                             make_image_set(ms, ms.indices(Split::Val), prep), tc);

    SynthConfig tgt;
    tgt.classes = target;
    tgt.per_class = 100;
    tgt.seed = derive_seed(seed, 1);
    Manifest mt = generate_synthetic(tgt, work / ("transfer_target_seed" + std::to_string(seed)));
    mt = split_dataset(mt, SplitCounts{200, 200, 0}, seed, true);  // 50 training images per class
    const ImageSet tr = make_image_set(mt, mt.indices(Split::Train), prep);
    const ImageSet va = make_image_set(mt, mt.indices(Split::Val), prep);
    const ArchSpec spec = parse_arch(arch_preset("desk"), 4);
    TrainConfig ft = tc;
    ft.max_epochs = 30;
    ft.patience = ft.max_epochs;  // run the full budget so the curve is observed
    const std::uint64_t head_seed = derive_seed(seed, 2);
    const auto scratch = train(init_network(spec, RandomInit{head_seed}), tr, va, ft);
    const auto tuned = train(init_network(spec, TransferInit{&donor.net, "source", std::nullopt, head_seed}), tr, va, ft);
    const auto e_scratch = epochs_to(scratch.history, kTransferThreshold);
    const auto e_tuned = epochs_to(tuned.history, kTransferThreshold);
    const bool ok = e_tuned && (!e_scratch || *e_tuned <= *e_scratch);
    good += ok;
    auto show = [](const std::optional<std::size_t>& e) { return e ? std::to_string(*e) : std::string("never"); };
    note("seed " + std::to_string(seed) + ": epochs to val acc " + fmt("%.2f", kTransferThreshold) + ": fine-tuned " +
         show(e_tuned) + ", random " + show(e_scratch) + (ok ? "" : "  (fine-tuned slower)"));
  }
  Outcome o{7, "transfer trend", good >= 4, ""};
  o.detail = "fine-tuned init reaches val acc " + fmt("%.2f", kTransferThreshold) + " no later than random init in " +
             std::to_string(good) + "/" + std::to_string(seeds.size()) + " seeds (need >= 4 of 5)";
  return o;
}

struct CliRun {
  int code = 0;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, err.str()};
}

// 8. PCA sweep on the criterion 5 CNN features, through the pca-sweep command.
Outcome compression(const fs::path& work, const SeedRun& r) {
  const fs::path dir = work / "pca_sweep";
  fs::create_directories(dir);
  save_features(dir / "train.dsfea", r.cnn_train);
  save_features(dir / "test.dsfea", r.cnn_test);
  const auto res = cli({"pca-sweep", "--train", (dir / "train.dsfea").string(), "--queries",
                        (dir / "test.dsfea").string(), "--dims", "128,64,32", "--k", "10", "--out",
                        (dir / "out").string()});
  Outcome o{8, "compression trend", false, ""};
  if (res.code != 0) {
    o.detail = "pca-sweep failed: " + res.err;
    return o;
  }
  const auto metrics = nlohmann::json::parse(read_text_file(dir / "out" / "metrics.json"))["metrics"];
  std::map<std::size_t, double> map;
  for (const auto& row : metrics["sweep"]) map[row["dim"].get<std::size_t>()] = row["map"].get<double>();
  const double loss = std::max(map[128] - map[64], map[128] - map[32]);
  o.pass = loss < 0.02;
  o.detail = "mAP@10 at 128/64/32 dims " + fmt("%.4f", map[128]) + "/" + fmt("%.4f", map[64]) + "/" +
             fmt("%.4f", map[32]) + ", largest loss vs 128 " + fmt("%.4f", loss) + " < 0.02 (uncompressed " +
             fmt("%.4f", metrics["uncompressed_map"].get<double>()) + ")";
  return o;
}

// 9. Byte determinism of the full command pipeline at --threads 1.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    // Run manifests, wall-clock timings, and files that embed their own paths are excluded.
    const std::string name = e.path().filename().string();
    if (name == "run.json" || name == "timing.csv" || ext == ".json" || ext == ".tsv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), dir).generic_string()] = s.str();
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  Outcome o{9, "determinism", false, ""};
  auto pipeline = [&](const fs::path& root) -> std::string {
    auto p = [&](const std::string& s) { return (root / s).string(); };
    const std::vector<std::vector<std::string>> steps = {
        {"synth", "--classes", "4", "--per-class", "15", "--height", "130", "--width", "100", "--out", p("data")},
        {"split", "--manifest", p("data/manifest.tsv"), "--train", "40", "--val", "10", "--out", p("split")},
        {"train-cnn", "--manifest", p("split/manifest.tsv"), "--epochs", "3", "--out", p("cnn")},
        {"extract-features", "--manifest", p("split/manifest.tsv"), "--split", "train", "--model",
         p("cnn/model.dsnet"), "--name", "train", "--out", p("feat")},
        {"extract-features", "--manifest", p("split/manifest.tsv"), "--split", "test", "--model",
         p("cnn/model.dsnet"), "--name", "test", "--out", p("feat")},
        {"fit-pca", "--features", p("feat/train.dsfea"), "--dim", "16", "--out", p("pca")},
        {"compress", "--features", p("feat/test.dsfea"), "--pca", p("pca/pca.dspca"), "--name", "test", "--out",
         p("compressed")},
        {"bow-vocab", "--manifest", p("split/manifest.tsv"), "--split", "train", "--k", "20", "--sample", "3000",
         "--out", p("vocab")},
        {"encode", "--manifest", p("split/manifest.tsv"), "--split", "train", "--vocab", p("vocab/vocab.dsvoc"),
         "--scheme", "holistic", "--scheme", "pyramid2", "--out", p("bow_train")},
        {"encode", "--manifest", p("split/manifest.tsv"), "--split", "test", "--vocab", p("vocab/vocab.dsvoc"),
         "--scheme", "pyramid2", "--out", p("bow_test")},
        {"build-index", "--features", p("feat/train.dsfea"), "--pca", p("pca/pca.dspca"), "--out", p("index")},
        {"retrieve", "--index", p("index/index.dsfea"), "--queries", p("feat/test.dsfea"), "--pca",
         p("pca/pca.dspca"), "--k", "5", "--out", p("retrieve")},
        {"eval-retrieve", "--index", p("index/index.dsfea"), "--queries", p("feat/test.dsfea"), "--pca",
         p("pca/pca.dspca"), "--k", "10", "--manifest", p("split/manifest.tsv"), "--out", p("eval_retrieve")},
        {"eval-classify", "--model", p("cnn/model.dsnet"), "--manifest", p("split/manifest.tsv"), "--split", "test",
         "--out", p("eval_cnn")},
        {"eval-classify", "--forest-train", p("bow_train/bow_pyramid2.dsfea"), "--features",
         p("bow_test/bow_pyramid2.dsfea"), "--trees", "50", "--out", p("eval_forest")},
        {"pca-sweep", "--train", p("feat/train.dsfea"), "--queries", p("feat/test.dsfea"), "--dims", "4,8,16",
         "--out", p("sweep")},
    };
    for (auto args : steps) {
      args.insert(args.end(), {"--seed", "13", "--threads", "1"});
      const auto r = cli(args);
      if (r.code != 0) return args[0] + " exited " + std::to_string(r.code) + ": " + r.err;
    }
    return "";
  };
  for (const char* tag : {"run_a", "run_b"}) {
    fs::remove_all(work / "determinism" / tag);
    const std::string err = pipeline(work / "determinism" / tag);
    if (!err.empty()) {
      o.detail = std::string(tag) + ": " + err;
      return o;
    }
  }
  const auto a = artifacts(work / "determinism" / "run_a");
  const auto b = artifacts(work / "determinism" / "run_b");
  std::size_t models = 0, features = 0, csvs = 0;
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) differ.push_back(name);
    const std::string ext = fs::path(name).extension().string();
    models += ext == ".dsnet" || ext == ".dsrf" || ext == ".dspca" || ext == ".dsvoc";
    features += ext == ".dsfea";
    csvs += ext == ".csv";
  }
  for (const auto& [name, bytes] : b) {
    if (!a.count(name)) differ.push_back(name);
  }
  o.pass = differ.empty() && models > 0 && features > 0 && csvs > 0;
  o.detail = std::to_string(a.size()) + " files compared (" + std::to_string(models) + " models, " +
             std::to_string(features) + " feature files, " + std::to_string(csvs) + " CSVs), " +
             std::to_string(differ.size()) + " differ";
  for (std::size_t i = 0; i < differ.size() && i < 5; ++i) o.detail += (i ? ", " : ": ") + differ[i];
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  std::size_t n_seeds = 5;
  app.add_option("--work", work, "scratch directory for corpora and runs");
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--seeds", n_seeds, "seeds for criteria 6 and 7")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected = only.empty() ? std::set<int>{1, 2, 3, 4, 5, 6, 7, 8, 9}
                                              : std::set<int>(only.begin(), only.end());
  const fs::path dir(work);
  fs::create_directories(dir);
  kernels::set_threads(1);

  std::vector<Outcome> outcomes;
  auto record = [&](Outcome o) {
    report(o);
    outcomes.push_back(std::move(o));
  };
  const auto t0 = Clock::now();
  if (selected.count(1)) record(gradients());
  if (selected.count(2)) record(geometry());
  if (selected.count(3)) record(dimensions());
  if (selected.count(4)) record(oracles());

  std::vector<std::uint64_t> seeds(n_seeds);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});
  if (selected.count(5) || selected.count(6) || selected.count(8)) {
    std::vector<SeedRun> runs;
    const std::size_t count = selected.count(6) ? seeds.size() : 1;
    for (std::size_t i = 0; i < count; ++i) {
      runs.push_back(run_seed(dir, seeds[i]));
      if (i == 0 && selected.count(5)) record(desk_classification(runs[0]));
      if (i == 0 && selected.count(8)) record(compression(dir, runs[0]));
    }
    if (selected.count(6)) record(ordering(runs));
  }
  if (selected.count(7)) record(transfer(dir, seeds));
  if (selected.count(9)) record(determinism(dir));

  std::size_t passed = 0;
  for (const auto& o : outcomes) passed += o.pass;
  std::cout << passed << "/" << outcomes.size() << " criteria passed in " << fmt("%.0f", seconds_since(t0)) << " s"
            << std::endl;
  return passed == outcomes.size() ? 0 : 1;
}
