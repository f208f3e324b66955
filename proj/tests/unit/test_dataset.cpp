#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "docstyle/arch.hpp"
#include "docstyle/binio.hpp"
#include "docstyle/dataset.hpp"
#include "docstyle/error.hpp"
#include "docstyle/network.hpp"
#include "test_util.hpp"

using namespace docstyle;
using docstyle::testing::TempDir;

namespace {

Manifest toy_manifest(std::size_t n, std::size_t classes) {
  Manifest m;
  for (std::size_t c = 0; c < classes; ++c) m.label_names.push_back("c" + std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    m.entries.push_back({"img" + std::to_string(i) + ".pgm", static_cast<int>(i % classes), Split::Unassigned});
  }
  return m;
}

std::map<Split, std::size_t> split_sizes(const Manifest& m) {
  std::map<Split, std::size_t> s;
  for (const auto& e : m.entries) ++s[e.split];
  return s;
}

std::vector<unsigned char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("800/200/remainder on 3482 entries") {
    const Manifest m = split_dataset(toy_manifest(3482, 10), SplitCounts{800, 200, std::nullopt}, 1);
    const auto s = split_sizes(m);
    CHECK(s.at(Split::Train) == 800);
    CHECK(s.at(Split::Val) == 200);
    CHECK(s.at(Split::Test) == 2482);
    CHECK(s.count(Split::Unassigned) == 0);
  }

  TEST_CASE("0.8/0.1/0.1 ratios on 400000 entries") {
    const Manifest m = split_dataset(toy_manifest(400000, 16), SplitRatios{0.8, 0.1, 0.1}, 2);
    const auto s = split_sizes(m);
    CHECK(s.at(Split::Train) == 320000);
    CHECK(s.at(Split::Val) == 40000);
    CHECK(s.at(Split::Test) == 40000);
  }

  TEST_CASE("invalid split requests") {
    const Manifest m = toy_manifest(100, 2);
    CHECK_THROWS_AS(split_dataset(m, SplitRatios{0.8, 0.3, 0.1}, 1), InvalidArgument);
    CHECK_THROWS_AS(split_dataset(m, SplitCounts{90, 20, std::nullopt}, 1), InvalidArgument);
    CHECK_THROWS_AS(split_dataset(m, SplitCounts{50, 20, 40}, 1), InvalidArgument);
  }

  TEST_CASE("splits are disjoint, cover the corpus and depend only on the seed") {
    const Manifest base = toy_manifest(537, 4);
    const Manifest a = split_dataset(base, SplitRatios{0.6, 0.2, 0.2}, 5);
    const Manifest b = split_dataset(base, SplitRatios{0.6, 0.2, 0.2}, 5);
    const Manifest c = split_dataset(base, SplitRatios{0.6, 0.2, 0.2}, 6);
    CHECK(a.entries == b.entries);
    CHECK(a.entries != c.entries);
    std::set<std::size_t> all;
    for (Split s : {Split::Train, Split::Val, Split::Test, Split::Unassigned}) {
      for (auto i : a.indices(s)) CHECK(all.insert(i).second);
    }
    CHECK(all.size() == base.entries.size());
  }

  TEST_CASE("stratified splits keep each label within one item of the requested fraction") {
    Manifest base = toy_manifest(0, 3);
    const std::size_t per_label[] = {101, 57, 342};
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < per_label[c]; ++i)
        base.entries.push_back({"c" + std::to_string(c) + "_" + std::to_string(i), c, Split::Unassigned});
    const double frac = 0.7;
    const Manifest m = split_dataset(base, SplitRatios{frac, 0.15, 0.15}, 3, true);
    for (int c = 0; c < 3; ++c) {
      std::size_t train = 0;
      for (const auto& e : m.entries) train += e.label == c && e.split == Split::Train;
      CHECK(std::abs(static_cast<double>(train) - frac * static_cast<double>(per_label[c])) < 1.0);
    }
  }

  TEST_CASE("batches of 3 over 10 items") {
    Manifest m = toy_manifest(10, 2);
    for (auto& e : m.entries) e.split = Split::Train;
    const auto a = iterate_batches(m, Split::Train, 3, 9, 0);
    REQUIRE(a.size() == 4);
    CHECK(a[0].size() == 3);
    CHECK(a[1].size() == 3);
    CHECK(a[2].size() == 3);
    CHECK(a[3].size() == 1);
    CHECK(iterate_batches(m, Split::Train, 3, 9, 0) == a);
    CHECK(iterate_batches(m, Split::Train, 3, 9, 1) != a);
    std::set<std::size_t> seen;
    for (const auto& b : a) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 10);
  }

  TEST_CASE("manifest loading validates labels, paths and files") {
    TempDir dir("man");
    write_text_file(dir / "a.pgm", "P5\n1 1\n255\n\x80");
    write_text_file(dir / "ok.tsv", "#labels\tx\ty\na.pgm\ty\ttrain\n");
    const Manifest ok = load_manifest(dir / "ok.tsv");
    REQUIRE(ok.entries.size() == 1);
    CHECK(ok.entries[0].label == 1);
    CHECK(ok.entries[0].split == Split::Train);

    write_text_file(dir / "range.tsv", "#labels\tx\ty\na.pgm\t2\ttrain\n");
    CHECK_THROWS_WITH_AS(load_manifest(dir / "range.tsv"), doctest::Contains("label index"), ParseError);
    write_text_file(dir / "dup.tsv", "#labels\tx\na.pgm\tx\ttrain\na.pgm\tx\ttest\n");
    CHECK_THROWS_WITH_AS(load_manifest(dir / "dup.tsv"), doctest::Contains("duplicate"), ParseError);
    write_text_file(dir / "miss.tsv", "#labels\tx\nb.pgm\tx\ttrain\n");
    CHECK_THROWS_AS(load_manifest(dir / "miss.tsv"), IoError);
    CHECK_NOTHROW(load_manifest(dir / "miss.tsv", false));
    write_text_file(dir / "nohdr.tsv", "a.pgm\tx\ttrain\n");
    CHECK_THROWS_AS(load_manifest(dir / "nohdr.tsv"), ParseError);
  }

  TEST_CASE("manifest save and load round-trip") {
    TempDir dir("man");
    SynthConfig cfg;
    cfg.classes = {Layout::Letter, Layout::Form};
    cfg.per_class = 3;
    cfg.height = cfg.width = 40;
    const Manifest m = split_dataset(generate_synthetic(cfg, dir / "data"), SplitCounts{2, 2, std::nullopt}, 4);
    save_manifest(dir / "copy" / "m.tsv", m);
    const Manifest back = load_manifest(dir / "copy" / "m.tsv");
    CHECK(back.label_names == m.label_names);
    REQUIRE(back.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      CHECK(back.entries[i].label == m.entries[i].label);
      CHECK(back.entries[i].split == m.entries[i].split);
      CHECK(std::filesystem::equivalent(back.resolve(back.entries[i]), m.resolve(m.entries[i])));
    }
  }

  TEST_CASE("4 classes x 100 images gives 400 balanced files, bit-identical on re-run") {
    TempDir dir("syn");
    SynthConfig cfg;
    cfg.classes = {Layout::Letter, Layout::Memo, Layout::Form, Layout::News};
    cfg.per_class = 100;
    cfg.height = 64;
    cfg.width = 48;
    cfg.seed = 7;
    const Manifest a = generate_synthetic(cfg, dir / "a");
    const Manifest b = generate_synthetic(cfg, dir / "b");
    CHECK(a.entries.size() == 400);
    std::size_t files = 0;
    for (const auto& f : std::filesystem::directory_iterator(dir / "a" / "images")) files += f.path().extension() == ".pgm";
    CHECK(files == 400);
    std::map<int, std::size_t> per;
    for (const auto& e : a.entries) ++per[e.label];
    for (const auto& [label, count] : per) CHECK(count == 100);
    for (std::size_t i = 0; i < a.entries.size(); i += 37) {
      CHECK(file_bytes(a.resolve(a.entries[i])) == file_bytes(b.resolve(b.entries[i])));
    }
  }

  TEST_CASE("imbalance shrinks later classes") {
    TempDir dir("syn");
    SynthConfig cfg;
    cfg.classes = {Layout::Letter, Layout::Memo, Layout::Form};
    cfg.per_class = 20;
    cfg.height = cfg.width = 32;
    cfg.imbalance = 0.5;
    const Manifest m = generate_synthetic(cfg, dir.path());
    std::map<int, std::size_t> per;
    for (const auto& e : m.entries) ++per[e.label];
    CHECK(per[0] == 20);
    CHECK(per[1] == 15);
    CHECK(per[2] == 10);
  }

  TEST_CASE("invalid synth configurations") {
    SynthConfig cfg;
    cfg.classes = {Layout::Letter};
    cfg.height = 31;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg.height = 64;
    cfg.per_class = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg.per_class = 1;
    cfg.noise = 1.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    CHECK_THROWS_AS(layout_from_name("poster"), InvalidArgument);
    for (Layout l : all_layouts()) CHECK(layout_from_name(layout_name(l)) == l);
  }

  TEST_CASE("letter headers carry more ink than form headers") {
    double letter = 0, form = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto hl = region_crop(to_frame(render_document(Layout::Letter, 260, 200, 0.3, s)), Region::Header);
      const auto hf = region_crop(to_frame(render_document(Layout::Form, 260, 200, 0.3, s)), Region::Header);
      letter += 1.0 - hl.mean();
      form += 1.0 - hf.mean();
    }
    CHECK(letter > form);
  }

  TEST_CASE("a linear classifier on 32x32 downsamples separates six layouts") {
    const std::vector<Layout> classes = {Layout::Letter, Layout::Memo, Layout::Form,
                                         Layout::News,   Layout::Email, Layout::Ad};
    auto make = [&](std::size_t per_class, std::uint64_t base) {
      ImageSet s;
      s.images = Tensor32({per_class * classes.size(), 1, 32, 32});
      std::size_t i = 0;
      for (std::size_t k = 0; k < per_class; ++k)
        for (std::size_t c = 0; c < classes.size(); ++c, ++i) {
          const auto img = resize_antialiased(render_document(classes[c], 130, 100, 0.3, base + i), 32, 32);
          write_network_input(img, s.images.slice0(i));
          s.labels.push_back(static_cast<int>(c));
        }
      return s;
    };
    const ImageSet tr = make(30, 1000), te = make(15, 5000);
    TrainConfig cfg;
    cfg.max_epochs = 30;
    cfg.patience = 30;
    cfg.batch_size = 16;
    const auto res = train(init_network(parse_arch("32x32-N", 6), RandomInit{1}), tr, tr, cfg);
    CHECK(accuracy(res.net, te) > 0.6);
  }
}
