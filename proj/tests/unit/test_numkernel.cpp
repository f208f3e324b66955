#include <doctest.h>

#include <cmath>

#include "docstyle/error.hpp"
#include "docstyle/layers.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace docstyle;
using docstyle::testing::check_layer;
using docstyle::testing::check_softmax_xent;
using docstyle::testing::random_case;

TEST_SUITE("numkernel") {
  TEST_CASE("tensor rejects empty shapes and zero extents") {
    CHECK_THROWS_AS(Tensor32(Shape{}), ShapeError);
    CHECK_THROWS_AS(Tensor32(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor32(Shape{2, 2}, std::vector<float>(3)), ShapeError);
    Tensor32 t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.stride0() == 12);
  }

  TEST_CASE("relu forward and backward on [-1, 0, 2]") {
    Tensor64 x({1, 3}, std::vector<double>{-1, 0, 2});
    auto out = apply_layer<double>(Relu{}, {}, x, Mode::Infer, 0);
    CHECK(out.output.storage() == std::vector<double>{0, 0, 2});
    Tensor64 up({1, 3}, std::vector<double>{1, 1, 1});
    auto g = backprop_layer<double>(Relu{}, {}, out.cache, up);
    CHECK(g.input.storage() == std::vector<double>{0, 0, 1});
  }

  TEST_CASE("1x1 conv with unit weight is the identity") {
    Rng rng(3);
    Tensor64 x({2, 1, 5, 4});
    for (auto& v : x.data()) v = rng.uniform();
    std::vector<Tensor64> params{Tensor64({1, 1, 1, 1}, 1.0), Tensor64({1}, 0.0)};
    auto out = apply_layer<double>(Conv{1, 1, 1, 1, 0}, params, x, Mode::Infer, 0);
    CHECK(out.output == x);
  }

  TEST_CASE("dropout with rate 0 keeps everything in train mode") {
    Tensor64 x({1, 8}, 0.5);
    auto out = apply_layer<double>(Dropout{0.0}, {}, x, Mode::Train, 9);
    CHECK(out.output == x);
    for (double m : out.cache.mask) CHECK(m == 1.0);
  }

  TEST_CASE("dropout is identity in infer mode and inverted in train mode") {
    const double p = 0.3;
    Tensor64 x({1, 20000}, 1.0);
    auto infer = apply_layer<double>(Dropout{p}, {}, x, Mode::Infer, 5);
    CHECK(infer.output == x);
    auto train = apply_layer<double>(Dropout{p}, {}, x, Mode::Train, 5);
    std::size_t zeros = 0;
    for (double v : train.output.data()) {
      if (v == 0.0) {
        ++zeros;
      } else {
        CHECK(v == doctest::Approx(1.0 / (1.0 - p)));
      }
    }
    const double frac = static_cast<double>(zeros) / 20000.0;
    // Binomial standard deviation is about 0.0032 here.
    CHECK(std::abs(frac - p) < 0.02);
  }

  TEST_CASE("conv output extent follows floor((in + 2 pad - k) / stride) + 1") {
    for (std::size_t in = 5; in < 12; ++in)
      for (std::size_t k = 1; k <= 4; ++k)
        for (std::size_t s = 1; s <= 3; ++s)
          for (std::size_t pad = 0; pad <= 2; ++pad) {
            const Shape out = layer_output_shape(Conv{k, k, 2, s, pad}, {1, in, in});
            CHECK(out[1] == (in + 2 * pad - k) / s + 1);
          }
    CHECK_THROWS_AS(layer_output_shape(Conv{9, 9, 1, 1, 0}, {1, 5, 5}), ShapeError);
  }

  TEST_CASE("max-pool ties go to the lowest flat index and gradients route to one input") {
    Tensor64 x({1, 1, 2, 2}, 1.0);
    auto out = apply_layer<double>(Pool{2, 2}, {}, x, Mode::Infer, 0);
    CHECK(out.cache.argmax[0] == 0);

    Rng rng(11);
    Tensor64 y({2, 3, 7, 7});
    for (auto& v : y.data()) v = rng.uniform();
    auto p = apply_layer<double>(Pool{3, 2}, {}, y, Mode::Infer, 0);
    Tensor64 up(p.output.shape());
    for (auto& v : up.data()) v = rng.uniform();
    auto g = backprop_layer<double>(Pool{3, 2}, {}, p.cache, up);
    double sum_in = 0, sum_up = 0;
    for (double v : g.input.data()) sum_in += v;
    for (double v : up.data()) sum_up += v;
    CHECK(sum_in == doctest::Approx(sum_up).epsilon(1e-12));
  }

  TEST_CASE("softmax cross-entropy closed forms") {
    Tensor64 equal({1, 4}, 0.7);
    std::vector<int> label{2};
    CHECK(softmax_xent<double>(equal, label).loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor64 saturated({1, 4}, std::vector<double>{0, 50, 0, 0});
    std::vector<int> one{1};
    CHECK(softmax_xent<double>(saturated, one).loss < 1e-9);

    std::vector<int> bad{4};
    CHECK_THROWS_AS(softmax_xent<double>(equal, bad), InvalidArgument);
  }

  TEST_CASE("softmax rows lie on the probability simplex") {
    Rng rng(2);
    Tensor64 logits({6, 9});
    for (auto& v : logits.data()) v = rng.uniform(-40, 40);
    const auto p = softmax_rows(logits);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 9; ++j) {
        CHECK(p[i * 9 + j] >= 0.0);
        s += p[i * 9 + j];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    Rng rng(17);
    const auto r = check_softmax_xent(3, 5, rng);
    CHECK(r.max_rel_error < 1e-6);
  }

  TEST_CASE("analytic layer gradients match finite differences on random shapes") {
    Rng rng(23);
    for (std::size_t kind = 0; kind < docstyle::testing::kLayerKinds; ++kind) {
      for (int rep = 0; rep < 5; ++rep) {
        auto [layer, shape] = random_case(kind, rng);
        const auto r = check_layer(layer, shape, rng, 1000 + rep);
        INFO(r.label);
        CHECK(r.max_rel_error < 1e-4);
      }
    }
  }

  TEST_CASE("3x3 conv and dense gradients on fixed small shapes") {
    Rng rng(4);
    CHECK(check_layer(Conv{3, 3, 1, 1, 0}, {1, 1, 5, 5}, rng, 0).max_rel_error < 1e-4);
    CHECK(check_layer(FullyConnected{3}, {1, 4}, rng, 0).max_rel_error < 1e-4);
  }

  TEST_CASE("sgd update recurrences") {
    SgdState<double> plain{0.1, 0.0, 0.0, {}};
    std::vector<Tensor64> p{Tensor64({1}, 0.0)};
    std::vector<Tensor64> g{Tensor64({1}, 1.0)};
    sgd_update<double>(p, g, plain);
    CHECK(p[0][0] == doctest::Approx(-0.1).epsilon(1e-15));

    SgdState<double> mom{0.1, 0.9, 0.0, {}};
    p[0][0] = 0.0;
    sgd_update<double>(p, g, mom);
    sgd_update<double>(p, g, mom);
    CHECK(p[0][0] == doctest::Approx(-0.29).epsilon(1e-14));

    SgdState<double> decay{0.1, 0.0, 0.5, {}};
    std::vector<Tensor64> q{Tensor64({2}, std::vector<double>{2.0, -3.0})};
    std::vector<Tensor64> zero{Tensor64({2}, 0.0)};
    double before = std::abs(q[0][0]) + std::abs(q[0][1]);
    for (int i = 0; i < 3; ++i) {
      sgd_update<double>(q, zero, decay);
      const double after = std::abs(q[0][0]) + std::abs(q[0][1]);
      CHECK(after < before);
      before = after;
    }

    std::vector<Tensor64> wrong{Tensor64({3}, 0.0)};
    CHECK_THROWS_AS(sgd_update<double>(q, wrong, decay), ShapeError);
  }

  TEST_CASE("forward passes are pure") {
    Rng rng(8);
    Tensor32 x({2, 2, 6, 6});
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
    std::vector<Tensor32> params{Tensor32({3, 2, 3, 3}, 0.1f), Tensor32({3}, 0.0f)};
    const auto a = apply_layer<float>(Conv{3, 3, 3, 1, 1}, params, x, Mode::Train, 1);
    const auto b = apply_layer<float>(Conv{3, 3, 3, 1, 1}, params, x, Mode::Train, 1);
    CHECK(a.output == b.output);
    const auto d1 = apply_layer<float>(Dropout{0.5}, {}, x, Mode::Train, 77);
    const auto d2 = apply_layer<float>(Dropout{0.5}, {}, x, Mode::Train, 77);
    CHECK(d1.output == d2.output);
  }

  TEST_CASE("shape mismatches are reported") {
    Tensor64 x({1, 1, 4, 4});
    std::vector<Tensor64> wrong{Tensor64({2, 2, 3, 3}), Tensor64({2})};
    CHECK_THROWS_AS(apply_layer<double>(Conv{3, 3, 2, 1, 0}, wrong, x, Mode::Infer, 0), ShapeError);
    auto ok = apply_layer<double>(Relu{}, {}, x, Mode::Infer, 0);
    Tensor64 bad_up({1, 1, 3, 3});
    CHECK_THROWS_AS(backprop_layer<double>(Relu{}, {}, ok.cache, bad_up), ShapeError);
  }
}
