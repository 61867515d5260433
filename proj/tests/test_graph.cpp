// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ppgnas/error.hpp"
#include "ppgnas/model.hpp"
#include "support.hpp"

using namespace ppgnas;
using namespace testsupport;

TEST_CASE("per-layer parameter counts") {
  CHECK(param_count(LayerSpec::conv1d(4, 8, 3)) == 104);
  CHECK(param_count(LayerSpec::dw_block(4, 8, 3)) == 56);
  CHECK(param_count(LayerSpec::identity()) == 0);
  CHECK(param_count(LayerSpec::conv1d(4, 8, 3, 1, 0, false)) == 96);
  CHECK(param_count(LayerSpec::batch_norm(5)) == 10);
  CHECK(param_count(LayerSpec::linear(7, 1)) == 8);
}

TEST_CASE("default resnet profile is about 792k parameters") {
  const Graph g = build_resnet1d(ResNetConfig{});
  const double n = static_cast<double>(param_count(g));
  CHECK(n >= 792e3 * 0.95);
  CHECK(n <= 792e3 * 1.05);
  CHECK(g.output_shape() == FeatureShape{1, 1});
}

TEST_CASE("small resnet count equals the closed-form sum") {
  ResNetConfig c;
  c.blocks = 1;
  c.base_channels = 4;
  c.input_len = 64;
  // stem conv + BN, then per stage conv-BN-conv-BN (+ 1x1 projection + BN), linear head.
  std::size_t expect = (1 * 4 * 7 + 4) + 2 * 4;
  std::size_t cin = 4;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t ch = 4u << s;
    expect += (cin * ch * 3 + ch) + 2 * ch + (ch * ch * 3 + ch) + 2 * ch;
    if (cin != ch || s > 0) expect += (cin * ch + ch) + 2 * ch;
    cin = ch;
  }
  expect += cin + 1;
  const Graph g = build_resnet1d(c);
  CHECK(param_count(g) == expect);
  Model m = Model::initialize(g, 0);
  CHECK(enumerate_params(m.parameters()) == expect);
}

TEST_CASE("resnet output is one scalar per window") {
  for (std::size_t len : {32u, 63u, 250u}) {
    ResNetConfig c;
    c.blocks = 1;
    c.base_channels = 2;
    c.stages = 2;
    c.input_len = len;
    Model m = Model::initialize(build_resnet1d(c), 1);
    std::mt19937_64 rng(len);
    auto y = m.forward(Tensor::from({3, 1, len}, randnf(rng, 3 * len)), false);
    CHECK(y.shape() == Shape{3, 1, 1});
  }
}

TEST_CASE("default unet profile is about 29.7k parameters") {
  const Graph g = build_unet1d(UNetConfig{});
  const double n = static_cast<double>(param_count(g));
  CHECK(n >= 29.7e3 * 0.95);
  CHECK(n <= 29.7e3 * 1.05);
  CHECK(g.output_shape() == FeatureShape{1, 624});
}

TEST_CASE("small unet output shape") {
  UNetConfig c;
  c.depth = 1;
  c.base_channels = 2;
  c.input_len = 8;
  Model m = Model::initialize(build_unet1d(c), 2);
  auto y = m.forward(Tensor::from({2, 1, 8}, std::vector<float>(16, 0.5f)), false);
  CHECK(y.shape() == Shape{2, 1, 8});
}

TEST_CASE("unet encoder level lengths halve") {
  UNetConfig c;
  c.depth = 3;
  c.base_channels = 2;
  c.input_len = 64;
  const Graph g = build_unet1d(c);
  std::size_t level = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& n = g.nodes()[i];
    if (n.spec.kind == LayerKind::kMaxPool) {
      CHECK(g.shape_of(n.inputs[0]).length == 64u >> level);
      ++level;
      CHECK(n.out_shape.length == 64u >> level);
    }
  }
  CHECK(level == 3);
  c.input_len = 60;
  CHECK_THROWS_AS(build_unet1d(c), Error);
}

TEST_CASE("mac count of a single conv") {
  Graph g({1, 12}, OutputArity::kSeries);
  g.add(LayerSpec::conv1d(1, 1, 3, 1, 0, false), {kGraphInput});
  CHECK(g.output_shape().length == 10);
  CHECK(mac_count(g) == 30);
}

TEST_CASE("graph rejects inconsistent layers") {
  Graph g({2, 16}, OutputArity::kSeries);
  CHECK_THROWS_AS(g.add(LayerSpec::conv1d(3, 4, 3), {kGraphInput}), Error);
  CHECK_THROWS_AS(g.add(LayerSpec::conv1d(2, 4, 32), {kGraphInput}), Error);
  CHECK_THROWS_AS(g.add(LayerSpec::relu(), {5}), Error);
}

TEST_CASE("random graphs: param_count equals tensor enumeration") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const Graph g = random_graph(rng, i % 2 == 0);
    Model m = Model::initialize(g, static_cast<std::uint64_t>(i));
    CHECK(param_count(g) == enumerate_params(m.parameters()));
  }
}
