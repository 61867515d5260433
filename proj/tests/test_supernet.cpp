// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "ppgnas/error.hpp"
#include "ppgnas/ops.hpp"
#include "ppgnas/supernet.hpp"
#include "support.hpp"

using namespace ppgnas;
using namespace testsupport;

namespace {

Graph single_conv(std::size_t ci, std::size_t co, std::size_t stride) {
  Graph g({ci, 16}, OutputArity::kSeries);
  g.add(LayerSpec::conv1d(ci, co, 3, stride, 1), {kGraphInput});
  return g;
}

void set_theta(ChoiceBlock& b, std::vector<float> v) { std::copy(v.begin(), v.end(), b.theta.data().begin()); }

}  // namespace

TEST_CASE("choice block alternatives follow shape legality") {
  auto a = expand_to_supernet(single_conv(8, 8, 1), 0);
  REQUIRE(a.blocks().size() == 1);
  CHECK(a.blocks()[0].alternatives.size() == 3);
  CHECK(a.blocks()[0].has_identity());
  auto b = expand_to_supernet(single_conv(4, 8, 2), 0);
  CHECK(b.blocks()[0].alternatives.size() == 2);
  CHECK_FALSE(b.blocks()[0].has_identity());
  Graph none({1, 8}, OutputArity::kSeries);
  none.add(LayerSpec::relu(), {kGraphInput});
  CHECK_THROWS_AS(expand_to_supernet(none, 0), Error);
}

TEST_CASE("expand then discretize on C reproduces the seed") {
  ResNetConfig c;
  c.blocks = 1;
  c.stages = 2;
  c.base_channels = 3;
  c.input_len = 32;
  Model seed = Model::initialize(build_resnet1d(c), 5);
  auto sn = expand_to_supernet(seed, 9);
  for (auto& b : sn.blocks()) {
    std::vector<float> th(b.alternatives.size(), 0.0f);
    th[0] = 1e4f;
    set_theta(b, th);
  }
  Model child = discretize(sn);
  const Graph& g0 = seed.graph();
  const Graph& g1 = child.graph();
  REQUIRE(g0.size() == g1.size());
  for (std::size_t i = 0; i < g0.size(); ++i) {
    CHECK(g0.nodes()[i].spec == g1.nodes()[i].spec);
    CHECK(g0.nodes()[i].inputs == g1.nodes()[i].inputs);
    const auto& p0 = seed.params()[i].tensors;
    const auto& p1 = child.params()[i].tensors;
    REQUIRE(p0.size() == p1.size());
    for (std::size_t t = 0; t < p0.size(); ++t)
      CHECK(std::equal(p0[t].data().begin(), p0[t].data().end(), p1[t].data().begin()));
  }
}

TEST_CASE("mixture forward: uniform, saturated and gradient") {
  std::mt19937_64 rng(3);
  std::vector<LayerSpec> alts = {LayerSpec::conv1d(3, 3, 3, 1, 1), LayerSpec::dw_block(3, 3, 3, 1, 1),
                                 LayerSpec::identity()};
  std::vector<LayerParams> params;
  for (const auto& a : alts) params.push_back(init_layer_params(a, rng));
  auto x = Tensor::from({2, 3, 10}, randnf(rng, 60));
  std::vector<Tensor> ys;
  for (std::size_t i = 0; i < alts.size(); ++i) ys.push_back(forward_layer(alts[i], params[i], {x}, false));

  auto theta = Tensor::from({3}, {0, 0, 0});
  auto y = mixture_forward<float>(alts, params, nullptr, theta, x, false);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(std::fabs(y.data()[i] - (ys[0].data()[i] + ys[1].data()[i] + ys[2].data()[i]) / 3.0) < 1e-5);

  theta = Tensor::from({3}, {50, 0, 0});
  y = mixture_forward<float>(alts, params, nullptr, theta, x, false);
  for (std::size_t i = 0; i < y.numel(); ++i)
    CHECK(std::fabs(y.data()[i] - ys[0].data()[i]) <= 1e-6 * std::max(1.0f, std::fabs(ys[0].data()[i])));

  for (int inst = 0; inst < 20; ++inst) {
    std::vector<BasicLayerParams<double>> p64;
    for (const auto& p : params) p64.push_back(convert_params<double>(p, true));
    auto th = leaf64(rng, {3});
    auto x64 = leaf64(rng, {1, 3, 6});
    auto target = Tensor64::from({1, 3, 6}, randn(rng, 18));
    const double err = grad_check({th, x64, p64[0].tensors[0], p64[1].tensors[0]}, [&](const std::vector<Tensor64>& v) {
      p64[0].tensors[0] = v[2];
      p64[1].tensors[0] = v[3];
      return ops::mse(mixture_forward<double>(alts, p64, nullptr, v[0], v[1], false), target);
    });
    CHECK(err < 1e-3);
  }
}

TEST_CASE("expected cost over one block") {
  Graph base({4, 16}, OutputArity::kSeries);
  base.add(LayerSpec::conv1d(4, 8, 3, 1, 1), {kGraphInput});
  ChoiceBlock b;
  b.node = 0;
  b.alternatives = {LayerSpec::conv1d(4, 8, 3, 1, 1), LayerSpec::dw_block(4, 8, 3, 1, 1), LayerSpec::identity()};
  b.theta = Tensor::zeros({3}, true);
  CHECK(b.costs() == std::vector<std::size_t>{104, 56, 0});
  SuperNet sn(base, {LayerParams{}}, {b});
  CHECK(std::fabs(expected_cost(sn).item() - 160.0 / 3.0) < 1e-4);
  set_theta(sn.blocks()[0], {0, 1e4f, 0});
  CHECK(expected_cost(sn).item() == 56.0f);
}

TEST_CASE("nas loss arithmetic") {
  auto pred = Tensor64::from({2}, {1.0, 2.0});
  auto target = Tensor64::from({2}, {0.0, 3.0});  // MSE = 1
  auto r = Tensor64::scalar(160.0 / 3.0);
  CHECK(nas_loss(pred, target, r, 0.0).item() == ops::mse(pred, target).item());
  auto p2 = Tensor64::from({2}, {0.0, 1.0});  // MSE 0.5 against (1, 1)
  auto t2 = Tensor64::from({2}, {1.0, 1.0});
  CHECK(std::fabs(nas_loss(p2, t2, r, 1e-9).item() - (0.5 + 5.3333333e-8)) < 1e-14);
  CHECK(std::fabs(nas_loss(t2, t2, r, 1e-7).item() - 1e-7 * 160.0 / 3.0) < 1e-18);
  CHECK_THROWS_AS(nas_loss(p2, t2, r, -1.0), Error);
}

TEST_CASE("discretization selection and tie-break") {
  auto sn = expand_to_supernet(single_conv(8, 8, 1), 0);
  auto& b = sn.blocks()[0];
  set_theta(b, {0.1f, 2.0f, -1.0f});
  CHECK(selected_alternative(b) == 1);
  set_theta(b, {1.0f, 1.0f, 1.0f});
  CHECK(selected_alternative(b) == 2);
  set_theta(b, {1.0f, 1.0f, 0.0f});
  CHECK(selected_alternative(b) == 1);
}

TEST_CASE("expected cost at one-hot theta equals the child's parameter count") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 30; ++i) {
    const Graph g = random_graph(rng, i % 2 == 0);
    if (std::none_of(g.nodes().begin(), g.nodes().end(), [](const auto& n) { return n.spec.kind == LayerKind::kConv1d; })) {
      CHECK_THROWS_AS(expand_to_supernet(g, 0), Error);
      continue;
    }
    auto sn = expand_to_supernet(g, static_cast<std::uint64_t>(i));
    for (auto& b : sn.blocks()) {
      std::vector<float> th(b.alternatives.size(), 0.0f);
      th[uniform(rng, 0, th.size() - 1)] = 1e4f;
      set_theta(b, th);
    }
    Model child = discretize(sn);
    CHECK(static_cast<double>(expected_cost(sn).item()) == static_cast<double>(param_count(child.graph())));
    CHECK(param_count(child.graph()) == enumerate_params(child.parameters()));
  }
}

TEST_CASE("identity selection splices the block and its BatchNorm") {
  Graph g({4, 16}, OutputArity::kSeries);
  int x = g.add(LayerSpec::conv1d(4, 4, 3, 1, 1), {kGraphInput});
  x = g.add(LayerSpec::relu(), {x});
  x = g.add(LayerSpec::conv1d(4, 4, 3, 1, 1), {x});
  x = g.add(LayerSpec::batch_norm(4), {x});
  x = g.add(LayerSpec::relu(), {x});
  g.add(LayerSpec::conv1d(4, 1, 1), {x});
  auto sn = expand_to_supernet(g, 1);
  REQUIRE(sn.blocks().size() == 3);
  set_theta(sn.blocks()[0], {1e4f, 0, 0});
  set_theta(sn.blocks()[1], {0, 0, 1e4f});
  set_theta(sn.blocks()[2], {1e4f, 0});
  Model child = discretize(sn);
  // conv, relu, conv: the second ReLU would consume the first and is dropped too.
  std::size_t relus = 0, bns = 0;
  for (const auto& n : child.graph().nodes()) {
    relus += n.spec.kind == LayerKind::kReLU;
    bns += n.spec.kind == LayerKind::kBatchNorm;
  }
  CHECK(relus == 1);
  CHECK(bns == 0);
  CHECK(child.graph().size() == 3);
}

TEST_CASE("pareto front examples and grid") {
  CHECK(pareto_front({{100, 10}, {200, 9}, {300, 9.5}}) == std::vector<std::size_t>{0, 1});
  CHECK(pareto_front({{5, 5}}) == std::vector<std::size_t>{0});
  const auto grid = default_lambda_grid();
  REQUIRE(grid.size() == 18);
  CHECK(std::fabs(grid.front() - 1e-11) < 1e-20);
  CHECK(std::fabs(grid.back() - 1e-7) < 1e-16);
  for (std::size_t i = 2; i < grid.size(); ++i)
    CHECK(std::fabs(grid[i] / grid[i - 1] - grid[1] / grid[0]) < 1e-9);
}

TEST_CASE("training with frozen theta never changes theta; lambda=1 picks minimum cost") {
  ResNetConfig c;
  c.blocks = 1;
  c.stages = 2;
  c.base_channels = 4;
  c.input_len = 32;
  std::mt19937_64 rng(4);
  TensorDataset d;
  d.count = 64;
  d.in_len = 32;
  d.inputs = randnf(rng, 64 * 32);
  d.targets = randnf(rng, 64);
  Model seed = Model::initialize(build_resnet1d(c), 2);

  auto frozen = expand_to_supernet(seed, 1);
  NasConfig nc;
  nc.epochs = 2;
  nc.batch_size = 16;
  nc.train_theta = false;
  train_supernet(frozen, d, d, nc);
  for (const auto& b : frozen.blocks())
    for (float v : b.theta.data()) CHECK(v == 0.0f);

  auto heavy = expand_to_supernet(seed, 1);
  nc.train_theta = true;
  nc.lambda = 1.0;
  nc.epochs = 5;
  train_supernet(heavy, d, d, nc);
  for (const auto& b : heavy.blocks()) {
    const auto costs = b.costs();
    CHECK(costs[selected_alternative(b)] == *std::min_element(costs.begin(), costs.end()));
  }
}
