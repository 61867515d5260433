// SPDX-License-Identifier: Apache-2.0
#include "ppgnas/supernet.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <limits>
#include <numeric>

#include "ppgnas/adam.hpp"
#include "ppgnas/ops.hpp"

namespace ppgnas {

std::vector<std::size_t> ChoiceBlock::costs() const {
  std::vector<std::size_t> out;
  for (const auto& alt : alternatives) {
    std::size_t c = param_count(alt);
    if (companion_bn >= 0 && alt.kind != LayerKind::kIdentity) c += param_count(LayerSpec::batch_norm(alt.c_out));
    out.push_back(c);
  }
  return out;
}

bool ChoiceBlock::has_identity() const {
  return std::any_of(alternatives.begin(), alternatives.end(),
                     [](const LayerSpec& s) { return s.kind == LayerKind::kIdentity; });
}

SuperNet::SuperNet(Graph base, std::vector<LayerParams> fixed, std::vector<ChoiceBlock> blocks)
    : base_(std::move(base)), fixed_(std::move(fixed)), blocks_(std::move(blocks)), owner_(base_.size(), -1) {
  if (fixed_.size() != base_.size()) fail(ErrorKind::kShape, "supernet parameter list does not match graph size");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    owner_.at(static_cast<std::size_t>(blocks_[b].node)) = static_cast<int>(b);
    if (blocks_[b].companion_bn >= 0) owner_.at(static_cast<std::size_t>(blocks_[b].companion_bn)) = static_cast<int>(b);
  }
}

namespace {

int exclusive_batch_norm(const Graph& g, int id) {
  if (g.consumer_count(id) != 1) return -1;
  for (std::size_t j = static_cast<std::size_t>(id) + 1; j < g.size(); ++j) {
    const auto& n = g.nodes()[j];
    if (n.inputs.size() == 1 && n.inputs[0] == id) {
      return n.spec.kind == LayerKind::kBatchNorm ? static_cast<int>(j) : -1;
    }
  }
  return -1;
}

SuperNet expand_impl(const Graph& seed, const Model* weights, std::uint64_t init_seed) {
  std::mt19937_64 rng(init_seed);
  std::vector<LayerParams> fixed(seed.size());
  std::vector<ChoiceBlock> blocks;
  std::vector<bool> absorbed(seed.size(), false);
  for (std::size_t i = 0; i < seed.size(); ++i) {
    const auto& node = seed.nodes()[i];
    if (absorbed[i]) continue;
    if (node.spec.kind != LayerKind::kConv1d) {
      fixed[i] = weights ? clone_params(weights->params()[i]) : init_layer_params(node.spec, rng);
      continue;
    }
    const auto& s = node.spec;
    ChoiceBlock block;
    block.node = static_cast<int>(i);
    block.companion_bn = exclusive_batch_norm(seed, static_cast<int>(i));
    block.alternatives.push_back(s);
    block.alternatives.push_back(LayerSpec::dw_block(s.c_in, s.c_out, s.kernel, s.stride, s.padding, s.has_bias));
    if (seed.shape_of(node.inputs[0]) == node.out_shape) block.alternatives.push_back(LayerSpec::identity());
    for (const auto& alt : block.alternatives) {
      if (alt.kind == LayerKind::kIdentity) {
        block.alt_params.emplace_back();
        block.alt_bn.emplace_back();
        continue;
      }
      const bool inherit = weights && alt.kind == LayerKind::kConv1d;
      block.alt_params.push_back(inherit ? clone_params(weights->params()[i]) : init_layer_params(alt, rng));
      if (block.companion_bn >= 0) {
        const auto bn = static_cast<std::size_t>(block.companion_bn);
        block.alt_bn.push_back(inherit ? clone_params(weights->params()[bn])
                                       : init_layer_params(LayerSpec::batch_norm(alt.c_out), rng));
      } else {
        block.alt_bn.emplace_back();
      }
    }
    if (block.companion_bn >= 0) absorbed[static_cast<std::size_t>(block.companion_bn)] = true;
    block.theta = Tensor::zeros({block.alternatives.size()}, true);
    blocks.push_back(std::move(block));
  }
  if (blocks.empty()) fail(ErrorKind::kInvalidArgument, "seed graph has no Conv1d layer to search over");
  return SuperNet(seed, std::move(fixed), std::move(blocks));
}

}  // namespace

SuperNet expand_to_supernet(const Graph& seed, std::uint64_t init_seed) { return expand_impl(seed, nullptr, init_seed); }

SuperNet expand_to_supernet(const Model& seed, std::uint64_t init_seed) {
  return expand_impl(seed.graph(), &seed, init_seed);
}

template <typename T>
BasicTensor<T> mixture_forward(const std::vector<LayerSpec>& alternatives, std::vector<BasicLayerParams<T>>& alt_params,
                               std::vector<BasicLayerParams<T>>* alt_bn, const BasicTensor<T>& theta,
                               const BasicTensor<T>& x, bool training) {
  if (theta.numel() != alternatives.size() || alt_params.size() != alternatives.size()) {
    fail(ErrorKind::kShape, "mixture: theta / alternative count mismatch");
  }
  std::vector<BasicTensor<T>> outs;
  outs.reserve(alternatives.size());
  for (std::size_t i = 0; i < alternatives.size(); ++i) {
    const auto& alt = alternatives[i];
    if (alt.kind == LayerKind::kIdentity) {
      outs.push_back(x);
      continue;
    }
    if (x.ndim() != 3 || x.dim(1) != alt.c_in) {
      fail(ErrorKind::kShape, "mixture: input " + shape_str(x.shape()) + " does not match alternative with " +
                                  std::to_string(alt.c_in) + " input channels");
    }
    auto y = forward_layer(alt, alt_params[i], {x}, training);
    if (alt_bn && !(*alt_bn)[i].tensors.empty()) {
      y = forward_layer(LayerSpec::batch_norm(alt.c_out), (*alt_bn)[i], {y}, training);
    }
    outs.push_back(std::move(y));
  }
  return ops::weighted_sum(outs, ops::softmax(theta));
}

template Tensor mixture_forward<float>(const std::vector<LayerSpec>&, std::vector<LayerParams>&,
                                       std::vector<LayerParams>*, const Tensor&, const Tensor&, bool);
template Tensor64 mixture_forward<double>(const std::vector<LayerSpec>&, std::vector<BasicLayerParams<double>>&,
                                          std::vector<BasicLayerParams<double>>*, const Tensor64&, const Tensor64&,
                                          bool);

Tensor mixture_forward(ChoiceBlock& block, const Tensor& x, bool training) {
  return mixture_forward(block.alternatives, block.alt_params, &block.alt_bn, block.theta, x, training);
}

Tensor SuperNet::forward(const Tensor& x, bool training) {
  const auto in = base_.input_shape();
  if (x.ndim() != 3 || x.dim(1) != in.channels || x.dim(2) != in.length) {
    fail(ErrorKind::kShape, "supernet input " + shape_str(x.shape()) + " does not match graph input");
  }
  std::vector<Tensor> values(base_.size());
  std::vector<Tensor> inputs;
  for (std::size_t i = 0; i < base_.size(); ++i) {
    const auto& node = base_.nodes()[i];
    inputs.clear();
    for (int id : node.inputs) inputs.push_back(id == kGraphInput ? x : values[static_cast<std::size_t>(id)]);
    const int owner = owner_[i];
    if (owner >= 0) {
      auto& block = blocks_[static_cast<std::size_t>(owner)];
      values[i] = block.node == static_cast<int>(i) ? mixture_forward(block, inputs[0], training) : inputs[0];
    } else {
      values[i] = forward_layer(node.spec, fixed_[i], inputs, training);
    }
  }
  return values.back();
}

std::size_t SuperNet::fixed_cost() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < base_.size(); ++i)
    if (owner_[i] < 0) total += param_count(base_.nodes()[i].spec);
  return total;
}

std::vector<Tensor> SuperNet::weight_parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : fixed_)
    for (const auto& t : p.tensors) out.push_back(t);
  for (const auto& b : blocks_) {
    for (const auto& p : b.alt_params)
      for (const auto& t : p.tensors) out.push_back(t);
    for (const auto& p : b.alt_bn)
      for (const auto& t : p.tensors) out.push_back(t);
  }
  return out;
}

std::vector<Tensor> SuperNet::arch_parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks_) out.push_back(b.theta);
  return out;
}

Tensor expected_cost(const SuperNet& sn) {
  Tensor total;
  for (const auto& b : sn.blocks()) {
    const auto costs = b.costs();
    std::vector<float> c(costs.begin(), costs.end());
    auto term = ops::dot_const(ops::softmax(b.theta), std::span<const float>(c));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::add_scalar(total, static_cast<float>(sn.fixed_cost()));
}

template <typename T>
BasicTensor<T> nas_loss_impl(const BasicTensor<T>& pred, const BasicTensor<T>& target, const BasicTensor<T>& cost,
                             double lambda) {
  if (!(lambda >= 0.0)) fail(ErrorKind::kInvalidArgument, "lambda must be non-negative");
  if (pred.numel() != target.numel()) {
    fail(ErrorKind::kShape, "nas_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                                shape_str(target.shape()));
  }
  auto task = ops::mse(ops::reshape(pred, target.shape()), target);
  if (lambda == 0.0) return task;
  return ops::add(task, ops::scale(cost, static_cast<T>(lambda)));
}

Tensor nas_loss(const Tensor& pred, const Tensor& target, const Tensor& cost, double lambda) {
  return nas_loss_impl(pred, target, cost, lambda);
}

Tensor64 nas_loss(const Tensor64& pred, const Tensor64& target, const Tensor64& cost, double lambda) {
  return nas_loss_impl(pred, target, cost, lambda);
}

std::vector<EpochStats> train_supernet(SuperNet& sn, const TensorDataset& train, const TensorDataset& val,
                                       const NasConfig& cfg) {
  if (!(cfg.lambda >= 0.0)) fail(ErrorKind::kInvalidArgument, "lambda must be non-negative");
  if (train.count == 0 || val.count == 0) fail(ErrorKind::kInvalidArgument, "NAS needs non-empty train and validation splits");
  auto weights = sn.weight_parameters();
  auto thetas = sn.arch_parameters();
  Adam w_opt(weights, cfg.lr_weights);
  Adam t_opt(thetas, cfg.lr_theta);
  auto set_phase = [&](bool train_weights) {
    for (auto& w : weights) w.set_requires_grad(train_weights);
    for (auto& t : thetas) t.set_requires_grad(!train_weights && cfg.train_theta);
  };

  std::vector<EpochStats> log;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    EpochStats st;
    st.epoch = e;
    set_phase(true);
    st.train_loss = run_epoch(train, cfg.batch_size, cfg.seed + 2 * e, [&](const Tensor& x, const Tensor& y) {
      w_opt.zero_grad();
      auto loss = ops::mse(ops::reshape(sn.forward(x, true), y.shape()), y);
      const double v = loss.item();
      backward(loss);
      w_opt.step();
      return v;
    });
    if (cfg.train_theta) {
      set_phase(false);
      st.val_loss = run_epoch(val, cfg.batch_size, cfg.seed + 2 * e + 1, [&](const Tensor& x, const Tensor& y) {
        t_opt.zero_grad();
        auto pred = sn.forward(x, true);
        auto loss = nas_loss(pred, y, expected_cost(sn), cfg.lambda);
        const double v = loss.item();
        backward(loss);
        t_opt.step();
        return v;
      });
    }
    {
      NoGradGuard no_grad;
      st.cost = expected_cost(sn).item();
    }
    log.push_back(st);
  }
  for (auto& w : weights) w.set_requires_grad(true);
  for (auto& t : thetas) t.set_requires_grad(true);
  return log;
}

std::size_t selected_alternative(const ChoiceBlock& block) {
  const auto costs = block.costs();
  const auto th = block.theta.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < th.size(); ++i) {
    if (th[i] > th[best] || (th[i] == th[best] && costs[i] < costs[best])) best = i;
  }
  return best;
}

Model discretize(const SuperNet& sn) {
  const Graph& base = sn.base();
  Graph g(base.input_shape(), base.arity());
  std::vector<LayerParams> params;
  std::vector<int> remap(base.size(), INT_MIN);
  auto map_in = [&](int id) { return id == kGraphInput ? kGraphInput : remap[static_cast<std::size_t>(id)]; };

  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto& node = base.nodes()[i];
    const int owner = sn.block_of(static_cast<int>(i));
    if (owner >= 0) {
      const auto& block = sn.blocks()[static_cast<std::size_t>(owner)];
      if (block.node != static_cast<int>(i)) continue;  // companion BN, emitted with its conv
      const std::size_t sel = selected_alternative(block);
      const auto& alt = block.alternatives[sel];
      const int in = map_in(node.inputs[0]);
      if (alt.kind == LayerKind::kIdentity) {
        remap[i] = in;
        if (block.companion_bn >= 0) remap[static_cast<std::size_t>(block.companion_bn)] = in;
        continue;
      }
      remap[i] = g.add(alt, {in});
      params.push_back(clone_params(block.alt_params[sel]));
      if (block.companion_bn >= 0) {
        const auto bn = static_cast<std::size_t>(block.companion_bn);
        remap[bn] = g.add(base.nodes()[bn].spec, {remap[i]});
        params.push_back(clone_params(block.alt_bn[sel]));
      }
      continue;
    }
    std::vector<int> ins;
    for (int id : node.inputs) ins.push_back(map_in(id));
    if (node.spec.kind == LayerKind::kReLU && ins[0] != kGraphInput &&
        g.node(ins[0]).spec.kind == LayerKind::kReLU) {
      remap[i] = ins[0];
      continue;
    }
    remap[i] = g.add(node.spec, ins);
    params.push_back(clone_params(sn.fixed_params()[i]));
  }
  const int out = remap.back();
  if (g.size() == 0 || out != g.output_node()) {
    g.add(LayerSpec::identity(), {out});
    params.emplace_back();
  }
  return Model(std::move(g), std::move(params));
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (count == 0) return {};
  if (!(lo > 0.0) || !(hi >= lo)) fail(ErrorKind::kInvalidArgument, "log grid needs 0 < lo <= hi");
  if (count == 1) return {lo};
  std::vector<double> out(count);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return out;
}

std::vector<double> default_lambda_grid() { return log_grid(1e-11, 1e-7, 18); }

std::vector<std::size_t> pareto_front(const std::vector<std::pair<double, double>>& pts) {
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pts[a] < pts[b] || (pts[a] == pts[b] && a < b);
  });
  std::vector<std::size_t> front;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && pts[order[j]].first == pts[order[i]].first) ++j;
    const double group_min = pts[order[i]].second;
    if (group_min < best) {
      for (std::size_t k = i; k < j && pts[order[k]].second == group_min; ++k) front.push_back(order[k]);
      best = group_min;
    }
    i = j;
  }
  std::sort(front.begin(), front.end());
  return front;
}

}  // namespace ppgnas
