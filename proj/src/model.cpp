// SPDX-License-Identifier: Apache-2.0
#include "model.hpp"

#include <algorithm>

#include "error.hpp"
#include "loss.hpp"
#include "rng.hpp"

namespace neurotrails {

std::string to_string(VoteMode m) {
  return m == VoteMode::logits ? "logits" : "probs";
}

VoteMode parse_vote_mode(const std::string &name) {
  if (name == "probs")
    return VoteMode::probs;
  if (name == "logits")
    return VoteMode::logits;
  fail("unknown vote mode '" + name + "' (expected probs, logits)");
}

void NetworkSpec::validate() const {
  if (blocks.empty())
    fail("network needs at least one block");
  if (input_shape.empty() || shape_size(input_shape) == 0)
    fail("network input_shape must be non-empty and positive");
  if (classes < 2)
    fail("network needs at least 2 classes, got " + std::to_string(classes));
  for (std::size_t b = 0; b < blocks.size(); ++b)
    if (blocks[b].empty())
      fail("block " + std::to_string(b) + " has no layers");
  if (classifier.empty())
    fail("network classifier has no layers");
  Shape s = input_shape;
  for (const auto &l : all_layers()) {
    l.validate();
    s = l.output_shape(s);
  }
  if (s != Shape{classes})
    fail("network output " + shape_str(s) + " does not match " +
         std::to_string(classes) + " classes");
}

std::vector<LayerSpec> NetworkSpec::backbone_layers(std::size_t split) const {
  std::vector<LayerSpec> out = stem;
  for (std::size_t b = 0; b < split && b < blocks.size(); ++b)
    out.insert(out.end(), blocks[b].begin(), blocks[b].end());
  return out;
}

std::vector<LayerSpec> NetworkSpec::head_layers(std::size_t split) const {
  std::vector<LayerSpec> out;
  for (std::size_t b = split; b < blocks.size(); ++b)
    out.insert(out.end(), blocks[b].begin(), blocks[b].end());
  out.insert(out.end(), classifier.begin(), classifier.end());
  return out;
}

std::vector<LayerSpec> NetworkSpec::all_layers() const {
  std::vector<LayerSpec> out = backbone_layers(blocks.size());
  out.insert(out.end(), classifier.begin(), classifier.end());
  return out;
}

NetworkSpec NetworkSpec::mlp(std::size_t input, std::size_t width,
                             std::size_t blocks, std::size_t classes) {
  NetworkSpec s;
  s.input_shape = {input};
  s.classes = classes;
  s.stem = {LayerSpec::linear(input, width), LayerSpec::relu()};
  for (std::size_t b = 0; b < blocks; ++b)
    s.blocks.push_back({LayerSpec::linear(width, width), LayerSpec::relu()});
  s.classifier = {LayerSpec::linear(width, classes)};
  return s;
}

std::vector<const Network *> TrailsModel::components() const {
  std::vector<const Network *> out{&backbone};
  for (const auto &h : heads)
    out.push_back(&h);
  return out;
}

std::vector<Network *> TrailsModel::components() {
  std::vector<Network *> out{&backbone};
  for (auto &h : heads)
    out.push_back(&h);
  return out;
}

std::string TrailsModel::component_name(std::size_t index) const {
  std::string prefix = "m" + std::to_string(member) + ".";
  return index == 0 ? prefix + "backbone"
                    : prefix + "head" + std::to_string(index - 1);
}

namespace {

bool has_maskable(const std::vector<LayerSpec> &layers) {
  return std::any_of(layers.begin(), layers.end(),
                     [](const LayerSpec &l) { return l.maskable(); });
}

Network build_component(const std::vector<LayerSpec> &layers,
                        const SparsityPlan &plan, std::uint64_t seed,
                        std::uint64_t component) {
  Rng rng = Rng::stream(seed, stream::weight_init, component);
  Network net = Network::init(layers, rng);
  if (plan.sizes.empty())
    return net;
  const std::vector<Mask> masks = init_masks(plan, MaskSeed{seed, component});
  for (std::size_t k = 0; k < plan.layer_index.size(); ++k) {
    MaskedTensor &w = net.layers()[plan.layer_index[k]].weight;
    w.mask = masks[k];
    w.apply_mask();
  }
  return net;
}

constexpr std::uint64_t kComponentsPerMember = 1u << 16;

} // namespace

TrailsModel build_trails(const NetworkSpec &spec, std::size_t split,
                         std::size_t heads, double sparsity,
                         Allocation allocation, const TrailsSeed &seed) {
  spec.validate();
  if (split > spec.depth())
    fail("split index " + std::to_string(split) + " out of range [0, " +
         std::to_string(spec.depth()) + "]");
  if (heads < 1)
    fail("need at least one head");
  if (heads >= kComponentsPerMember)
    fail("too many heads: " + std::to_string(heads));

  TrailsModel m;
  m.spec = spec;
  m.split = split;
  m.member = seed.member;
  const auto bb_layers = spec.backbone_layers(split);
  const auto head_layers = spec.head_layers(split);
  if (has_maskable(bb_layers))
    m.backbone_plan = allocate(bb_layers, sparsity, allocation);
  else
    m.backbone_plan.sparsity = sparsity;
  m.head_plan = allocate(head_layers, sparsity, allocation);

  const std::uint64_t base = seed.member * kComponentsPerMember;
  m.backbone = build_component(bb_layers, m.backbone_plan, seed.seed, base);
  for (std::size_t i = 0; i < heads; ++i)
    m.heads.push_back(
        build_component(head_layers, m.head_plan, seed.seed, base + 1 + i));
  return m;
}

std::vector<TrailsModel>
build_independent_ensemble(const NetworkSpec &spec, std::size_t members,
                           std::size_t split, double sparsity,
                           Allocation allocation, std::uint64_t seed) {
  if (members < 1)
    fail("ensemble needs at least one member");
  std::vector<TrailsModel> out;
  for (std::size_t i = 0; i < members; ++i)
    out.push_back(build_trails(spec, split, 1, sparsity, allocation,
                               TrailsSeed{seed, i}));
  return out;
}

HeadOutputs forward_heads(const TrailsModel &model, const Tensor &batch,
                          bool record) {
  if (batch.rank() < 2)
    fail("batch must have a leading sample dimension, got " +
         shape_str(batch.shape()));
  const Shape sample(batch.shape().begin() + 1, batch.shape().end());
  if (shape_size(sample) != shape_size(model.spec.input_shape) ||
      (sample.size() > 1 && sample != model.spec.input_shape))
    fail("batch sample shape " + shape_str(sample) + " does not match input " +
         shape_str(model.spec.input_shape));
  Tensor x = batch;
  if (sample != model.spec.input_shape) {
    Shape full{batch.rows()};
    full.insert(full.end(), model.spec.input_shape.begin(),
                model.spec.input_shape.end());
    x.reshape(full);
  }

  HeadOutputs out;
  out.backbone_activation =
      model.backbone.forward(x, record ? &out.backbone_tape : nullptr);
  ++model.backbone_forwards;
  if (record)
    out.head_tapes.resize(model.heads.size());
  for (std::size_t i = 0; i < model.heads.size(); ++i) {
    out.logits.push_back(model.heads[i].forward(
        out.backbone_activation, record ? &out.head_tapes[i] : nullptr));
    ++model.head_forwards;
  }
  return out;
}

CompositeLoss composite_loss(const HeadOutputs &outputs,
                             std::span<const std::int32_t> targets) {
  if (outputs.logits.empty())
    fail("composite loss over zero heads");
  CompositeLoss c;
  for (const auto &logits : outputs.logits) {
    LossResult r = cross_entropy(logits, targets);
    c.head_losses.push_back(r.loss);
    c.loss += r.loss;
    c.probs.push_back(std::move(r.probs));
  }
  c.loss /= static_cast<double>(outputs.logits.size());
  return c;
}

bool TrailsGradients::all_finite() const {
  if (!backbone.all_finite())
    return false;
  for (const auto &h : heads)
    if (!h.all_finite())
      return false;
  return true;
}

TrailsGradients backward(const TrailsModel &model, const HeadOutputs &outputs,
                         const CompositeLoss &loss,
                         std::span<const std::int32_t> targets, bool dense) {
  const std::size_t m = model.heads.size();
  if (!outputs.backbone_tape.recorded || outputs.head_tapes.size() != m)
    fail("backward called without a recorded forward pass");
  if (loss.probs.size() != m)
    fail("composite loss has " + std::to_string(loss.probs.size()) +
         " heads, model has " + std::to_string(m));
  TrailsGradients g;
  g.backbone = model.backbone.zero_grads();
  Tensor dh(outputs.backbone_activation.shape());
  const double scale = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    GradientSet hg = model.heads[i].zero_grads();
    const Tensor dlogits = cross_entropy_grad(loss.probs[i], targets, scale);
    const Tensor di = model.heads[i].backward(outputs.head_tapes[i], dlogits, hg);
    for (std::size_t j = 0; j < dh.size(); ++j)
      dh[j] += di[j];
    g.heads.push_back(std::move(hg));
  }
  model.backbone.backward(outputs.backbone_tape, dh, g.backbone);
  g.backbone.dense = dense;
  for (std::size_t i = 0; i < m; ++i)
    g.heads[i].dense = dense;
  if (!dense) {
    model.backbone.mask_gradients(g.backbone);
    for (std::size_t i = 0; i < m; ++i)
      model.heads[i].mask_gradients(g.heads[i]);
  }
  return g;
}

template <class T>
std::vector<std::int32_t> argmax_rows(const BasicTensor<T> &t) {
  std::vector<std::int32_t> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best])
        best = c;
    out[r] = static_cast<std::int32_t>(best);
  }
  return out;
}

template std::vector<std::int32_t> argmax_rows<float>(const Tensor &);
template std::vector<std::int32_t> argmax_rows<double>(const TensorF64 &);

Vote soft_vote(const std::vector<Tensor> &head_logits, VoteMode mode) {
  if (head_logits.empty())
    fail("soft_vote over zero heads");
  const Shape &shape = head_logits[0].shape();
  for (const auto &l : head_logits)
    if (l.shape() != shape)
      fail("soft_vote: head logits disagree in shape");
  // Running mean, so identical heads reproduce their own value exactly.
  auto accumulate = [](TensorF64 &mean, const TensorF64 &x, std::size_t k) {
    for (std::size_t j = 0; j < x.size(); ++j)
      mean[j] += (x[j] - mean[j]) / static_cast<double>(k);
  };
  Vote v;
  if (mode == VoteMode::probs) {
    v.probs = TensorF64(shape);
    for (std::size_t i = 0; i < head_logits.size(); ++i)
      accumulate(v.probs, softmax_rows(tensor_cast<double>(head_logits[i])),
                 i + 1);
  } else {
    TensorF64 mean(shape);
    for (std::size_t i = 0; i < head_logits.size(); ++i)
      accumulate(mean, tensor_cast<double>(head_logits[i]), i + 1);
    v.probs = softmax_rows(mean);
  }
  v.predictions = argmax_rows(v.probs);
  return v;
}

TrailsGradients finite_difference_gradient(const TrailsModel &model,
                                           const Tensor &x,
                                           std::span<const std::int32_t> targets,
                                           double eps) {
  const auto nets = model.components();
  const TensorF64 x64 = tensor_cast<double>(x);
  auto loss = [&](const std::vector<NetworkParamsF64> &p) {
    const TensorF64 h = forward_f64(model.backbone, p[0], x64);
    double total = 0.0;
    for (std::size_t i = 0; i < model.heads.size(); ++i)
      total += cross_entropy_f64(forward_f64(model.heads[i], p[i + 1], h),
                                 targets);
    return total / static_cast<double>(model.heads.size());
  };
  auto sets = finite_difference(nets, loss, eps);
  TrailsGradients g;
  g.backbone = std::move(sets[0]);
  for (std::size_t i = 1; i < sets.size(); ++i)
    g.heads.push_back(std::move(sets[i]));
  return g;
}

} // namespace neurotrails
