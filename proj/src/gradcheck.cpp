// SPDX-License-Identifier: Apache-2.0
#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace neurotrails {

NetworkParamsF64 to_f64(const Network &net) {
  NetworkParamsF64 out;
  for (const auto &layer : net.layers()) {
    LayerParamsF64 p;
    p.weight.assign(layer.weight.values.vec().begin(),
                    layer.weight.values.vec().end());
    p.bias.assign(layer.bias.vec().begin(), layer.bias.vec().end());
    out.push_back(std::move(p));
  }
  return out;
}

TensorF64 forward_f64(const Network &net, const NetworkParamsF64 &params,
                      TensorF64 x) {
  for (std::size_t i = 0; i < net.size(); ++i)
    x = layer_forward<double>(net.layers()[i].spec, params[i].weight,
                              params[i].bias, x);
  return x;
}

std::vector<GradientSet>
finite_difference(const std::vector<const Network *> &nets, const LossF64 &loss,
                  double eps) {
  if (!(eps > 0.0))
    fail("finite-difference eps must be > 0, got " + std::to_string(eps));
  std::vector<NetworkParamsF64> params;
  for (const Network *n : nets)
    params.push_back(to_f64(*n));

  auto probe = [&](double &slot) {
    const double saved = slot;
    slot = saved + eps;
    const double up = loss(params);
    slot = saved - eps;
    const double down = loss(params);
    slot = saved;
    return (up - down) / (2.0 * eps);
  };

  std::vector<GradientSet> out;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    GradientSet g = nets[k]->zero_grads();
    g.dense = false;
    for (std::size_t l = 0; l < nets[k]->size(); ++l) {
      const Layer &layer = nets[k]->layers()[l];
      if (!layer.spec.maskable())
        continue;
      auto &p = params[k][l];
      for (std::size_t j = 0; j < p.weight.size(); ++j)
        if (layer.weight.mask[j])
          g.layers[l].weight[j] = static_cast<float>(probe(p.weight[j]));
      for (std::size_t j = 0; j < p.bias.size(); ++j)
        g.layers[l].bias[j] = static_cast<float>(probe(p.bias[j]));
    }
    out.push_back(std::move(g));
  }
  return out;
}

GradientSet finite_difference_gradient(const Network &net, const Tensor &x,
                                       std::span<const std::int32_t> targets,
                                       double eps) {
  const TensorF64 x64 = tensor_cast<double>(x);
  auto loss = [&](const std::vector<NetworkParamsF64> &p) {
    return cross_entropy_f64(forward_f64(net, p[0], x64), targets);
  };
  return std::move(finite_difference({&net}, loss, eps)[0]);
}

double max_relative_error(const Network &net, const GradientSet &a,
                          const GradientSet &b, double floor) {
  double worst = 0.0;
  auto rel = [&](double x, double y) {
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  };
  for (std::size_t l = 0; l < net.size(); ++l) {
    const Layer &layer = net.layers()[l];
    if (!layer.spec.maskable())
      continue;
    for (std::size_t j = 0; j < layer.weight.size(); ++j)
      if (layer.weight.mask[j])
        rel(a.layers[l].weight[j], b.layers[l].weight[j]);
    for (std::size_t j = 0; j < layer.bias.size(); ++j)
      rel(a.layers[l].bias[j], b.layers[l].bias[j]);
  }
  return worst;
}

} // namespace neurotrails
