// SPDX-License-Identifier: Apache-2.0
#include "flops.hpp"

namespace neurotrails {

double network_forward_flops(const Network &net, const Shape &sample_in,
                             bool dense, Shape *sample_out) {
  Shape s = sample_in;
  double total = 0.0;
  for (const auto &layer : net.layers()) {
    const Shape next = layer.spec.output_shape(s);
    const double weights = dense ? static_cast<double>(layer.spec.weight_count())
                                 : static_cast<double>(layer.weight.active());
    switch (layer.spec.kind) {
    case LayerKind::linear:
      total += 2.0 * weights + static_cast<double>(layer.spec.bias_count());
      break;
    case LayerKind::conv2d: {
      const double positions = static_cast<double>(next[1] * next[2]);
      total += 2.0 * weights * positions +
               static_cast<double>(layer.spec.bias_count()) * positions;
      break;
    }
    case LayerKind::relu:
      total += static_cast<double>(shape_size(s));
      break;
    }
    s = next;
  }
  if (sample_out)
    *sample_out = s;
  return total;
}

FlopsLedger count_flops(const TrailsModel &model) {
  FlopsLedger ledger;
  Shape hidden;
  ComponentFlops bb{model.component_name(0), 0.0, 0.0};
  bb.sparse = network_forward_flops(model.backbone, model.spec.input_shape,
                                    false, &hidden);
  bb.dense = network_forward_flops(model.backbone, model.spec.input_shape, true);
  ledger.components.push_back(bb);
  for (std::size_t i = 0; i < model.heads.size(); ++i) {
    ComponentFlops h{model.component_name(i + 1), 0.0, 0.0};
    h.sparse = network_forward_flops(model.heads[i], hidden, false);
    h.dense = network_forward_flops(model.heads[i], hidden, true);
    ledger.components.push_back(h);
  }
  for (const auto &c : ledger.components) {
    ledger.forward_sparse += c.sparse;
    ledger.forward_dense += c.dense;
  }
  return ledger;
}

FlopsLedger count_flops(const std::vector<const TrailsModel *> &members) {
  FlopsLedger total;
  for (const TrailsModel *m : members) {
    FlopsLedger l = count_flops(*m);
    total.forward_sparse += l.forward_sparse;
    total.forward_dense += l.forward_dense;
    total.components.insert(total.components.end(), l.components.begin(),
                            l.components.end());
  }
  return total;
}

} // namespace neurotrails
