// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "error.hpp"

namespace neurotrails {

using nlohmann::json;

std::string to_string(EnsembleMode m) {
  return m == EnsembleMode::independent ? "independent" : "trails";
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

/// Typed, path-aware reader over one JSON object. finish() rejects keys
/// that were never read.
class Section {
public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      fail_validation(where() + ": expected an object");
  }

  std::string field(const std::string &key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string &key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json &raw(const std::string &key) {
    seen_.insert(key);
    if (!j_.contains(key))
      fail_validation(field(key) + ": required field missing");
    return j_.at(key);
  }

  double number(const std::string &key, std::optional<double> def = {}) {
    if (!has(key)) {
      if (!def)
        fail_validation(field(key) + ": required field missing");
      return *def;
    }
    const json &v = j_.at(key);
    if (!v.is_number())
      fail_validation(field(key) + ": expected a number, got " + v.dump());
    const double d = v.get<double>();
    if (!std::isfinite(d))
      fail_validation(field(key) + ": must be finite");
    return d;
  }

  std::uint64_t integer(const std::string &key,
                        std::optional<std::uint64_t> def = {}) {
    if (!has(key)) {
      if (!def)
        fail_validation(field(key) + ": required field missing");
      return *def;
    }
    const json &v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0 &&
                                   !v.is_number_unsigned()))
      fail_validation(field(key) + ": expected a non-negative integer, got " +
                      v.dump());
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string &key, bool def) {
    if (!has(key))
      return def;
    const json &v = j_.at(key);
    if (!v.is_boolean())
      fail_validation(field(key) + ": expected true or false, got " + v.dump());
    return v.get<bool>();
  }

  std::string string(const std::string &key,
                     std::optional<std::string> def = {}) {
    if (!has(key)) {
      if (!def)
        fail_validation(field(key) + ": required field missing");
      return *def;
    }
    const json &v = j_.at(key);
    if (!v.is_string())
      fail_validation(field(key) + ": expected a string, got " + v.dump());
    return v.get<std::string>();
  }

  /// Runs `parse` on the string value, turning its errors into field errors.
  template <class F>
  auto choice(const std::string &key, const std::string &def, F parse) {
    const std::string s = string(key, def);
    try {
      return parse(s);
    } catch (const Error &e) {
      fail_validation(field(key) + ": " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        fail_validation(field(it.key()) + ": unknown field");
  }

private:
  std::string where() const { return path_.empty() ? "config" : path_; }
  json j_;
  std::string path_;
  std::set<std::string> seen_;
};

LayerSpec parse_layer(const json &j, const std::string &path) {
  Section s(j, path);
  const std::string type = s.string("type");
  LayerSpec l;
  if (type == "relu") {
    l = LayerSpec::relu();
  } else if (type == "linear") {
    l = LayerSpec::linear(s.integer("in"), s.integer("out"), s.boolean("bias", true));
  } else if (type == "conv2d") {
    const json &k = s.raw("kernel");
    std::size_t kh = 0, kw = 0;
    if (k.is_number_unsigned()) {
      kh = kw = k.get<std::size_t>();
    } else if (k.is_array() && k.size() == 2 && k[0].is_number_unsigned() &&
               k[1].is_number_unsigned()) {
      kh = k[0].get<std::size_t>();
      kw = k[1].get<std::size_t>();
    } else {
      fail_validation(s.field("kernel") + ": expected an integer or [h, w]");
    }
    const std::string pad = s.string("padding", "valid");
    if (pad != "valid" && pad != "same")
      fail_validation(s.field("padding") + ": expected valid or same");
    l = LayerSpec::conv2d(s.integer("in"), s.integer("out"), kh, kw,
                          pad == "same" ? Padding::same : Padding::valid,
                          s.boolean("bias", true));
  } else {
    fail_validation(s.field("type") + ": unknown layer type '" + type +
                    "' (expected linear, conv2d, relu)");
  }
  s.finish();
  try {
    l.validate();
  } catch (const Error &e) {
    fail_validation(path + ": " + e.what());
  }
  return l;
}

std::vector<LayerSpec> parse_layers(const json &j, const std::string &path) {
  if (!j.is_array())
    fail_validation(path + ": expected an array of layers");
  std::vector<LayerSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_layer(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

json layer_to_json(const LayerSpec &l) {
  json j{{"type", to_string(l.kind)}};
  if (l.kind == LayerKind::relu)
    return j;
  j["in"] = l.in;
  j["out"] = l.out;
  j["bias"] = l.has_bias;
  if (l.kind == LayerKind::conv2d) {
    j["kernel"] = {l.kernel_h, l.kernel_w};
    j["padding"] = to_string(l.padding);
  }
  return j;
}

NetworkSpec parse_network(const json &j) {
  Section s(j, "network");
  NetworkSpec net;
  if (s.has("mlp")) {
    Section m(s.raw("mlp"), "network.mlp");
    net = NetworkSpec::mlp(m.integer("input"), m.integer("width"),
                           m.integer("blocks"), m.integer("classes"));
    m.finish();
  } else {
    const json &shape = s.raw("input_shape");
    if (!shape.is_array() || shape.empty())
      fail_validation("network.input_shape: expected a non-empty integer array");
    for (const auto &d : shape) {
      if (!d.is_number_unsigned() || d.get<std::size_t>() == 0)
        fail_validation("network.input_shape: dims must be positive integers");
      net.input_shape.push_back(d.get<std::size_t>());
    }
    net.classes = s.integer("classes");
    if (s.has("stem"))
      net.stem = parse_layers(s.raw("stem"), "network.stem");
    const json &blocks = s.raw("blocks");
    if (!blocks.is_array())
      fail_validation("network.blocks: expected an array of layer arrays");
    for (std::size_t b = 0; b < blocks.size(); ++b)
      net.blocks.push_back(
          parse_layers(blocks[b], "network.blocks[" + std::to_string(b) + "]"));
    net.classifier = parse_layers(s.raw("classifier"), "network.classifier");
  }
  s.finish();
  try {
    net.validate();
  } catch (const Error &e) {
    fail_validation(std::string("network: ") + e.what());
  }
  return net;
}

} // namespace

void ExperimentConfig::validate() const {
  try {
    network.validate();
  } catch (const Error &e) {
    fail_validation(std::string("network: ") + e.what());
  }
  if (heads < 1)
    fail_validation("trails.heads: must be >= 1");
  if (split > network.depth())
    fail_validation("trails.split_index: " + std::to_string(split) +
                    " outside [0, " + std::to_string(network.depth()) + "]");
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    fail_validation("sparsity.ratio: must be in [0, 1), got " +
                    std::to_string(sparsity));
  if (dataset.source == DataSource::synthetic) {
    if (dataset.n < 2)
      fail_validation("dataset.n: must be >= 2");
    if (!(dataset.noise >= 0.0))
      fail_validation("dataset.noise: must be >= 0");
    if (network.classes != 2 || shape_size(network.input_shape) != 2)
      fail_validation("network: synthetic tasks need 2 input features and 2 "
                      "classes");
  }
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0))
    fail_validation("dataset.train_fraction: must be in (0, 1)");
  train.optimizer.validate();
  train.schedule.validate();
  train.topology.validate();
  if (train.batch_size < 1)
    fail_validation("training.batch_size: must be >= 1");
  if (train.base_steps < 1)
    fail_validation("training.base_steps: must be >= 1");
  if (train.eval_interval < 1)
    fail_validation("training.eval_interval: must be >= 1");
  if (steps) {
    if (*steps < 1)
      fail_validation("training.steps: must be >= 1");
    const std::size_t cap = extension_cap(sparsity, train.base_steps);
    if (*steps > cap)
      fail_validation("training.steps: " + std::to_string(*steps) +
                      " exceeds the sparse extension cap " +
                      std::to_string(cap));
  }
}

ExperimentConfig parse_config(const json &doc) {
  Section root(doc, "");
  ExperimentConfig c;
  c.seed = root.integer("seed", 0);
  c.output_dir = root.string("output_dir", "runs/default");

  {
    Section d(root.has("dataset") ? root.raw("dataset") : json::object(),
              "dataset");
    const std::string source = d.string("source", "synthetic");
    if (source == "synthetic") {
      c.dataset.source = DataSource::synthetic;
      c.dataset.generator = d.choice("generator", "rings", parse_synthetic_kind);
      c.dataset.n = d.integer("n", 2000);
      c.dataset.noise = d.number("noise", 0.1);
    } else if (source == "idx") {
      c.dataset.source = DataSource::idx;
      c.dataset.images = d.string("images");
      c.dataset.labels = d.string("labels");
      c.dataset.limit = d.integer("limit", 5000);
    } else {
      fail_validation("dataset.source: unknown source '" + source +
                      "' (expected synthetic, idx)");
    }
    c.dataset.train_fraction = d.number("train_fraction", 0.8);
    c.dataset.normalize = d.boolean("normalize", true);
    d.finish();
  }

  c.network = parse_network(root.raw("network"));
  const std::size_t depth = c.network.depth();

  {
    Section t(root.has("trails") ? root.raw("trails") : json::object(), "trails");
    c.heads = t.integer("heads", 3);
    const bool has_bih = t.has("blocks_in_head");
    const bool has_split = t.has("split_index");
    if (has_bih && has_split)
      fail_validation("trails: give blocks_in_head or split_index, not both");
    if (has_split) {
      c.split = t.integer("split_index");
    } else {
      const std::size_t bih = t.integer(
          "blocks_in_head",
          static_cast<std::uint64_t>(std::lround(2.0 * static_cast<double>(depth) / 3.0)));
      if (bih > depth)
        fail_validation("trails.blocks_in_head: " + std::to_string(bih) +
                        " exceeds network depth " + std::to_string(depth));
      c.split = depth - bih;
    }
    const std::string mode = t.string("ensemble", "trails");
    if (mode == "trails")
      c.ensemble = EnsembleMode::trails;
    else if (mode == "independent")
      c.ensemble = EnsembleMode::independent;
    else
      fail_validation("trails.ensemble: unknown mode '" + mode +
                      "' (expected trails, independent)");
    c.train.vote = t.choice("vote", "probs", parse_vote_mode);
    t.finish();
  }

  {
    Section s(root.has("sparsity") ? root.raw("sparsity") : json::object(),
              "sparsity");
    c.sparsity = s.number("ratio", 0.0);
    if (!(c.sparsity >= 0.0 && c.sparsity < 1.0))
      fail_validation("sparsity.ratio: must be in [0, 1), got " +
                      s.raw("ratio").dump());
    c.allocation = s.choice("allocation", "er", parse_allocation);
    s.finish();
  }

  {
    Section s(root.has("topology") ? root.raw("topology") : json::object(),
              "topology");
    TopologySchedule &ts = c.train.topology;
    ts.strategy = s.choice("strategy", "rigl", parse_strategy);
    ts.prune = s.choice("prune_method", "magnitude", parse_prune_method);
    ts.temperature = s.number("temperature", 3.0);
    ts.normalize_by_mean = s.boolean("normalize_by_mean", true);
    ts.update_interval = s.integer("update_interval", 100);
    ts.initial_drop = s.number("initial_drop_fraction", 0.5);
    ts.stop_fraction = s.number("stop_fraction", 0.0);
    ts.pre_pruning_fraction = s.number("pre_pruning_fraction", 0.5);
    s.finish();
  }

  {
    Section s(root.has("optimizer") ? root.raw("optimizer") : json::object(),
              "optimizer");
    OptimizerConfig &o = c.train.optimizer;
    const std::string type = s.string("type", "sgd");
    if (type == "sgd") {
      o.kind = OptimizerKind::sgd;
      o.lr = s.number("lr", 0.1);
      o.momentum = s.number("momentum", 0.9);
      o.weight_decay = s.number("weight_decay", 5e-4);
    } else if (type == "adam") {
      o.kind = OptimizerKind::adam;
      o.lr = s.number("lr", 1e-3);
      o.beta1 = s.number("beta1", 0.9);
      o.beta2 = s.number("beta2", 0.999);
      o.epsilon = s.number("epsilon", 1e-8);
      o.weight_decay = 0.0;
    } else {
      fail_validation("optimizer.type: unknown optimizer '" + type +
                      "' (expected sgd, adam)");
    }
    s.finish();
  }

  {
    Section s(root.has("schedule") ? root.raw("schedule") : json::object(),
              "schedule");
    LrSchedule &ls = c.train.schedule;
    const std::string type = s.string("type", "step");
    if (type == "step") {
      ls.kind = ScheduleKind::step;
      if (s.has("milestones")) {
        const json &m = s.raw("milestones");
        if (!m.is_array())
          fail_validation("schedule.milestones: expected an array of fractions");
        ls.milestones.clear();
        for (const auto &v : m) {
          if (!v.is_number())
            fail_validation("schedule.milestones: expected numbers");
          ls.milestones.push_back(v.get<double>());
        }
      }
      ls.factor = s.number("factor", 0.1);
    } else if (type == "cosine") {
      ls.kind = ScheduleKind::cosine;
      ls.warmup_fraction = s.number("warmup_fraction", 0.1);
      ls.min_fraction = s.number("min_fraction", 0.1);
    } else if (type == "constant") {
      ls.kind = ScheduleKind::constant;
    } else {
      fail_validation("schedule.type: unknown schedule '" + type +
                      "' (expected step, cosine, constant)");
    }
    s.finish();
  }

  {
    Section s(root.has("training") ? root.raw("training") : json::object(),
              "training");
    c.train.batch_size = s.integer("batch_size", 128);
    c.train.base_steps = s.integer("base_steps", 1000);
    if (s.has("steps")) {
      const json &v = s.raw("steps");
      if (v.is_string() && v.get<std::string>() == "auto")
        c.steps.reset();
      else if (v.is_number_unsigned())
        c.steps = v.get<std::size_t>();
      else
        fail_validation("training.steps: expected a positive integer or \"auto\", got " +
                        v.dump());
    }
    c.train.eval_interval = s.integer("eval_interval", 100);
    c.train.checkpoint_interval = s.integer("checkpoint_interval", 0);
    s.finish();
  }

  {
    Section s(root.has("metrics") ? root.raw("metrics") : json::object(),
              "metrics");
    c.train.pd_mode = s.choice("pd_mode", "pairwise", parse_pd_mode);
    s.finish();
  }
  root.finish();

  c.train.sparsity = c.sparsity;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail_io("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error &e) {
    fail_validation("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = parse_config(doc);
  const auto base = path.parent_path();
  if (c.dataset.source == DataSource::idx) {
    if (c.dataset.images.is_relative())
      c.dataset.images = base / c.dataset.images;
    if (c.dataset.labels.is_relative())
      c.dataset.labels = base / c.dataset.labels;
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  json d{{"train_fraction", dataset.train_fraction},
         {"normalize", dataset.normalize}};
  if (dataset.source == DataSource::synthetic) {
    d["source"] = "synthetic";
    d["generator"] = to_string(dataset.generator);
    d["n"] = dataset.n;
    d["noise"] = dataset.noise;
  } else {
    d["source"] = "idx";
    d["images"] = dataset.images.string();
    d["labels"] = dataset.labels.string();
    d["limit"] = dataset.limit;
  }
  j["dataset"] = d;

  json net{{"input_shape", network.input_shape}, {"classes", network.classes}};
  net["stem"] = json::array();
  for (const auto &l : network.stem)
    net["stem"].push_back(layer_to_json(l));
  net["blocks"] = json::array();
  for (const auto &b : network.blocks) {
    json arr = json::array();
    for (const auto &l : b)
      arr.push_back(layer_to_json(l));
    net["blocks"].push_back(arr);
  }
  net["classifier"] = json::array();
  for (const auto &l : network.classifier)
    net["classifier"].push_back(layer_to_json(l));
  j["network"] = net;

  j["trails"] = {{"heads", heads},
                 {"split_index", split},
                 {"ensemble", to_string(ensemble)},
                 {"vote", to_string(train.vote)}};
  j["sparsity"] = {{"ratio", sparsity}, {"allocation", to_string(allocation)}};
  const TopologySchedule &ts = train.topology;
  j["topology"] = {{"strategy", to_string(ts.strategy)},
                   {"prune_method", to_string(ts.prune)},
                   {"temperature", ts.temperature},
                   {"normalize_by_mean", ts.normalize_by_mean},
                   {"update_interval", ts.update_interval},
                   {"initial_drop_fraction", ts.initial_drop},
                   {"stop_fraction", ts.stop_fraction},
                   {"pre_pruning_fraction", ts.pre_pruning_fraction}};
  const OptimizerConfig &o = train.optimizer;
  if (o.kind == OptimizerKind::sgd)
    j["optimizer"] = {{"type", "sgd"},
                      {"lr", o.lr},
                      {"momentum", o.momentum},
                      {"weight_decay", o.weight_decay}};
  else
    j["optimizer"] = {{"type", "adam"},
                      {"lr", o.lr},
                      {"beta1", o.beta1},
                      {"beta2", o.beta2},
                      {"epsilon", o.epsilon}};
  const LrSchedule &ls = train.schedule;
  switch (ls.kind) {
  case ScheduleKind::step:
    j["schedule"] = {{"type", "step"},
                     {"milestones", ls.milestones},
                     {"factor", ls.factor}};
    break;
  case ScheduleKind::cosine:
    j["schedule"] = {{"type", "cosine"},
                     {"warmup_fraction", ls.warmup_fraction},
                     {"min_fraction", ls.min_fraction}};
    break;
  case ScheduleKind::constant:
    j["schedule"] = {{"type", "constant"}};
    break;
  }
  json tr{{"batch_size", train.batch_size},
          {"base_steps", train.base_steps},
          {"eval_interval", train.eval_interval},
          {"checkpoint_interval", train.checkpoint_interval}};
  if (steps)
    tr["steps"] = *steps;
  else
    tr["steps"] = "auto";
  j["training"] = tr;
  j["metrics"] = {{"pd_mode", to_string(train.pd_mode)}};
  return j;
}

std::uint64_t ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  j["training"].erase("checkpoint_interval");
  return fnv1a64(j.dump());
}

} // namespace neurotrails
