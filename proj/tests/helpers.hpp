// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "network.hpp"
#include "rng.hpp"

namespace nt_test {

namespace fs = std::filesystem;

/// Fresh directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string &tag) {
    path_ = fs::temp_directory_path() /
            ("nt_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path &path() const { return path_; }
  fs::path operator/(const std::string &name) const { return path_ / name; }

private:
  fs::path path_;
};

inline std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path &p, const std::string &s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

/// Random values in [-1, 1] for a tensor of `shape`.
inline neurotrails::Tensor random_tensor(const neurotrails::Shape &shape,
                                         neurotrails::Rng &rng) {
  neurotrails::Tensor t(shape);
  for (auto &v : t.vec())
    v = static_cast<float>(2.0 * rng.uniform() - 1.0);
  return t;
}

/// Small configuration on the rings task; `extra` is spliced into the
/// top-level object.
inline std::string tiny_config(const std::string &out_dir,
                               const std::string &extra = "") {
  std::string s = R"({
  "seed": 7,
  "output_dir": ")" + out_dir + R"(",
  "dataset": {"source": "synthetic", "generator": "rings", "n": 400, "noise": 0.2},
  "network": {"mlp": {"input": 2, "width": 16, "blocks": 3, "classes": 2}},
  "trails": {"heads": 2, "blocks_in_head": 2},
  "sparsity": {"ratio": 0.5, "allocation": "er"},
  "topology": {"strategy": "rigl", "update_interval": 20},
  "optimizer": {"type": "sgd", "lr": 0.05, "momentum": 0.9, "weight_decay": 0.0},
  "schedule": {"type": "constant"},
  "training": {"batch_size": 32, "base_steps": 60, "steps": 100, "eval_interval": 25})";
  if (!extra.empty())
    s += ",\n  " + extra;
  return s + "\n}\n";
}

} // namespace nt_test

namespace nt_test {

/// Random mixed conv/linear/relu network with at most `max_active` active
/// weights (masks drawn at random) and a matching input batch.
struct GradcheckCase {
  neurotrails::Network net;
  neurotrails::Tensor x;
  std::vector<std::int32_t> targets;
};

inline GradcheckCase random_gradcheck_case(std::uint64_t seed,
                                           std::size_t max_active = 500) {
  using namespace neurotrails;
  Rng rng(seed);
  for (;;) {
    const std::size_t ch = 1 + rng.below(2);
    const std::size_t hw = 3 + rng.below(3);
    const std::size_t conv_out = 1 + rng.below(3);
    const std::size_t k = 1 + rng.below(3);
    const Padding pad = rng.below(2) ? Padding::same : Padding::valid;
    if (pad == Padding::valid && k > hw)
      continue;
    std::vector<LayerSpec> specs;
    specs.push_back(LayerSpec::conv2d(ch, conv_out, k, k, pad, rng.below(2) == 0));
    specs.push_back(LayerSpec::relu());
    Shape shape = specs[0].output_shape({ch, hw, hw});
    const std::size_t flat = shape_size(shape);
    const std::size_t hidden = 2 + rng.below(5);
    const std::size_t classes = 2 + rng.below(3);
    specs.push_back(LayerSpec::linear(flat, hidden));
    specs.push_back(LayerSpec::relu());
    specs.push_back(LayerSpec::linear(hidden, classes, rng.below(2) == 0));

    Network net = Network::init(specs, rng);
    const double density = 0.4 + 0.6 * rng.uniform();
    for (auto &l : net.layers()) {
      if (!l.spec.maskable())
        continue;
      for (auto &m : l.weight.mask)
        m = rng.uniform() < density ? 1 : 0;
      l.weight.mask[rng.below(l.weight.mask.size())] = 1;
      l.weight.apply_mask();
    }
    if (net.active_params() > max_active)
      continue;
    const std::size_t batch = 2 + rng.below(3);
    GradcheckCase c;
    c.x = random_tensor({batch, ch, hw, hw}, rng);
    for (std::size_t i = 0; i < batch; ++i)
      c.targets.push_back(static_cast<std::int32_t>(rng.below(classes)));
    c.net = std::move(net);
    return c;
  }
}

} // namespace nt_test
