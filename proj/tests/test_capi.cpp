// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library through its C header only.
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "neurotrails/neurotrails.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &tag) {
  const fs::path p = fs::temp_directory_path() /
                     ("nt_capi_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string config_json(const fs::path &out, double sparsity = 0.5) {
  return R"({"seed": 3, "output_dir": ")" + out.string() + R"(",
    "dataset": {"n": 300, "noise": 0.2},
    "network": {"mlp": {"input": 2, "width": 12, "blocks": 2, "classes": 2}},
    "trails": {"heads": 2, "blocks_in_head": 1},
    "sparsity": {"ratio": )" + std::to_string(sparsity) + R"(},
    "topology": {"strategy": "set", "update_interval": 10},
    "training": {"batch_size": 32, "base_steps": 40, "steps": 60, "eval_interval": 20,
                 "checkpoint_interval": 20}})";
}

} // namespace

TEST_CASE("train, inspect the checkpoint and evaluate") {
  const fs::path out = scratch("train");
  nt_experiment *exp = nullptr;
  REQUIRE(nt_experiment_parse(config_json(out).c_str(), &exp) == NT_OK);
  nt_metrics m{};
  REQUIRE(nt_experiment_train(exp, &m) == NT_OK);
  CHECK(m.step == 60);
  CHECK(m.accuracy > 0.5);
  CHECK(m.train_flops <= m.train_flops_budget);
  CHECK(m.inference_flops < m.dense_inference_flops);

  uint32_t version = 0;
  uint64_t hash = 0, step = 0;
  REQUIRE(nt_checkpoint_info((out / "checkpoint.ntck").c_str(), &version, &hash,
                             &step) == NT_OK);
  CHECK(version == 1);
  CHECK(step == 60);

  nt_metrics e{};
  REQUIRE(nt_experiment_eval(exp, &e) == NT_OK);
  CHECK(e.accuracy == m.accuracy);
  CHECK(e.ece == m.ece);

  size_t needed = 0;
  REQUIRE(nt_experiment_resolved_config(exp, nullptr, 0, &needed) == NT_OK);
  std::string buf(needed, '\0');
  REQUIRE(nt_experiment_resolved_config(exp, buf.data(), buf.size(), &needed) == NT_OK);
  CHECK(buf.find("\"steps\": 60") != std::string::npos);

  nt_experiment_free(exp);
  fs::remove_all(out);
}

TEST_CASE("resume through the C API matches the uninterrupted run") {
  const fs::path out = scratch("resume");
  nt_experiment *exp = nullptr;
  REQUIRE(nt_experiment_parse(config_json(out / "a").c_str(), &exp) == NT_OK);
  nt_metrics full{};
  REQUIRE(nt_experiment_train(exp, &full) == NT_OK);
  REQUIRE(nt_experiment_set_output_dir(exp, (out / "b").c_str()) == NT_OK);
  REQUIRE(nt_experiment_set_resume(exp, (out / "a/checkpoint_20.ntck").c_str(), 0) == NT_OK);
  nt_metrics resumed{};
  REQUIRE(nt_experiment_train(exp, &resumed) == NT_OK);
  CHECK(resumed.nll == full.nll);
  CHECK(resumed.pd == full.pd);
  CHECK(resumed.train_flops == full.train_flops);

  REQUIRE(nt_experiment_set_seed(exp, 4) == NT_OK);
  CHECK(nt_experiment_train(exp, nullptr) == NT_ERR_VALIDATION);
  CHECK(std::string(nt_last_error()).find("hash") != std::string::npos);
  nt_experiment_free(exp);
  fs::remove_all(out);
}

TEST_CASE("status codes") {
  nt_experiment *exp = nullptr;
  CHECK(nt_experiment_parse(config_json("x", 1.0).c_str(), &exp) == NT_ERR_VALIDATION);
  CHECK(exp == nullptr);
  CHECK(std::string(nt_last_error()).find("sparsity.ratio") != std::string::npos);
  CHECK(nt_experiment_parse("{", &exp) == NT_ERR_VALIDATION);
  CHECK(nt_experiment_load("/nonexistent/config.json", &exp) == NT_ERR_IO);
  CHECK(nt_experiment_parse(nullptr, &exp) == NT_ERR_INVALID_ARGUMENT);
  CHECK(nt_checkpoint_info("/nonexistent.ntck", nullptr, nullptr, nullptr) == NT_ERR_IO);
  nt_sweep_axis axis;
  CHECK(nt_parse_axis("heads", &axis) == NT_OK);
  CHECK(axis == NT_AXIS_HEADS);
  CHECK(nt_parse_axis("depth", &axis) == NT_ERR_VALIDATION);
  CHECK(std::string(nt_version()) == "0.1.0");
}

TEST_CASE("sweep through the C API") {
  const fs::path out = scratch("sweep");
  nt_experiment *exp = nullptr;
  REQUIRE(nt_experiment_parse(config_json(out).c_str(), &exp) == NT_OK);
  const double values[] = {0.0, 0.5};
  // A fixed step count above the dense budget is rejected for the dense point.
  CHECK(nt_sweep(exp, NT_AXIS_SPARSITY, values, 2, 2, 2) == NT_ERR_VALIDATION);
  CHECK(std::string(nt_last_error()).find("sparsity=0") != std::string::npos);
  nt_experiment_free(exp);
  const std::string auto_steps = [&] {
    std::string c = config_json(out);
    c.replace(c.find("\"steps\": 60"), 11, "\"steps\": \"auto\"");
    return c;
  }();
  REQUIRE(nt_experiment_parse(auto_steps.c_str(), &exp) == NT_OK);
  REQUIRE(nt_sweep(exp, NT_AXIS_SPARSITY, values, 2, 2, 2) == NT_OK);
  CHECK(fs::exists(out / "sweep.csv"));
  CHECK(fs::exists(out / "sparsity_0.5/seed_4/summary.csv"));
  nt_experiment_free(exp);
  fs::remove_all(out);
}

TEST_CASE("synthetic export") {
  const fs::path out = scratch("export");
  fs::create_directories(out);
  REQUIRE(nt_export_synthetic("xor_grid", 10, 0.1, 1, (out / "d.csv").c_str()) == NT_OK);
  std::ifstream in(out / "d.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "x0,x1,label");
  CHECK(nt_export_synthetic("spiral", 10, 0.1, 1, (out / "e.csv").c_str()) != NT_OK);
  fs::remove_all(out);
}
