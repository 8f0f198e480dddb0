// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "data.hpp"
#include "model.hpp"
#include "sparsity.hpp"
#include "trainer.hpp"

namespace neurotrails {

enum class DataSource { synthetic, idx };
enum class EnsembleMode { trails, independent };

std::string to_string(EnsembleMode m);

struct DatasetConfig {
  DataSource source = DataSource::synthetic;
  SyntheticKind generator = SyntheticKind::rings;
  std::size_t n = 2000;
  double noise = 0.1;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::size_t limit = 5000; // idx: first `limit` samples, 0 = all
  double train_fraction = 0.8;
  bool normalize = true;
};

/// Fully validated experiment description. `steps` unset means "auto":
/// the longest run allowed by the extension rule and the FLOPs budget.
struct ExperimentConfig {
  DatasetConfig dataset;
  NetworkSpec network;
  std::size_t heads = 3;
  std::size_t split = 0; // blocks in the backbone
  EnsembleMode ensemble = EnsembleMode::trails;
  double sparsity = 0.0;
  Allocation allocation = Allocation::er;
  TrainConfig train;
  std::optional<std::size_t> steps;
  std::filesystem::path output_dir = "runs/default";
  std::uint64_t seed = 0;

  std::size_t blocks_in_head() const { return network.depth() - split; }
  /// Component-level checks that do not need data or a built model.
  void validate() const;
  nlohmann::json to_json() const;
  /// FNV-1a over the resolved JSON minus output_dir and
  /// checkpoint_interval; stored in checkpoints.
  std::uint64_t hash() const;
};

/// Parses and validates. Unknown keys and wrongly typed values are rejected
/// with the offending field path.
ExperimentConfig parse_config(const nlohmann::json &doc);
ExperimentConfig load_config(const std::filesystem::path &path);

std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

} // namespace neurotrails
