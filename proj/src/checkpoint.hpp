// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "trainer.hpp"

namespace neurotrails {

inline constexpr std::uint32_t checkpoint_version = 1;

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
};

/// Writes every tensor, mask, optimizer buffer and topology stream of
/// `state`. The file is written to a temporary name and renamed into place.
void save_checkpoint(const TrainState &state, std::uint64_t config_hash,
                     const std::filesystem::path &path);

/// Header only; validates magic and version.
CheckpointInfo read_checkpoint_info(const std::filesystem::path &path);

/// Restores into `state`, which must have been built from the same config.
/// A config hash mismatch is rejected unless `force` is set.
CheckpointInfo load_checkpoint(const std::filesystem::path &path,
                               TrainState &state, std::uint64_t config_hash,
                               bool force = false);

} // namespace neurotrails
