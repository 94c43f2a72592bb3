#pragma once

#include <filesystem>

#include "vsd/nets.hpp"

namespace vsd {

// Everything the optimizer owns: both networks plus their Adam slots
// (parallel to each network's parameter list; may be empty for eval-only
// snapshots).
template <typename T>
struct TrainState {
  Network<T> depnet;
  Network<T> synnet;
  std::vector<AdamState<T>> depnet_opt;
  std::vector<AdamState<T>> synnet_opt;
  long global_step = 0;
};

// On-disk layout: a plain-text key=value block describing both net configs,
// a `---` line, then the binary section (magic NVSD, version, dtype,
// parameter records, Adam records). Values are little-endian.
template <typename T>
void save_checkpoint(const TrainState<T>& state,
                     const std::filesystem::path& file);

template <typename T>
TrainState<T> load_checkpoint(const std::filesystem::path& file);

}  // namespace vsd
