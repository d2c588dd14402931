#pragma once

#include <string>

#include "metastack/meta.hpp"

namespace metastack {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Hierarchy hierarchy;
  TrainState state;
};

/// Writes a versioned JSON checkpoint: header {format_version, seed, step,
/// K}, all level parameters (base-64 IEEE-754 doubles), optimiser states,
/// buffers, and RNG streams.
void save_checkpoint(const std::string& path, const Hierarchy& h, const TrainState& st);

/// Restores a checkpoint; throws std::runtime_error on unreadable, corrupt,
/// or version-mismatched files.
Checkpoint load_checkpoint(const std::string& path);

/// Base-64 of the raw little-endian IEEE-754 bytes; used by the checkpoint
/// format and tested independently.
std::string doubles_to_base64(const std::vector<double>& v);
std::vector<double> base64_to_doubles(const std::string& s);

}  // namespace metastack
