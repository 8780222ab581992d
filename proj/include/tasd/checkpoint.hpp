#pragma once

#include <cstdint>
#include <string>

#include "tasd/model.hpp"

namespace tasd {

/// Binary layout, little-endian:
///   "TASD1"
///   u32 length + UTF-8 JSON model config
///   u64 vocabulary fingerprint
///   u32 parameter count, then per parameter:
///     u32 name length + name, u32 rank, u64 dims..., f64 values (row-major)
void save_checkpoint(const TasatgModel& model, const std::string& path,
                     std::uint64_t vocab_fingerprint);

struct LoadedCheckpoint {
  TasatgModel model;
  std::uint64_t vocab_fingerprint = 0;
};

/// Rebuilds the model from the stored config.
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Fills an existing model; every stored parameter must match by name and
/// shape. Returns the stored vocabulary fingerprint.
std::uint64_t load_checkpoint_into(TasatgModel& model, const std::string& path);

}  // namespace tasd
