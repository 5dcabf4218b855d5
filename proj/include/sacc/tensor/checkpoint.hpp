#pragma once

#include <filesystem>
#include <string>

#include "sacc/tensor/parameter_store.hpp"

namespace sacc {

inline constexpr int kCheckpointFormatVersion = 1;

/**
 * Checkpoint container layout (little-endian):
 *
 *   bytes 0..7   magic "SACCCKPT"
 *   bytes 8..15  uint64 manifest length L
 *   next L bytes JSON manifest:
 *                {"format_version":1,"tensors":[{"name","group","shape",
 *                 "frozen","offset","count"}, ...]}
 *   remainder    concatenated f64 arrays; `offset` counts doubles from the
 *                start of this section
 */
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store);

/// Reads a checkpoint into a fresh store (values own new storage).
ParameterStore load_checkpoint(const std::filesystem::path& path);

/// Copies values from a checkpoint into an existing store. Every parameter of
/// `store` must be present with an identical shape; extra entries are ignored.
void restore_checkpoint(const std::filesystem::path& path, ParameterStore& store);

}  // namespace sacc
