#pragma once

#include <filesystem>

#include "drsl/segnet.hpp"

namespace drsl {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Writes manifest.json (schema version, model config, parameter
/// names/shapes/dtypes) and one little-endian float64 file per parameter.
void save_checkpoint(const SegNet& net, const std::filesystem::path& dir);

/// Rebuilds the network from the manifest and restores every parameter.
SegNet load_checkpoint(const std::filesystem::path& dir);

/// Dumps mode centers as CSV: K*M rows (class, mode, then d_hat values).
void write_mode_centers_csv(const SegNet& net, const std::filesystem::path& path);

}  // namespace drsl
