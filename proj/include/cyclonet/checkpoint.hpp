#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "cyclonet/network.hpp"

namespace cyclonet {

// Model checkpoints are directories holding manifest.json (format version,
// network configuration, and a named tensor table with shape, dtype, byte
// offset, byte length, and checksum) plus weights.bin, the concatenation of
// all tensors as little-endian IEEE-754 32-bit values in manifest order.

void save_checkpoint(const Model& model, const std::filesystem::path& dir);

// Loads a checkpoint saved by save_checkpoint. Round trip is bitwise exact.
// Throws IoError on version mismatch, truncated or oversized blobs, offset
// or checksum mismatches; no partially loaded model escapes.
Model load_checkpoint(const std::filesystem::path& dir);

// 64-bit FNV-1a over a byte range, rendered as "fnv1a64:<16 hex digits>".
std::string checksum_bytes(std::span<const unsigned char> bytes);

}  // namespace cyclonet
