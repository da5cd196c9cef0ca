#pragma once

#include <filesystem>
#include <string>

#include "cyclonet/tensor.hpp"

namespace cyclonet {

// Binary portable graymap / pixmap I/O. Grayscale images round-trip through
// 16-bit P5 files; overlays are written as 8-bit P6.

// Reads a binary PGM (P5, maxval <= 65535) into a [H,W] tensor scaled to [0,1].
Image read_pgm(const std::filesystem::path& path);

// Writes a [H,W] tensor with values in [0,1] as 16-bit binary PGM.
void write_pgm16(const Image& image, const std::filesystem::path& path);

// Writes an 8-bit binary PPM from three same-shape [H,W] channels in [0,1].
void write_ppm8(const Image& r, const Image& g, const Image& b,
                const std::filesystem::path& path);

}  // namespace cyclonet
