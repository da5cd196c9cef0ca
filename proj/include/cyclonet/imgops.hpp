#pragma once

#include "cyclonet/tensor.hpp"

namespace cyclonet {

// Bilinear resample of a [H,W] image to [out_h, out_w], half-pixel-center
// convention, edge-clamped.
Image bilinear_resize(const Image& image, int out_h, int out_w);

// Exact lossless rotation of a square image by `turns` quarter turns
// (turns in {0,1,2,3}); one turn maps input row r, column c to
// out[r][c] = in[n-1-c][r].
Image quarter_turn(const Image& image, int turns);

// Bilinear rotation of a square image by an arbitrary angle (radians,
// same orientation as quarter_turn) about the image center; samples
// falling outside the source are zero.
Image rotate_bilinear(const Image& image, double angle);

}  // namespace cyclonet
