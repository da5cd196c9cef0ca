#pragma once

#include <filesystem>
#include <vector>

#include "cyclonet/models.hpp"
#include "cyclonet/network.hpp"

namespace cyclonet {

// Gradient-weighted class activation map at network input resolution.
// values lie in [0,1]; the maximum is 1 whenever any pre-normalization
// activation was positive, and an identically zero map stays zero.
struct Heatmap {
  Image values;
  int layer = 5;    // conv stage the map came from, 1..5
  int member = -1;  // ensemble member index, -1 for single-model or median
};

// Map for one model: channel weights are the spatial means of the gradient
// of the log-speed head with respect to the chosen stage's activations; the
// weighted activation sum is rectified, bilinearly upsampled to the input
// size, then min-max normalized.
Heatmap grad_cam(const Model& model, const Image& image, int layer);

// Pixelwise median across same-shape images; even counts take the lower of
// the two middle values, so the result is independent of member order.
Image median_pixelwise(const std::vector<Image>& images);

// Min-max normalization to [0,1]. All-zero stays all-zero; a constant
// positive map becomes all ones.
Image normalize_unit(const Image& image);

struct EnsembleHeatmaps {
  std::vector<Heatmap> members;
  Heatmap median;  // pixelwise median of the member maps, re-normalized
};

EnsembleHeatmaps ensemble_heatmap(const GlobalEnsemble& ensemble, const Image& image, int layer);

// Writes <stem>_heatmap.pgm (16-bit graymap), <stem>_overlay.ppm (fixed
// monotone colormap alpha-blended at 0.4 over the grayscale image, so a zero
// heatmap reproduces the image exactly), and <stem>_heatmap.csv.
void overlay_export(const Image& image, const Heatmap& heatmap,
                    const std::filesystem::path& stem);

// Reads a heatmap CSV written by overlay_export.
Image read_heatmap_csv(const std::filesystem::path& path);

}  // namespace cyclonet
