#include "cyclonet/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cyclonet/errors.hpp"
#include "cyclonet/imgops.hpp"
#include "cyclonet/pnm.hpp"

namespace cyclonet {

namespace {

// monotone "hot" ramp: black -> red -> yellow -> white
void hot_colormap(float t, float& r, float& g, float& b) {
  r = std::clamp(3.0f * t, 0.0f, 1.0f);
  g = std::clamp(3.0f * t - 1.0f, 0.0f, 1.0f);
  b = std::clamp(3.0f * t - 2.0f, 0.0f, 1.0f);
}

}  // namespace

Heatmap grad_cam(const Model& model, const Image& image, int layer) {
  if (layer < 1 || layer > 5) {
    throw ConfigError("grad_cam: layer must be in [1, 5], got " + std::to_string(layer));
  }
  Model& m = const_cast<Model&>(model);  // Eval mode does not mutate the model
  Graph<float> g;
  const Tensor batch = batch_from_images(std::span<const Image>(&image, 1),
                                         model.config.input_size);
  const ForwardTrace trace = forward_trace(m, g, batch, Mode::Eval, nullptr);
  g.backward(g.sum(trace.head));

  const NodeId stage = trace.stage_out[static_cast<std::size_t>(layer - 1)];
  const Tensor& acts = g.value(stage);
  const Tensor& grads = g.grad(stage);
  const int channels = acts.dim(1), h = acts.dim(2), w = acts.dim(3);
  const int hw = h * w;

  Image map({h, w});
  for (int k = 0; k < channels; ++k) {
    const float* a = acts.data() + static_cast<std::size_t>(k) * hw;
    const float* gr = grads.data() + static_cast<std::size_t>(k) * hw;
    float alpha = 0.0f;
    for (int p = 0; p < hw; ++p) alpha += gr[p];
    alpha /= static_cast<float>(hw);
    for (int p = 0; p < hw; ++p) map[p] += alpha * a[p];
  }
  for (std::int64_t p = 0; p < map.size(); ++p) map[p] = std::max(map[p], 0.0f);

  Heatmap heat;
  heat.layer = layer;
  heat.values = normalize_unit(
      bilinear_resize(map, model.config.input_size, model.config.input_size));
  return heat;
}

Image median_pixelwise(const std::vector<Image>& images) {
  if (images.empty()) throw DataError("median_pixelwise: no images");
  for (const Image& img : images) require_same_shape("median_pixelwise", images[0].shape(),
                                                     img.shape());
  Image out(images[0].shape());
  std::vector<float> column(images.size());
  const std::size_t mid = (images.size() - 1) / 2;  // lower middle for even counts
  for (std::int64_t p = 0; p < out.size(); ++p) {
    for (std::size_t i = 0; i < images.size(); ++i) column[i] = images[i][p];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid),
                     column.end());
    out[p] = column[mid];
  }
  return out;
}

Image normalize_unit(const Image& image) {
  float lo = image[0], hi = image[0];
  for (std::int64_t p = 0; p < image.size(); ++p) {
    lo = std::min(lo, image[p]);
    hi = std::max(hi, image[p]);
  }
  Image out(image.shape());
  if (hi == lo) {
    if (hi != 0.0f) {
      for (std::int64_t p = 0; p < out.size(); ++p) out[p] = 1.0f;
    }
    return out;
  }
  const float inv = 1.0f / (hi - lo);
  for (std::int64_t p = 0; p < out.size(); ++p) out[p] = (image[p] - lo) * inv;
  return out;
}

EnsembleHeatmaps ensemble_heatmap(const GlobalEnsemble& ensemble, const Image& image, int layer) {
  if (ensemble.members.empty()) throw DataError("ensemble_heatmap: empty ensemble");
  EnsembleHeatmaps out;
  std::vector<Image> maps;
  maps.reserve(ensemble.members.size());
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    Heatmap member = grad_cam(ensemble.members[i], image, layer);
    member.member = static_cast<int>(i);
    maps.push_back(member.values);
    out.members.push_back(std::move(member));
  }
  out.median.layer = layer;
  out.median.values = normalize_unit(median_pixelwise(maps));
  return out;
}

void overlay_export(const Image& image, const Heatmap& heatmap,
                    const std::filesystem::path& stem) {
  require_same_shape("overlay_export", image.shape(), heatmap.values.shape());

  write_pgm16(heatmap.values, stem.string() + "_heatmap.pgm");

  Image r(image.shape()), g(image.shape()), b(image.shape());
  for (std::int64_t p = 0; p < image.size(); ++p) {
    const float t = heatmap.values[p];
    float cr, cg, cb;
    hot_colormap(t, cr, cg, cb);
    // per-pixel alpha 0.4*t: a zero heatmap leaves the grayscale untouched
    const float a = 0.4f * t;
    r[p] = (1.0f - a) * image[p] + a * cr;
    g[p] = (1.0f - a) * image[p] + a * cg;
    b[p] = (1.0f - a) * image[p] + a * cb;
  }
  write_ppm8(r, g, b, stem.string() + "_overlay.ppm");

  std::ofstream csv(stem.string() + "_heatmap.csv");
  if (!csv) throw IoError(stem.string() + "_heatmap.csv: cannot open for writing");
  char cell[32];
  for (int row = 0; row < heatmap.values.dim(0); ++row) {
    for (int col = 0; col < heatmap.values.dim(1); ++col) {
      std::snprintf(cell, sizeof(cell), "%.9g", heatmap.values.at(row, col));
      csv << (col ? "," : "") << cell;
    }
    csv << '\n';
  }
  if (!csv) throw IoError(stem.string() + "_heatmap.csv: write failed");
}

Image read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) row.push_back(std::stof(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": empty heatmap CSV");
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(rows[0].size());
  Image out({h, w});
  for (int r = 0; r < h; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != w) {
      throw IoError(path.string() + ": ragged heatmap CSV");
    }
    for (int c = 0; c < w; ++c) out.at(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace cyclonet
