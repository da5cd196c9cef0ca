#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cyclonet/rng.hpp"
#include "cyclonet/tensor.hpp"

namespace cyclonet {

// One labeled satellite image.
struct CycloneSample {
  std::string image_id;
  std::string storm_id;
  Image image;             // [H,W], values in [0,1]
  double wind_speed = 0;   // knots, > 0; integer-valued in practice
  std::string ocean;       // optional tag, never used as a feature
  double relative_time = 0;  // optional, never used as a feature
};

// Immutable-after-build collection with storm and wind-speed indices. The
// speed index maps each distinct speed to the storms possessing it and their
// sample positions, which is exactly the structure the two-stage sampler
// draws from.
struct DatasetIndex {
  std::vector<CycloneSample> samples;
  std::map<std::string, std::vector<int>> by_storm;
  std::map<double, std::map<std::string, std::vector<int>>> by_speed;

  static DatasetIndex from_samples(std::vector<CycloneSample> samples);
  void rebuild();

  std::size_t size() const { return samples.size(); }
  std::vector<double> distinct_speeds() const;
  double max_speed() const;
  // Sub-index of samples whose speed lies in [lo, hi).
  DatasetIndex filter_speed_range(double lo, double hi) const;
  // Sub-index of the given storms (ids absent from the index are ignored).
  DatasetIndex filter_storms(const std::vector<std::string>& storm_ids) const;
};

struct RowError {
  int row = 0;  // 1-based CSV data row
  std::string message;
};

struct LoadResult {
  DatasetIndex index;
  std::vector<RowError> row_errors;
};

// Loads labels_csv (columns image_id, storm_id, wind_speed and optional
// ocean, relative_time) and one image per row from image_dir. Bad rows
// (missing or unreadable file, non-square image, nonpositive speed,
// duplicate image_id) are collected in row_errors; good rows load.
LoadResult load_dataset(const std::filesystem::path& image_dir,
                        const std::filesystem::path& labels_csv);

// Writes index.samples as images/<image_id>.pgm plus labels.csv under dir.
void save_dataset(const DatasetIndex& index, const std::filesystem::path& dir);

void write_labels_csv(const DatasetIndex& index, const std::filesystem::path& csv);

// Random storm-level partition: the two halves share no storm_id and jointly
// cover every sample. val_fraction applies to the storm count.
std::pair<DatasetIndex, DatasetIndex> event_disjoint_split(const DatasetIndex& index,
                                                           double val_fraction,
                                                           std::uint64_t seed);

enum class RotationPolicy { QuarterTurns, ArbitraryAngle };

struct SamplerConfig {
  double rotation_fraction = 0.5;
  RotationPolicy rotation_policy = RotationPolicy::QuarterTurns;
};

struct Batch {
  std::vector<Image> images;
  std::vector<double> speeds;
  std::vector<std::string> image_ids;
  std::vector<std::uint8_t> rotated;
};

// One debiased training batch: exactly one image per distinct wind speed in
// the index; for each speed a storm possessing it is drawn uniformly, then
// an image of that storm at that speed uniformly. Each element is rotated
// independently with probability rotation_fraction.
Batch sample_batch(const DatasetIndex& train, const SamplerConfig& cfg, RngStream& rng);

// Quarter-turn policy rotates by 90/180/270 degrees chosen uniformly
// (lossless); arbitrary-angle rotates bilinearly by a uniform angle with
// zero fill. The wind-speed label is rotation-invariant.
Image augment_rotate(const Image& image, RotationPolicy policy, RngStream& rng);

// Latent parameters of one synthetic vortex image. Everything except `speed`
// is nuisance structure; the eye radius, spiral winding, band amplitude and
// eyewall brightness are deterministic functions of the speed.
struct VortexParams {
  double speed = 0;  // knots
  double eye_row = 0, eye_col = 0;
  double band_phase = 0;
  double noise_sigma = 0;
  std::uint64_t noise_key = 0;
};

Image render_vortex(const VortexParams& params, int size);

struct SynthConfig {
  int n = 1000;
  int size = 64;
  std::uint64_t seed = 0;
  double speed_min = 15;
  double speed_max = 185;
  double noise_sigma = 0.03;
};

struct SynthDataset {
  DatasetIndex index;
  std::vector<VortexParams> truth;  // aligned with index.samples
};

// Deterministic synthetic dataset: storms are runs of consecutive frames
// sharing a storm_id whose integer speed follows a reflected random walk
// over [speed_min, speed_max].
SynthDataset synth_generate(const SynthConfig& cfg);

// Brute-force generator inversion: renders a noiseless template at every
// integer speed in [lo, hi] using the image's remaining latent parameters
// and returns the L2-closest speed.
double invert_speed(const Image& image, const VortexParams& latent, double lo, double hi);

}  // namespace cyclonet
