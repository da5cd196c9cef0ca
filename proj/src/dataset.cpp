#include "cyclonet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cyclonet/errors.hpp"
#include "cyclonet/imgops.hpp"
#include "cyclonet/pnm.hpp"

namespace cyclonet {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

DatasetIndex DatasetIndex::from_samples(std::vector<CycloneSample> samples) {
  DatasetIndex idx;
  idx.samples = std::move(samples);
  idx.rebuild();
  return idx;
}

void DatasetIndex::rebuild() {
  by_storm.clear();
  by_speed.clear();
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    const CycloneSample& s = samples[static_cast<std::size_t>(i)];
    by_storm[s.storm_id].push_back(i);
    by_speed[s.wind_speed][s.storm_id].push_back(i);
  }
}

std::vector<double> DatasetIndex::distinct_speeds() const {
  std::vector<double> speeds;
  speeds.reserve(by_speed.size());
  for (const auto& [speed, storms] : by_speed) speeds.push_back(speed);
  return speeds;
}

double DatasetIndex::max_speed() const {
  if (by_speed.empty()) throw DataError("max_speed: empty dataset");
  return by_speed.rbegin()->first;
}

DatasetIndex DatasetIndex::filter_speed_range(double lo, double hi) const {
  std::vector<CycloneSample> kept;
  for (const CycloneSample& s : samples) {
    if (s.wind_speed >= lo && s.wind_speed < hi) kept.push_back(s);
  }
  return from_samples(std::move(kept));
}

DatasetIndex DatasetIndex::filter_storms(const std::vector<std::string>& storm_ids) const {
  std::vector<CycloneSample> kept;
  for (const std::string& id : storm_ids) {
    const auto it = by_storm.find(id);
    if (it == by_storm.end()) continue;
    for (int i : it->second) kept.push_back(samples[static_cast<std::size_t>(i)]);
  }
  return from_samples(std::move(kept));
}

LoadResult load_dataset(const std::filesystem::path& image_dir,
                        const std::filesystem::path& labels_csv) {
  std::ifstream in(labels_csv);
  if (!in) throw IoError(labels_csv.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(labels_csv.string() + ": empty file");
  const std::vector<std::string> header = split_csv_line(trim(line));
  if (header.size() < 3 || trim(header[0]) != "image_id" || trim(header[1]) != "storm_id" ||
      trim(header[2]) != "wind_speed") {
    throw DataError(labels_csv.string() +
                    ": header must start with image_id,storm_id,wind_speed");
  }

  LoadResult result;
  std::vector<CycloneSample> samples;
  std::map<std::string, int> seen_ids;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(stripped);
    if (fields.size() < 3) {
      result.row_errors.push_back({row, "expected at least 3 fields, got " +
                                            std::to_string(fields.size())});
      continue;
    }
    CycloneSample s;
    s.image_id = trim(fields[0]);
    s.storm_id = trim(fields[1]);
    if (!parse_double(trim(fields[2]), s.wind_speed)) {
      result.row_errors.push_back({row, "unparseable wind_speed '" + fields[2] + "'"});
      continue;
    }
    if (!(s.wind_speed > 0)) {
      result.row_errors.push_back({row, "nonpositive wind_speed " + trim(fields[2])});
      continue;
    }
    if (fields.size() > 3) s.ocean = trim(fields[3]);
    if (fields.size() > 4) parse_double(trim(fields[4]), s.relative_time);
    if (seen_ids.count(s.image_id)) {
      result.row_errors.push_back({row, "duplicate image_id '" + s.image_id + "'"});
      continue;
    }

    std::filesystem::path file = image_dir / s.image_id;
    if (!std::filesystem::exists(file)) file = image_dir / (s.image_id + ".pgm");
    if (!std::filesystem::exists(file)) {
      result.row_errors.push_back({row, "no image file for '" + s.image_id + "'"});
      continue;
    }
    try {
      s.image = read_pgm(file);
    } catch (const Error& e) {
      result.row_errors.push_back({row, e.what()});
      continue;
    }
    if (s.image.dim(0) != s.image.dim(1)) {
      result.row_errors.push_back({row, "non-square image " + s.image.shape_str()});
      continue;
    }
    seen_ids[s.image_id] = row;
    samples.push_back(std::move(s));
  }
  result.index = DatasetIndex::from_samples(std::move(samples));
  return result;
}

void write_labels_csv(const DatasetIndex& index, const std::filesystem::path& csv) {
  std::ofstream out(csv);
  if (!out) throw IoError(csv.string() + ": cannot open for writing");
  out << "image_id,storm_id,wind_speed\n";
  for (const CycloneSample& s : index.samples) {
    out << s.image_id << ',' << s.storm_id << ',';
    // labels are integer knots; keep them integral in the file
    if (s.wind_speed == std::floor(s.wind_speed)) {
      out << static_cast<long long>(s.wind_speed);
    } else {
      out << s.wind_speed;
    }
    out << '\n';
  }
  if (!out) throw IoError(csv.string() + ": write failed");
}

void save_dataset(const DatasetIndex& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (const CycloneSample& s : index.samples) {
    write_pgm16(s.image, dir / "images" / (s.image_id + ".pgm"));
  }
  write_labels_csv(index, dir / "labels.csv");
}

std::pair<DatasetIndex, DatasetIndex> event_disjoint_split(const DatasetIndex& index,
                                                           double val_fraction,
                                                           std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("event_disjoint_split: val_fraction must be in (0, 1)");
  }
  std::vector<std::string> storms;
  storms.reserve(index.by_storm.size());
  for (const auto& [id, rows] : index.by_storm) storms.push_back(id);
  if (storms.size() < 2) {
    throw DataError("event_disjoint_split: need at least 2 storms, got " +
                    std::to_string(storms.size()));
  }
  RngStream rng = RngStream(seed).fork("event-split");
  for (std::size_t i = storms.size() - 1; i > 0; --i) {
    const std::size_t j = rng.uniform_int(i + 1);
    std::swap(storms[i], storms[j]);
  }
  std::size_t val_count = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(storms.size())));
  val_count = std::clamp<std::size_t>(val_count, 1, storms.size() - 1);

  const std::vector<std::string> val_ids(storms.begin(),
                                         storms.begin() + static_cast<std::ptrdiff_t>(val_count));
  const std::vector<std::string> train_ids(storms.begin() + static_cast<std::ptrdiff_t>(val_count),
                                           storms.end());
  return {index.filter_storms(train_ids), index.filter_storms(val_ids)};
}

Image augment_rotate(const Image& image, RotationPolicy policy, RngStream& rng) {
  if (policy == RotationPolicy::QuarterTurns) {
    return quarter_turn(image, 1 + static_cast<int>(rng.uniform_int(3)));
  }
  return rotate_bilinear(image, rng.uniform(0.0, 2.0 * 3.14159265358979323846));
}

Batch sample_batch(const DatasetIndex& train, const SamplerConfig& cfg, RngStream& rng) {
  if (train.samples.empty()) throw DataError("sample_batch: empty training index");
  if (cfg.rotation_fraction < 0.0 || cfg.rotation_fraction > 1.0) {
    throw ConfigError("sample_batch: rotation_fraction must be in [0, 1]");
  }
  Batch batch;
  batch.images.reserve(train.by_speed.size());
  for (const auto& [speed, storms] : train.by_speed) {
    // stage 1: uniform over storms possessing this speed
    const std::size_t storm_pick = rng.uniform_int(storms.size());
    auto it = storms.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(storm_pick));
    // stage 2: uniform over that storm's images at this speed
    const std::vector<int>& rows = it->second;
    const int row = rows[rng.uniform_int(rows.size())];
    const CycloneSample& s = train.samples[static_cast<std::size_t>(row)];

    const bool rotate = rng.bernoulli(cfg.rotation_fraction);
    batch.images.push_back(rotate ? augment_rotate(s.image, cfg.rotation_policy, rng) : s.image);
    batch.speeds.push_back(speed);
    batch.image_ids.push_back(s.image_id);
    batch.rotated.push_back(rotate ? 1 : 0);
  }
  return batch;
}

Image render_vortex(const VortexParams& params, int size) {
  if (size <= 0) throw ConfigError("render_vortex: size must be positive");
  const double radius = size / 2.0;
  const double u = std::clamp((params.speed - 15.0) / 170.0, 0.0, 1.0);

  // monotone speed-to-structure maps: faster storms wind tighter, grow a
  // smaller darker eye, a brighter eyewall, and fainter outer banding
  const double eye_radius = (0.17 - 0.12 * u) * radius;
  const double winding = 2.0 + 6.5 * u;
  const double band_amp = 0.18 + 0.42 * (1.0 - u);
  const double wall_amp = 0.12 + 0.88 * u;
  const double wall_width = std::max(1.5, 0.32 * eye_radius);
  const double envelope_scale = (0.62 - 0.10 * u) * radius;
  const double ref_radius = 0.25 * radius;

  Image img({size, size});
  RngStream noise(params.noise_key);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dy = r - params.eye_row;
      const double dx = c - params.eye_col;
      const double rad = std::hypot(dy, dx);
      const double theta = std::atan2(dy, dx);

      const double envelope = std::exp(-rad / envelope_scale);
      const double spiral =
          0.5 * (1.0 + std::cos(2.0 * theta -
                                winding * std::log(std::max(rad, 1.0) / ref_radius) -
                                params.band_phase));
      const double outside_eye = smoothstep(0.7 * eye_radius, 1.15 * eye_radius, rad);
      const double band = band_amp * (0.35 + 0.65 * spiral) * envelope * outside_eye;
      const double wall_d = (rad - eye_radius) / wall_width;
      const double wall = wall_amp * std::exp(-wall_d * wall_d);

      double v = band + wall;
      if (params.noise_sigma > 0.0) v += params.noise_sigma * noise.normal();
      img.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("synth_generate: n must be >= 1");
  if (cfg.size <= 0 || cfg.size % 32 != 0) {
    throw ConfigError("synth_generate: size must be a positive multiple of 32");
  }
  if (!(cfg.speed_min > 0 && cfg.speed_max > cfg.speed_min)) {
    throw ConfigError("synth_generate: need 0 < speed_min < speed_max");
  }
  RngStream rng = RngStream(cfg.seed).fork("synth");
  SynthDataset out;
  std::vector<CycloneSample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.n));

  int storm_no = 0;
  while (static_cast<int>(samples.size()) < cfg.n) {
    RngStream storm_rng = rng.fork(static_cast<std::uint64_t>(storm_no));
    char storm_id[16];
    std::snprintf(storm_id, sizeof(storm_id), "s%04d", storm_no);
    const int length = 8 + static_cast<int>(storm_rng.uniform_int(17));  // 8..24 frames
    double v = storm_rng.uniform(cfg.speed_min, cfg.speed_max);
    for (int f = 0; f < length && static_cast<int>(samples.size()) < cfg.n; ++f) {
      VortexParams p;
      p.speed = std::clamp(std::round(v), cfg.speed_min, cfg.speed_max);
      const double jitter = 0.07 * cfg.size;
      p.eye_row = cfg.size / 2.0 + storm_rng.uniform(-jitter, jitter);
      p.eye_col = cfg.size / 2.0 + storm_rng.uniform(-jitter, jitter);
      p.band_phase = storm_rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      p.noise_sigma = cfg.noise_sigma;
      p.noise_key = storm_rng.next_u64();

      CycloneSample s;
      char image_id[32];
      std::snprintf(image_id, sizeof(image_id), "%s_f%03d", storm_id, f);
      s.image_id = image_id;
      s.storm_id = storm_id;
      s.wind_speed = p.speed;
      s.relative_time = f;
      s.ocean = "synthetic";
      s.image = render_vortex(p, cfg.size);
      samples.push_back(std::move(s));
      out.truth.push_back(p);

      // smooth reflected random walk keeps a storm's speeds correlated
      v += storm_rng.uniform(-7.0, 7.0);
      if (v < cfg.speed_min) v = 2.0 * cfg.speed_min - v;
      if (v > cfg.speed_max) v = 2.0 * cfg.speed_max - v;
      v = std::clamp(v, cfg.speed_min, cfg.speed_max);
    }
    ++storm_no;
  }
  out.index = DatasetIndex::from_samples(std::move(samples));
  return out;
}

double invert_speed(const Image& image, const VortexParams& latent, double lo, double hi) {
  require_rank("invert_speed", image.shape(), 2);
  const int size = image.dim(0);
  double best_speed = lo;
  double best_dist = std::numeric_limits<double>::infinity();
  for (double s = std::ceil(lo); s <= std::floor(hi); s += 1.0) {
    VortexParams p = latent;
    p.speed = s;
    p.noise_sigma = 0.0;
    const Image tmpl = render_vortex(p, size);
    double dist = 0.0;
    for (std::int64_t i = 0; i < image.size(); ++i) {
      const double d = static_cast<double>(image[i]) - static_cast<double>(tmpl[i]);
      dist += d * d;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best_speed = s;
    }
  }
  return best_speed;
}

}  // namespace cyclonet
