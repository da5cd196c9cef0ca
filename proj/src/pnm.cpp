#include "cyclonet/pnm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "cyclonet/errors.hpp"

namespace cyclonet {

namespace {

// Skips whitespace and '#' comment lines, then reads one unsigned integer.
int read_pnm_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError(path + ": malformed PNM header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = in.get();
  }
  return value;
}

std::uint16_t quantize16(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint16_t>(std::lround(clamped * 65535.0f));
}

std::uint8_t quantize8(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') {
    throw IoError(path.string() + ": not a binary PGM (P5) file");
  }
  const int w = read_pnm_int(in, path.string());
  const int h = read_pnm_int(in, path.string());
  const int maxval = read_pnm_int(in, path.string());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError(path.string() + ": unsupported PGM dimensions or maxval");
  }
  // header terminates with exactly one whitespace byte, already consumed by
  // read_pnm_int's trailing get()

  const bool wide = maxval > 255;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<unsigned char> raw(n * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  Image img({h, w});
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = wide ? (raw[2 * i] << 8) | raw[2 * i + 1]  // big-endian per PNM
                       : raw[i];
    img[static_cast<std::int64_t>(i)] = static_cast<float>(v) * scale;
  }
  return img;
}

void write_pgm16(const Image& image, const std::filesystem::path& path) {
  require_rank("write_pgm16", image.shape(), 2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n65535\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.size()) * 2);
  for (std::int64_t i = 0; i < image.size(); ++i) {
    const std::uint16_t v = quantize16(image[i]);
    raw[static_cast<std::size_t>(2 * i)] = static_cast<unsigned char>(v >> 8);
    raw[static_cast<std::size_t>(2 * i + 1)] = static_cast<unsigned char>(v & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_ppm8(const Image& r, const Image& g, const Image& b,
                const std::filesystem::path& path) {
  require_rank("write_ppm8", r.shape(), 2);
  require_same_shape("write_ppm8", r.shape(), g.shape());
  require_same_shape("write_ppm8", r.shape(), b.shape());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "P6\n" << r.dim(1) << ' ' << r.dim(0) << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(r.size()) * 3);
  for (std::int64_t i = 0; i < r.size(); ++i) {
    raw[static_cast<std::size_t>(3 * i)] = quantize8(r[i]);
    raw[static_cast<std::size_t>(3 * i + 1)] = quantize8(g[i]);
    raw[static_cast<std::size_t>(3 * i + 2)] = quantize8(b[i]);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace cyclonet
