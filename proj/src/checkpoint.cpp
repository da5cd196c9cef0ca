#include "cyclonet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclonet/errors.hpp"

namespace cyclonet {

namespace {

constexpr int kFormatVersion = 1;

using json = nlohmann::json;

json config_to_json(const NetworkConfig& c) {
  return json{{"input_size", c.input_size},
              {"conv_channels", c.conv_channels},
              {"fc_widths", c.fc_widths},
              {"dropout_rate", c.dropout_rate},
              {"l2_coeff", c.l2_coeff}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.input_size = j.at("input_size").get<int>();
  const auto cc = j.at("conv_channels").get<std::vector<int>>();
  const auto fw = j.at("fc_widths").get<std::vector<int>>();
  if (cc.size() != c.conv_channels.size() || fw.size() != c.fc_widths.size()) {
    throw IoError("checkpoint: malformed network configuration");
  }
  std::copy(cc.begin(), cc.end(), c.conv_channels.begin());
  std::copy(fw.begin(), fw.end(), c.fc_widths.begin());
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.l2_coeff = j.at("l2_coeff").get<double>();
  return c;
}

std::vector<unsigned char> tensor_le_bytes(const Tensor& t) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(t.size()) * 4);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(t[i]);
    bytes[static_cast<std::size_t>(4 * i)] = static_cast<unsigned char>(u & 0xFF);
    bytes[static_cast<std::size_t>(4 * i + 1)] = static_cast<unsigned char>((u >> 8) & 0xFF);
    bytes[static_cast<std::size_t>(4 * i + 2)] = static_cast<unsigned char>((u >> 16) & 0xFF);
    bytes[static_cast<std::size_t>(4 * i + 3)] = static_cast<unsigned char>((u >> 24) & 0xFF);
  }
  return bytes;
}

void tensor_from_le_bytes(std::span<const unsigned char> bytes, Tensor& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const std::size_t o = static_cast<std::size_t>(4 * i);
    const std::uint32_t u = static_cast<std::uint32_t>(bytes[o]) |
                            (static_cast<std::uint32_t>(bytes[o + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[o + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[o + 3]) << 24);
    t[i] = std::bit_cast<float>(u);
  }
}

}  // namespace

std::string checksum_bytes(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + buf;
}

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  std::vector<unsigned char> blob;
  for (const Param& p : model.params) {
    const std::vector<unsigned char> bytes = tensor_le_bytes(p.value);
    tensors.push_back(json{{"name", p.name},
                           {"shape", p.value.shape()},
                           {"dtype", "f32"},
                           {"offset", blob.size()},
                           {"length", bytes.size()},
                           {"checksum", checksum_bytes(bytes)},
                           {"trainable", p.trainable},
                           {"decay", p.decay}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  const json manifest{{"format_version", kFormatVersion},
                      {"kind", "model"},
                      {"config", config_to_json(model.config)},
                      {"mode", model.mode == Mode::Train ? "train" : "eval"},
                      {"data_file", "weights.bin"},
                      {"data_checksum", checksum_bytes(blob)},
                      {"tensors", tensors}};

  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError((dir / "manifest.json").string() + ": cannot open for writing");
  mf << manifest.dump(2) << '\n';
  mf.close();
  if (!mf) throw IoError((dir / "manifest.json").string() + ": write failed");

  std::ofstream bf(dir / "weights.bin", std::ios::binary);
  if (!bf) throw IoError((dir / "weights.bin").string() + ": cannot open for writing");
  bf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  bf.close();
  if (!bf) throw IoError((dir / "weights.bin").string() + ": write failed");
}

Model load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError(manifest_path.string() + ": cannot open");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": invalid JSON: " + e.what());
  }
  if (manifest.value("format_version", -1) != kFormatVersion) {
    throw IoError(manifest_path.string() + ": unknown format version");
  }
  if (manifest.value("kind", "") != "model") {
    throw IoError(manifest_path.string() + ": not a model checkpoint");
  }

  const auto blob_path = dir / manifest.value("data_file", "weights.bin");
  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw IoError(blob_path.string() + ": cannot open");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                  std::istreambuf_iterator<char>());
  if (checksum_bytes(blob) != manifest.at("data_checksum").get<std::string>()) {
    throw IoError(blob_path.string() + ": data checksum mismatch");
  }

  Model m;
  m.config = config_from_json(manifest.at("config"));
  validate(m.config);
  m.mode = manifest.value("mode", "eval") == "train" ? Mode::Train : Mode::Eval;
  for (const json& tj : manifest.at("tensors")) {
    Param p;
    p.name = tj.at("name").get<std::string>();
    p.trainable = tj.at("trainable").get<bool>();
    p.decay = tj.at("decay").get<bool>();
    const auto shape = tj.at("shape").get<std::vector<int>>();
    const std::size_t offset = tj.at("offset").get<std::size_t>();
    const std::size_t length = tj.at("length").get<std::size_t>();
    p.value = Tensor(shape);
    if (length != static_cast<std::size_t>(p.value.size()) * 4) {
      throw IoError(blob_path.string() + ": tensor '" + p.name +
                    "' length does not match its shape");
    }
    if (offset + length > blob.size()) {
      throw IoError(blob_path.string() + ": tensor '" + p.name + "' extends past end of blob");
    }
    const std::span<const unsigned char> bytes(blob.data() + offset, length);
    if (checksum_bytes(bytes) != tj.at("checksum").get<std::string>()) {
      throw IoError(blob_path.string() + ": tensor '" + p.name + "' checksum mismatch");
    }
    tensor_from_le_bytes(bytes, p.value);
    m.params.push_back(std::move(p));
  }
  return m;
}

}  // namespace cyclonet
