#include "halunet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace halunet {
namespace {

using nlohmann::json;
constexpr const char* kFormatTag = "halunet-checkpoint";

void put_le32(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  const std::array<char, 4> bytes = {static_cast<char>(bits & 0xFF),
                                     static_cast<char>((bits >> 8) & 0xFF),
                                     static_cast<char>((bits >> 16) & 0xFF),
                                     static_cast<char>((bits >> 24) & 0xFF)};
  out.write(bytes.data(), 4);
}

float get_le32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_checkpoint(const ParamStore<float>& params, const ModelConfig& cfg, std::ostream& out) {
  const auto manifest = parameter_manifest(cfg);
  if (manifest.size() != params.size()) {
    throw Error("checkpoint: parameter store does not match model config");
  }
  json tensors = json::array();
  std::size_t total = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& e = params.entries()[i];
    if (e.name != manifest[i].name || e.value.shape != manifest[i].shape) {
      throw Error("checkpoint: parameter '" + e.name + "' does not match model config");
    }
    tensors.push_back({{"name", e.name}, {"shape", e.value.shape}});
    total += e.value.size();
  }
  json header;
  header["format"] = kFormatTag;
  header["version"] = kCheckpointVersion;
  header["config"] = json::parse(cfg.to_json());
  header["tensors"] = std::move(tensors);
  header["blob_bytes"] = total * 4;
  out << header.dump() << '\n';
  for (const auto& e : params.entries()) {
    for (float v : e.value.data) put_le32(out, v);
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint: missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (!header.is_object() || header.value("format", std::string{}) != kFormatTag) {
    throw Error("checkpoint: not a halunet checkpoint");
  }
  if (header.value("version", -1) != kCheckpointVersion) {
    throw Error("checkpoint: version mismatch (expected " + std::to_string(kCheckpointVersion) +
                ", found " + header.value("version", json(nullptr)).dump() + ")");
  }

  Checkpoint ck;
  ck.config = ModelConfig::from_json(header.at("config").dump());
  const auto manifest = parameter_manifest(ck.config);
  const auto& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != manifest.size()) {
    throw Error("checkpoint: shape manifest mismatch (tensor count)");
  }
  std::size_t total = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    Shape shape;
    std::string name;
    try {
      name = tensors[i].at("name").get<std::string>();
      shape = tensors[i].at("shape").get<Shape>();
    } catch (const json::exception& e) {
      throw Error(std::string("checkpoint: malformed manifest entry: ") + e.what());
    }
    if (name != manifest[i].name || shape != manifest[i].shape) {
      throw Error("checkpoint: shape manifest mismatch at '" + name + "' " + shape_string(shape) +
                  ", config expects '" + manifest[i].name + "' " +
                  shape_string(manifest[i].shape));
    }
    total += element_count(shape);
  }
  const auto blob_bytes = header.value("blob_bytes", std::size_t{0});
  if (blob_bytes != total * 4) throw Error("checkpoint: blob size does not match manifest");

  std::string blob(blob_bytes, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_bytes));
  if (static_cast<std::size_t>(in.gcount()) != blob_bytes) {
    throw Error("checkpoint: truncated blob (" + std::to_string(in.gcount()) + " of " +
                std::to_string(blob_bytes) + " bytes)");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error("checkpoint: trailing bytes after blob");
  }

  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (const auto& spec : manifest) {
    auto& entry = ck.params.add(spec.name, spec.shape);
    for (auto& v : entry.value.data) {
      v = get_le32(bytes);
      bytes += 4;
    }
  }
  return ck;
}

void save_checkpoint(const ParamStore<float>& params, const ModelConfig& cfg,
                     const std::filesystem::path& path) {
  std::ostringstream buf(std::ios::binary);
  write_checkpoint(params, cfg, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out << buf.str();
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace halunet
