#include "rulforge/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rulforge/error.hpp"

namespace rulforge {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'R', 'U', 'L', 'F', 'C', 'K', 'P', 'T'};

std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void put_floats(std::string& out, const Tensor<float>& t) {
  for (float f : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  std::string payload;
  json tensors = json::array();
  for (const auto& [name, t] : model.state()) {
    const std::size_t start = payload.size();
    put_floats(payload, *t);
    tensors.push_back({{"name", name},
                       {"shape", t->shape()},
                       {"count", t->size()},
                       {"crc32", crc32_of(payload.data() + start, payload.size() - start)}});
  }
  json manifest;
  manifest["config"] = json::parse(model.config().to_json());
  manifest["tensors"] = std::move(tensors);
  const std::string m = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.size()));
  out += m;
  out += payload;
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

Model deserialize_checkpoint(const std::string& bytes, const std::optional<TcnConfig>& expected) {
  constexpr std::size_t kHeader = sizeof kMagic + 8;
  if (bytes.size() < kHeader + 4 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptionError("checkpoint: missing magic header or file too short");
  }
  const std::uint32_t version = get_u32(bytes, sizeof kMagic);
  if (version != kCheckpointFormatVersion) {
    throw CorruptionError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t stored_crc = get_u32(bytes, bytes.size() - 4);
  if (crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw CorruptionError("checkpoint: checksum mismatch (truncated or damaged file)");
  }
  const std::size_t manifest_len = get_u32(bytes, sizeof kMagic + 4);
  if (kHeader + manifest_len + 4 > bytes.size()) {
    throw CorruptionError("checkpoint: manifest length exceeds file size");
  }

  json manifest;
  TcnConfig cfg;
  try {
    manifest = json::parse(bytes.substr(kHeader, manifest_len));
    cfg = TcnConfig::from_json(manifest.at("config").dump());
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint: bad manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw CorruptionError(std::string("checkpoint: bad config: ") + e.what());
  }
  if (expected && !(*expected == cfg)) {
    throw ConfigMismatchError("checkpoint: stored architecture " + cfg.to_json() +
                              " differs from expected " + expected->to_json());
  }

  Rng rng(0);
  Model model(cfg, rng);
  auto state = model.state();
  const auto& entries = manifest.at("tensors");
  if (entries.size() != state.size()) {
    throw CorruptionError("checkpoint: expected " + std::to_string(state.size()) +
                          " tensors, manifest lists " + std::to_string(entries.size()));
  }
  std::size_t pos = kHeader + manifest_len;
  const std::size_t payload_end = bytes.size() - 4;
  for (std::size_t i = 0; i < state.size(); ++i) {
    auto& [name, tensor] = state[i];
    const auto& e = entries[i];
    try {
      if (e.at("name").get<std::string>() != name ||
          e.at("shape").get<Shape>() != tensor->shape()) {
        throw CorruptionError("checkpoint: tensor " + std::to_string(i) + " is '" +
                              e.at("name").get<std::string>() + "', expected '" + name +
                              "' with shape " + shape_string(tensor->shape()));
      }
      const std::size_t nbytes = tensor->size() * 4;
      if (pos + nbytes > payload_end) throw CorruptionError("checkpoint: payload too short");
      if (crc32_of(bytes.data() + pos, nbytes) != e.at("crc32").get<std::uint32_t>()) {
        throw CorruptionError("checkpoint: checksum mismatch in tensor '" + name + "'");
      }
      auto data = tensor->data();
      for (std::size_t k = 0; k < data.size(); ++k) {
        data[k] = std::bit_cast<float>(get_u32(bytes, pos + 4 * k));
      }
      pos += nbytes;
    } catch (const json::exception& ex) {
      throw CorruptionError(std::string("checkpoint: bad tensor entry: ") + ex.what());
    }
  }
  if (pos != payload_end) throw CorruptionError("checkpoint: trailing bytes after payload");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, const std::optional<TcnConfig>& expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw NotFoundError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str(), expected);
}

}  // namespace rulforge
