#include "hcmen/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "hcmen/error.hpp"
#include "json.hpp"

namespace hcmen {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore<float>& params, const ModelConfig& config,
                     const std::filesystem::path& path) {
  json tensors = json::object();
  std::size_t offset = 0;
  for (const auto& [name, t] : params) {
    tensors[name] = {{"shape", t.shape()}, {"offset", offset}, {"len", t.numel()}};
    offset += t.numel() * sizeof(float);
  }
  const json header{{"version", kCheckpointVersion},
                    {"config", json::parse(config_to_json(config, -1))},
                    {"tensors", tensors}};
  const std::string header_text = header.dump();

  std::string blob(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(blob, header_text.size());
  blob += header_text;
  blob.reserve(blob.size() + offset);
  for (const auto& [name, t] : params) {
    const auto data = t.data();
    blob.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();

  if (blob.size() < 16 || std::memcmp(blob.data(), kCheckpointMagic, 8) != 0) {
    throw LoadError("bad checkpoint magic" + where);
  }
  const std::uint64_t header_len = get_u64(blob.data() + 8);
  if (header_len > blob.size() - 16) throw LoadError("truncated checkpoint header" + where);

  json header;
  try {
    header = json::parse(blob.begin() + 16, blob.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw LoadError("malformed checkpoint header" + where + ": " + e.what());
  }

  Checkpoint ck;
  try {
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw LoadError("unsupported checkpoint version " + header.at("version").dump() + where);
    }
    ck.config = config_from_json(header.at("config").dump());
    const std::size_t payload = 16 + header_len;
    const std::size_t available = blob.size() - payload;
    std::size_t expected = 0;
    for (const auto& [name, meta] : header.at("tensors").items()) {
      const auto shape = meta.at("shape").get<Shape>();
      const auto offset = meta.at("offset").get<std::size_t>();
      const auto len = meta.at("len").get<std::size_t>();
      if (shape_numel(shape) != len) throw LoadError("tensor '" + name + "' shape/len mismatch" + where);
      if (offset + len * sizeof(float) > available) {
        throw LoadError("truncated checkpoint payload at tensor '" + name + "'" + where);
      }
      std::vector<float> values(len);
      std::memcpy(values.data(), blob.data() + payload + offset, len * sizeof(float));
      ck.params.add(name, Tensor<float>(shape, std::move(values)));
      expected = std::max(expected, offset + len * sizeof(float));
    }
    if (expected != available) throw LoadError("checkpoint payload size mismatch" + where);
  } catch (const json::exception& e) {
    throw LoadError("malformed checkpoint header" + where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config: ") + e.what());
  }
  return ck;
}

}  // namespace hcmen
