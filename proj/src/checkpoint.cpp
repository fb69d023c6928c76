#include "deixis/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace deixis {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'I', 'X', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

nlohmann::json Checkpoint::meta() const {
  return nlohmann::json::parse(meta_json);
}

const Tensor& Checkpoint::require(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
  return it->second;
}

void save_checkpoint(
    const std::string& path, const nlohmann::json& meta,
    const std::vector<std::pair<std::string, Tensor>>& tensors) {
  nlohmann::json header;
  header["format"] = kFormatVersion;
  header["meta"] = meta;
  auto& table = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["offset"] = offset;
    entry["count"] = tensor.size();
    table.push_back(std::move(entry));
    offset += tensor.size() * sizeof(double);
  }
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, header_bytes.size());
  out.write(header_bytes.data(),
            static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, tensor] : tensors) {
    auto values = tensor.data();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint64_t header_size = read_u64(in);
  std::string header_bytes(header_size, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw std::runtime_error("checkpoint: truncated header in '" + path + "'");

  nlohmann::json header = nlohmann::json::parse(header_bytes);
  if (header.at("format").get<int>() != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version");

  Checkpoint ckpt;
  ckpt.meta_json = header.at("meta").dump();
  const std::streampos payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t count = entry.at("count").get<std::uint64_t>();
    std::vector<double> values(count);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in)
      throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    ckpt.tensors.emplace(name, Tensor::from(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace deixis
