#include "sacc/tensor/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sacc/errors.hpp"

namespace sacc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'A', 'C', 'C', 'C', 'K', 'P', 'T'};

struct RawCheckpoint {
  nlohmann::json manifest;
  std::vector<double> payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t manifest_len = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not a checkpoint file (bad magic): " + path.string());
  }
  if (!in.read(reinterpret_cast<char*>(&manifest_len), sizeof manifest_len)) {
    throw IoError("truncated checkpoint header: " + path.string());
  }
  std::string text(manifest_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(manifest_len))) {
    throw IoError("truncated checkpoint manifest: " + path.string());
  }
  RawCheckpoint raw;
  try {
    raw.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest in " + path.string() + ": " + e.what());
  }
  if (raw.manifest.value("format_version", -1) != kCheckpointFormatVersion) {
    throw IoError("unsupported checkpoint format version in " + path.string());
  }
  std::size_t total = 0;
  for (const auto& t : raw.manifest.at("tensors")) total += t.at("count").get<std::size_t>();
  raw.payload.resize(total);
  if (!in.read(reinterpret_cast<char*>(raw.payload.data()), static_cast<std::streamsize>(total * sizeof(double)))) {
    throw IoError("truncated checkpoint payload: " + path.string());
  }
  return raw;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : store.parameters()) {
    tensors.push_back({{"name", p.name},
                       {"group", p.group},
                       {"shape", p.value.shape()},
                       {"frozen", store.is_parameter_frozen(p)},
                       {"offset", offset},
                       {"count", p.value.numel()}});
    offset += p.value.numel();
  }
  const std::string manifest =
      nlohmann::json{{"format_version", kCheckpointFormatVersion}, {"tensors", tensors}}.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const std::uint64_t len = manifest.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& p : store.parameters()) {
    auto d = p.value.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = read_raw(path);
  ParameterStore store;
  std::vector<std::string> frozen_groups;
  for (const auto& t : raw.manifest.at("tensors")) {
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = t.at("count").get<std::size_t>();
    Shape shape = t.at("shape").get<Shape>();
    if (shape_numel(shape) != count || offset + count > raw.payload.size()) {
      throw IoError("inconsistent tensor entry '" + t.at("name").get<std::string>() + "' in " + path.string());
    }
    std::vector<double> values(raw.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                               raw.payload.begin() + static_cast<std::ptrdiff_t>(offset + count));
    const auto group = t.at("group").get<std::string>();
    if (t.at("frozen").get<bool>()) frozen_groups.push_back(group);
    store.add(t.at("name").get<std::string>(), group, Tensor(std::move(shape), std::move(values)));
  }
  for (const auto& g : frozen_groups) store.freeze(g);
  return store;
}

void restore_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  ParameterStore loaded = load_checkpoint(path);
  for (auto& p : store.parameters()) {
    if (!loaded.contains(p.name)) throw IoError("checkpoint " + path.string() + " lacks parameter '" + p.name + "'");
    const Tensor& src = loaded.get(p.name);
    if (src.shape() != p.value.shape()) {
      throw DimensionError("checkpoint parameter '" + p.name + "' has shape " + shape_to_string(src.shape()) +
                           ", expected " + shape_to_string(p.value.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), p.value.data().begin());
  }
}

}  // namespace sacc
