#include "asc/artifact.h"

#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "asc/binio.h"
#include "asc/error.h"

namespace asc {
namespace {

constexpr char kMagic[4] = {'A', 'S', 'C', 'B'};

std::size_t element_count(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

}  // namespace

const ArtifactBlock& Artifact::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw DataError("artifact '" + kind + "' has no block '" + name + "'");
}

void Artifact::add(std::string name, std::vector<int> shape, std::vector<float> values) {
  if (element_count(shape) != values.size()) {
    throw std::logic_error("artifact block '" + name + "' shape does not match its size");
  }
  blocks.push_back({std::move(name), std::move(shape), std::move(values)});
}

void write_artifact(const std::filesystem::path& path, const Artifact& artifact) {
  nlohmann::json header = artifact.header;
  header["format_version"] = kArtifactVersion;
  header["kind"] = artifact.kind;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : artifact.blocks) blocks.push_back({{"name", b.name}, {"shape", b.shape}});
  header["blocks"] = blocks;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, 4);
  binio::write_u32(out, kArtifactVersion);
  binio::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : artifact.blocks) binio::write_f32(out, b.values);
  if (!out) throw DataError("write failed for " + path.string());
}

Artifact read_artifact(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path.string() + ": not an artifact file");
  }
  const std::uint32_t version = binio::read_u32(in);
  if (version != kArtifactVersion) {
    throw DataError(path.string() + ": unsupported artifact version " + std::to_string(version));
  }
  const std::uint64_t header_len = binio::read_u64(in);
  if (header_len > (1u << 28)) throw DataError(path.string() + ": implausible header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw DataError(path.string() + ": truncated header");
  }

  Artifact art;
  try {
    art.header = nlohmann::json::parse(text);
    art.kind = art.header.at("kind").get<std::string>();
    if (art.kind != expected_kind) {
      throw DataError(path.string() + ": expected a '" + expected_kind + "' artifact, found '" +
                      art.kind + "'");
    }
    for (const auto& b : art.header.at("blocks")) {
      ArtifactBlock block;
      block.name = b.at("name").get<std::string>();
      block.shape = b.at("shape").get<std::vector<int>>();
      block.values.resize(element_count(block.shape));
      binio::read_f32(in, block.values);
      art.blocks.push_back(std::move(block));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  return art;
}

}  // namespace asc
