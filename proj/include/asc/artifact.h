#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace asc {

/// Versioned binary container shared by network checkpoints, SVMs and
/// embedding models:
///
///   "ASCB" | u32 format_version | u64 header_bytes | header JSON (UTF-8)
///   | float32 LE blocks in the order listed under header["blocks"]
///
/// The header always carries "format_version", "kind" and "blocks"
/// (name + shape per block); everything else is kind-specific.
inline constexpr std::uint32_t kArtifactVersion = 1;

struct ArtifactBlock {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

struct Artifact {
  std::string kind;
  nlohmann::json header = nlohmann::json::object();
  std::vector<ArtifactBlock> blocks;

  const ArtifactBlock& block(const std::string& name) const;
  void add(std::string name, std::vector<int> shape, std::vector<float> values);
};

void write_artifact(const std::filesystem::path& path, const Artifact& artifact);

/// Throws DataError on a malformed file or when kind differs from expected_kind.
Artifact read_artifact(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace asc
