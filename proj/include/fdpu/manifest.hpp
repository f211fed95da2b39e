#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fdpu::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64-bit digest of the canonicalized (key-sorted) config JSON.
std::string config_hash(const nlohmann::json& config);

// ISO-8601 UTC timestamp. Lives only in the manifest; report and table files
// carry no wall-clock data so seeded reruns are byte-identical.
std::string iso8601_utc_now();

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t root_seed = 0;
  std::string tool_version = kToolVersion;
  std::string timestamp;
  std::vector<std::string> outputs;
  double elapsed_seconds = 0.0;

  nlohmann::json to_json() const;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace fdpu::cli
