#include "fdpu/manifest.hpp"

#include <cinttypes>
#include <cstdio>
#include <ctime>

#include "fdpu/io.hpp"

namespace fdpu::cli {

std::string config_hash(const nlohmann::json& config) {
  const std::string canon = config.dump();  // object keys are sorted
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["root_seed"] = root_seed;
  j["tool_version"] = tool_version;
  j["timestamp"] = timestamp;
  j["outputs"] = outputs;
  j["elapsed_seconds"] = elapsed_seconds;
  return j;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  io::write_text_file(path, manifest.to_json().dump(2) + "\n");
}

}  // namespace fdpu::cli
