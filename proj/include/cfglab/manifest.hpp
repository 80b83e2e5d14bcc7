#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cfglab {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a over raw bytes; the checksums in manifests are "fnv1a64:" + 16 hex digits
std::uint64_t fnv1a64(std::string_view bytes);
std::string checksum_of(std::string_view bytes);
std::string checksum_of_file(const std::string& path);  // throws on IO failure

// write-to-temp-then-rename in the target's directory, so readers never see a
// partial file
void atomic_write_file(const std::string& path, const std::string& content);

// Record of one run: what produced it and the checksum of every artifact.
// Written with status "running" before any compute and finalized to "complete",
// so an interrupted run is distinguishable from a finished one.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string created;  // UTC, second resolution
  std::string command;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::map<std::string, std::string> evaluator_artifacts;  // relative path -> checksum
  std::map<std::string, std::string> outputs;              // relative path -> checksum
  std::string status = "running";

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

std::string utc_timestamp();

// dir/manifest.json, atomically
void write_manifest(const RunManifest& manifest, const std::string& dir);
RunManifest load_manifest(const std::string& dir);
bool has_manifest(const std::string& dir);

// re-hashes every file the manifest lists; returns one line per problem
// (missing file, checksum mismatch, unfinished status), empty when clean
std::vector<std::string> verify_manifest(const std::string& dir);

}  // namespace cfglab
