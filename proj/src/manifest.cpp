#include "cfglab/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cfglab {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string checksum_of(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string checksum_of_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checksum_of(buf.str());
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string RunManifest::to_json() const {
  json j;
  j["tool_version"] = tool_version;
  j["created"] = created;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["master_seed"] = master_seed;
  j["evaluator_artifacts"] = evaluator_artifacts;
  j["outputs"] = outputs;
  j["status"] = status;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  const json j = json::parse(text);
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.created = j.at("created").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.evaluator_artifacts = j.at("evaluator_artifacts").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.status = j.at("status").get<std::string>();
  return m;
}

void write_manifest(const RunManifest& manifest, const std::string& dir) {
  atomic_write_file((fs::path(dir) / "manifest.json").string(), manifest.to_json());
}

RunManifest load_manifest(const std::string& dir) {
  const fs::path path = fs::path(dir) / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("no manifest at '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return RunManifest::from_json(buf.str());
}

bool has_manifest(const std::string& dir) {
  return fs::exists(fs::path(dir) / "manifest.json");
}

std::vector<std::string> verify_manifest(const std::string& dir) {
  std::vector<std::string> problems;
  RunManifest m;
  try {
    m = load_manifest(dir);
  } catch (const std::exception& e) {
    problems.emplace_back(e.what());
    return problems;
  }
  if (m.status != "complete") problems.push_back("run status is '" + m.status + "'");
  auto check = [&](const std::map<std::string, std::string>& files) {
    for (const auto& [rel, expected] : files) {
      const fs::path path = fs::path(dir) / rel;
      if (!fs::exists(path)) {
        problems.push_back("missing: " + rel);
        continue;
      }
      const std::string actual = checksum_of_file(path.string());
      if (actual != expected)
        problems.push_back("checksum mismatch: " + rel + " expected " + expected + " got " +
                           actual);
    }
  };
  check(m.evaluator_artifacts);
  check(m.outputs);
  return problems;
}

}  // namespace cfglab
