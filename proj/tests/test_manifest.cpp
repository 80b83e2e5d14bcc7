#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cfglab/manifest.hpp"
#include "doctest.h"

using namespace cfglab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cfglab_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return out;
}

}  // namespace

TEST_CASE("fnv1a64 reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(checksum_of("") == "fnv1a64:cbf29ce484222325");
}

TEST_CASE("atomic_write_file lands content and leaves no temp files") {
  TempDir tmp;
  const auto target = tmp.path / "nested" / "out.csv";
  atomic_write_file(target.string(), "a,b\n1,2\n");
  CHECK(read_file(target) == "a,b\n1,2\n");
  atomic_write_file(target.string(), "replaced");
  CHECK(read_file(target) == "replaced");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++entries;
  CHECK(entries == 1);
  CHECK(checksum_of_file(target.string()) == checksum_of("replaced"));
  CHECK_THROWS_AS((void)checksum_of_file((tmp.path / "absent").string()), std::runtime_error);
}

TEST_CASE("manifests round-trip through json") {
  RunManifest m;
  m.created = utc_timestamp();
  m.command = "compare";
  m.config_hash = checksum_of("config text");
  m.master_seed = 42;
  m.outputs["table2_analog.csv"] = checksum_of("csv body");
  m.evaluator_artifacts["align.bin"] = checksum_of("weights");
  m.status = "complete";

  const auto back = RunManifest::from_json(m.to_json());
  CHECK(back.command == m.command);
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.master_seed == 42);
  CHECK(back.outputs == m.outputs);
  CHECK(back.evaluator_artifacts == m.evaluator_artifacts);
  CHECK(back.status == "complete");
}

TEST_CASE("verify_manifest flags tampering, missing files, and unfinished runs") {
  TempDir tmp;
  const std::string dir = tmp.path.string();
  atomic_write_file((tmp.path / "out.csv").string(), "payload\n");

  RunManifest m;
  m.created = utc_timestamp();
  m.command = "compare";
  m.config_hash = checksum_of("cfg");
  m.outputs["out.csv"] = checksum_of("payload\n");
  m.status = "complete";
  write_manifest(m, dir);

  CHECK(has_manifest(dir));
  CHECK(verify_manifest(dir).empty());

  {
    std::ofstream app(tmp.path / "out.csv", std::ios::app);
    app << "tampered\n";
  }
  auto problems = verify_manifest(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("checksum mismatch") != std::string::npos);
  CHECK(problems[0].find("out.csv") != std::string::npos);

  fs::remove(tmp.path / "out.csv");
  problems = verify_manifest(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("missing") != std::string::npos);

  atomic_write_file((tmp.path / "out.csv").string(), "payload\n");
  m.status = "running";
  write_manifest(m, dir);
  problems = verify_manifest(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("running") != std::string::npos);
}

TEST_CASE("verify_manifest on an empty directory reports the absence") {
  TempDir tmp;
  CHECK_FALSE(has_manifest(tmp.path.string()));
  const auto problems = verify_manifest(tmp.path.string());
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("manifest") != std::string::npos);
}
