#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "merlean/util.hpp"

namespace testsupport {

// Self-cleaning unique temp directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "merlean") {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                               std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& sub) const { return path_ / sub; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

// Map of relative path -> bytes for a directory tree, for byte-determinism
// comparisons. Paths under directories named in `skip` are excluded.
inline std::map<std::string, std::string> snapshot_tree(
    const std::filesystem::path& root,
    const std::vector<std::string>& skip = {".merlean"}) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::exists(root)) return out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = std::filesystem::relative(entry.path(), root).generic_string();
    bool skipped = false;
    for (const auto& s : skip)
      if (rel.rfind(s + "/", 0) == 0 || rel == s) skipped = true;
    if (skipped) continue;
    out[rel] = merlean::read_file(entry.path());
  }
  return out;
}

inline std::string minilean_path() {
#ifdef MINILEAN_PATH
  return MINILEAN_PATH;
#else
  return "minilean";
#endif
}

inline std::string merlean_cli_path() {
#ifdef MERLEAN_CLI_PATH
  return MERLEAN_CLI_PATH;
#else
  return "merlean";
#endif
}

inline std::string fixtures_dir() {
#ifdef MERLEAN_FIXTURES
  return MERLEAN_FIXTURES;
#else
  return "tests/fixtures";
#endif
}

}  // namespace testsupport
