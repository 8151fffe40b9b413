// Shared test scaffolding: a self-deleting scratch directory.
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "llmtd/util.hpp"

namespace testsupport {

inline std::filesystem::path make_temp_dir(const std::string& tag) {
  std::random_device rd;
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(rd()));
  std::filesystem::create_directories(dir);
  return dir;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag = "llmtd_test") : path(make_temp_dir(tag)) {}
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path file(const std::string& name, const std::string& content) const {
    const std::filesystem::path p = path / name;
    llmtd::write_file(p, content);
    return p;
  }
};

}  // namespace testsupport
