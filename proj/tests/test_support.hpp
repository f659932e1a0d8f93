#pragma once

#include "lorid/rng.hpp"
#include "lorid/tensor.hpp"

#include <filesystem>
#include <unistd.h>
#include <string>

namespace lorid::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lorid_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensord random_tensor(const Shape& shape, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return standard_normal(shape, rng);
}

}  // namespace lorid::test
