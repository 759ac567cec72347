#pragma once

#include "kgaudit/numkit.hpp"
#include "kgaudit/rng.hpp"

#include <filesystem>
#include <string>

namespace test {

inline kgaudit::Matrix random_matrix(kgaudit::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  kgaudit::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

inline std::filesystem::path data_dir() { return KGAUDIT_TEST_DATA; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("kgaudit-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
