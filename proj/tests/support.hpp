#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "umfi/core_data.hpp"
#include "umfi/random.hpp"

namespace testing {

inline umfi::Matrix gaussian_matrix(std::size_t n, std::size_t p, umfi::Rng& rng) {
  umfi::Matrix m(n, p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline std::vector<std::string> names(std::size_t p, const std::string& prefix = "x") {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < p; ++j) out.push_back(prefix + std::to_string(j + 1));
  return out;
}

// y = f(row of x) on Gaussian features.
inline umfi::Dataset regression_data(std::size_t n, std::size_t p, std::uint64_t seed,
                                     const std::function<double(const umfi::Matrix&, std::size_t, umfi::Rng&)>& f) {
  umfi::Rng rng{umfi::SeedSpec(seed)};
  umfi::Matrix x = gaussian_matrix(n, p, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = f(x, i, rng);
  return umfi::Dataset(std::move(x), names(p), umfi::Response::regression(std::move(y)));
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("umfi_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
