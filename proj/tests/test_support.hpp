#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "apbias/apstore.hpp"

namespace apbias::testkit {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("apbias_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Legendre symbol by enumerating squares.
inline std::vector<int> brute_legendre_table(std::uint64_t p) {
  std::vector<int> chi(p, -1);
  chi[0] = 0;
  for (std::uint64_t y = 1; y < p; ++y) chi[y * y % p] = 1;
  return chi;
}

// -a_p by counting affine points of y^2 = x^3 + ax + b.
inline std::int64_t brute_neg_ap(std::uint64_t a, std::uint64_t b, std::uint64_t p) {
  std::vector<std::int64_t> square_count(p, 0);
  for (std::uint64_t y = 0; y < p; ++y) ++square_count[y * y % p];
  std::int64_t points = 0;
  for (std::uint64_t x = 0; x < p; ++x) points += square_count[(x * x % p * x + a * x + b) % p];
  return points - static_cast<std::int64_t>(p);
}

}  // namespace apbias::testkit
