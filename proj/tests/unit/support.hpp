#pragma once

// Shared fixtures for the unit tests.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "qdr/qdr.hpp"

namespace qdr::test {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("qdr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Random static dataset: p covariates (x[1] = 1 intercept when p >= 2),
// continuous distinct times, roughly 30% censoring, pscore 0.5.
inline StaticDataset random_static(Rng& rng, std::size_t n, std::size_t p = 2) {
  std::vector<StaticRecord> recs;
  bool any_event = false;
  for (std::size_t i = 0; i < n; ++i) {
    StaticRecord r;
    for (std::size_t j = 0; j < p; ++j) r.x.push_back(j == 1 ? 1.0 : rng.uniform(-1.0, 1.0));
    r.a = rng.bernoulli(0.5) ? 1 : 0;
    const double t = rng.exponential(1.0 + r.a * (r.x[0] > 0 ? 1.0 : -0.5));
    const double c = rng.exponential(0.4);
    r.y = std::min(t, c);
    r.delta = t <= c ? 1 : 0;
    any_event = any_event || r.delta == 1;
    recs.push_back(std::move(r));
  }
  if (!any_event) recs.front().delta = 1;
  return StaticDataset(std::move(recs), 0.5);
}

}  // namespace qdr::test
