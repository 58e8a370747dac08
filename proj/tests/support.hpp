#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "bmm/feature_matrix.hpp"

namespace bmm::test {

inline FeatureMatrix features_from(const std::vector<std::vector<double>>& rows,
                                   const std::string& label = "ds") {
  FeatureMatrix f;
  f.n = rows.size();
  f.d = rows.empty() ? 0 : rows.front().size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (double v : rows[i]) f.values.push_back(static_cast<float>(v));
    f.sample_ids.push_back("r" + std::to_string(i));
    f.dataset_labels.push_back(label);
  }
  return f;
}

inline FeatureMatrix random_features(std::size_t n, std::size_t d, std::uint64_t seed,
                                     double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    for (auto& v : r) v = g(rng);
  }
  auto f = features_from(rows);
  for (std::size_t i = 0; i < n; ++i) f.dataset_labels[i] = "ds" + std::to_string(i % 3);
  return f;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("bmm-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

}  // namespace bmm::test
