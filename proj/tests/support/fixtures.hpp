#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "watch/datamodel.hpp"
#include "watch/random.hpp"

namespace watch::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("watch-" + tag + "-" + std::to_string(rd()));
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

inline SiteSeries random_series(const std::string& id, int length, std::size_t dim, Rng& rng) {
  TimeAxis axis;
  axis.length = length;
  SiteSeries s(id, axis, dim);
  for (double& v : s.values) v = static_cast<float>(rng.normal());
  return s;
}

inline SiteSeries series_from(const std::vector<double>& values, std::size_t dim, const std::string& id = "s") {
  TimeAxis axis;
  axis.length = static_cast<int>(values.size() / dim);
  SiteSeries s(id, axis, dim);
  s.values = values;
  return s;
}

}  // namespace watch::testing
