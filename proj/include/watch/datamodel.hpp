#pragma once

// Core domain types: monthly time axis, per-site embedding series, labels,
// dataset container, and per-site score series.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace watch {

struct TimeAxis {
  int origin_year = 2017;
  int origin_month = 1;  // 1..12
  int length = 96;

  void validate() const;
  int calendar_month(int t) const { return ((origin_month - 1 + t) % 12) + 1; }
  int year_of(int t) const { return origin_year + (origin_month - 1 + t) / 12; }
  // Zero-based index of (year, month); throws when outside [origin, origin + length).
  int month_index(int year, int month) const;
  bool contains(int t) const { return t >= 0 && t < length; }

  friend bool operator==(const TimeAxis&, const TimeAxis&) = default;
};

// One site's T x d monthly feature matrix. Rows for unavailable months are
// kept (values unspecified) and flagged rather than NaN-filled.
struct SiteSeries {
  std::string site_id;
  TimeAxis axis;
  std::size_t dim = 0;
  std::vector<double> values;          // row-major, axis.length * dim
  std::vector<std::uint8_t> available;  // axis.length

  SiteSeries() = default;
  // Zero-valued, every month available.
  SiteSeries(std::string id, TimeAxis ax, std::size_t d);

  std::size_t length() const { return static_cast<std::size_t>(axis.length); }
  std::span<const double> row(std::size_t t) const { return {values.data() + t * dim, dim}; }
  std::span<double> row(std::size_t t) { return {values.data() + t * dim, dim}; }
  bool is_available(std::size_t t) const { return available[t] != 0; }
  std::size_t missing_count() const;
};

struct SiteLabel {
  std::string site_id;
  bool looted = false;
  std::optional<int> event_month;  // month index, only when looted
};

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct Dataset {
  TimeAxis axis;
  std::size_t dim = 0;
  std::vector<SiteSeries> series;
  std::vector<SiteLabel> labels;
  std::map<std::string, Split> splits;
  // Multi-grid datasets map each grid cell's series to its parent site.
  std::map<std::string, std::string> groups;

  // Checks every cross-object invariant and rebuilds the lookup index.
  void validate();

  const SiteSeries* find(const std::string& site_id) const;
  const SiteLabel* label_for(const std::string& site_id) const;
  std::optional<Split> split_of(const std::string& site_id) const;
  std::string group_of(const std::string& site_id) const;
  std::size_t missing_count() const;

 private:
  std::map<std::string, std::size_t> series_index_;
  std::map<std::string, std::size_t> label_index_;
};

struct ScoreSeries {
  std::string site_id;
  std::vector<double> raw;
  std::vector<double> probability;
  std::string scorer_tag;
};

// Manifest + per-site series files.
Dataset load_dataset(const std::filesystem::path& manifest_path);
// Merges the "sites" (split, group) and "labels" entries of a manifest-shaped
// JSON file into an existing dataset.
void load_annotations(Dataset& dataset, const std::filesystem::path& path);
// Writes `dir`/manifest.json and `dir`/series/NNNNNN.wtch; returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Binary "WTCH" series file, or CSV when the path ends in .csv.
SiteSeries read_series_file(const std::filesystem::path& path, const std::string& site_id,
                            const TimeAxis& axis);
std::vector<std::uint8_t> encode_series(const SiteSeries& series);
void write_series_file(const std::filesystem::path& path, const SiteSeries& series);

// Score files: CSV with header `t,raw,probability`.
void write_score_file(const std::filesystem::path& path, const ScoreSeries& scores);
ScoreSeries read_score_file(const std::filesystem::path& path, const std::string& site_id);

// A score directory holds one score file per site plus index.csv mapping
// site_id to file name (site ids are not assumed to be filename-safe).
void write_score_dir(const std::filesystem::path& dir, const std::vector<ScoreSeries>& scores);
std::vector<ScoreSeries> read_score_dir(const std::filesystem::path& dir);

}  // namespace watch
