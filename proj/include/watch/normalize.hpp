#pragma once

// Calendar-aware two-stage standardization, calendar-month mean imputation,
// and cross-grid normalization/pooling for multi-grid sites.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "watch/datamodel.hpp"

namespace watch {

inline constexpr double kDefaultEpsilon = 1e-6;

struct CalendarStats {
  std::size_t dim = 0;
  double epsilon = kDefaultEpsilon;
  std::array<std::vector<double>, 12> month_mean;  // index = calendar month - 1
  std::array<std::vector<double>, 12> month_std;
  std::vector<double> global_mean;
  std::vector<double> global_std;
  std::string population = "all";  // which sites the stats were fitted on

  std::uint64_t fingerprint() const;
};

// Fills unavailable rows with the cross-site, cross-year mean of the same
// calendar month. Availability flags are kept so imputed rows stay auditable.
Dataset impute_missing(const Dataset& dataset);
double missing_fraction(const Dataset& dataset);

// Fits both stages. When `only` is set, just sites in that split contribute.
CalendarStats fit_calendar_stats(const Dataset& dataset, double epsilon = kDefaultEpsilon,
                                 std::optional<Split> only = std::nullopt);

SiteSeries apply_two_stage(const SiteSeries& series, const CalendarStats& stats);
Dataset apply_two_stage(const Dataset& dataset, const CalendarStats& stats);

std::vector<std::uint8_t> encode_stats(const CalendarStats& stats);
CalendarStats decode_stats(std::span<const std::uint8_t> bytes, const std::string& context = "stats");
void save_stats(const std::filesystem::path& path, const CalendarStats& stats);
CalendarStats load_stats(const std::filesystem::path& path);

using GridScores = std::vector<std::vector<double>>;  // G rows x T months

// Per month: subtract the cross-grid mean and divide by (cross-grid population std + epsilon).
// A single grid yields zeros.
GridScores cross_grid_normalize(const GridScores& grid_scores, double epsilon = kDefaultEpsilon);

enum class PoolMode { kMax, kMean };
PoolMode parse_pool_mode(const std::string& name);
std::vector<double> pool_site(const GridScores& grid_scores, PoolMode mode);

}  // namespace watch
