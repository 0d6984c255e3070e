#pragma once

// Training-free temporal embedding distance scorer.

#include <string>
#include <vector>

#include "watch/datamodel.hpp"

namespace watch {

enum class Distance { kL2, kCosine };
enum class FirstMonthPolicy { kZero, kCopyNext };

Distance parse_distance(const std::string& name);

struct TedConfig {
  int window = 3;
  Distance distance = Distance::kL2;
  FirstMonthPolicy first_month = FirstMonthPolicy::kZero;

  void validate() const;
};

// Coordinate-wise median of the available rows among the `window` months
// preceding t. Empty when no preceding month is available.
std::vector<double> ted_reference(const SiteSeries& series, int t, const TedConfig& cfg);

// raw[t] = distance(z'_t, reference_t); probability = per-site min-max of raw.
ScoreSeries ted_score(const SiteSeries& series, const TedConfig& cfg);

// (x - min) / (max - min); a constant input maps to 0.5 everywhere.
std::vector<double> minmax_probability(const std::vector<double>& raw);

}  // namespace watch
