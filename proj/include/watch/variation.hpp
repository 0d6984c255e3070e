#pragma once

// Cross-site feature variation per month: min-max scale each dimension,
// take the standard deviation across sites, and average over dimensions.

#include <string>
#include <vector>

#include "watch/datamodel.hpp"

namespace watch {

enum class ScaleScope {
  kGlobal,    // min/max over all sites and months, per dimension
  kPerMonth,  // min/max over sites within each month, per dimension
};

ScaleScope parse_scale_scope(const std::string& name);

struct VariationResult {
  std::vector<double> per_month;
  std::vector<std::string> warnings;
};

// Unavailable months are forward-filled from the site's last available month;
// months before a site's first observation take its first available value.
Dataset forward_fill(const Dataset& dataset);

VariationResult feature_variation(const Dataset& dataset, ScaleScope scope = ScaleScope::kGlobal);

}  // namespace watch
