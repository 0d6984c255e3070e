#include "watch/variation.hpp"

#include <cmath>
#include <limits>

#include "watch/error.hpp"

namespace watch {

ScaleScope parse_scale_scope(const std::string& name) {
  if (name == "global") return ScaleScope::kGlobal;
  if (name == "per-month") return ScaleScope::kPerMonth;
  fail(ErrorCode::kValidation, "unknown scaling scope '" + name + "' (expected global or per-month)");
}

Dataset forward_fill(const Dataset& dataset) {
  Dataset out = dataset;
  for (auto& s : out.series) {
    long last = -1;
    for (std::size_t t = 0; t < s.length(); ++t) {
      if (s.is_available(t)) {
        last = static_cast<long>(t);
      } else if (last >= 0) {
        const auto src = s.row(static_cast<std::size_t>(last));
        std::copy(src.begin(), src.end(), s.row(t).begin());
      }
    }
    long first = -1;
    for (std::size_t t = 0; t < s.length() && first < 0; ++t) {
      if (s.is_available(t)) first = static_cast<long>(t);
    }
    if (first < 0) fail(ErrorCode::kValidation, "site '" + s.site_id + "' has no available month to fill from");
    for (long t = 0; t < first; ++t) {
      const auto src = s.row(static_cast<std::size_t>(first));
      std::copy(src.begin(), src.end(), s.row(static_cast<std::size_t>(t)).begin());
    }
    std::fill(s.available.begin(), s.available.end(), 1);
  }
  return out;
}

VariationResult feature_variation(const Dataset& dataset, ScaleScope scope) {
  VariationResult res;
  const std::size_t t_len = static_cast<std::size_t>(dataset.axis.length);
  const std::size_t d = dataset.dim;
  const std::size_t n = dataset.series.size();
  res.per_month.assign(t_len, 0.0);
  if (n < 2) {
    res.warnings.push_back("fewer than two sites: cross-site variation is undefined, reporting zeros");
    return res;
  }
  const Dataset filled = forward_fill(dataset);

  const auto minmax = [&](std::size_t j, std::size_t t_begin, std::size_t t_end) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : filled.series) {
      for (std::size_t t = t_begin; t < t_end; ++t) {
        lo = std::min(lo, s.row(t)[j]);
        hi = std::max(hi, s.row(t)[j]);
      }
    }
    return std::pair{lo, hi};
  };
  std::vector<std::pair<double, double>> global(d);
  if (scope == ScaleScope::kGlobal) {
    for (std::size_t j = 0; j < d; ++j) global[j] = minmax(j, 0, t_len);
  }

  std::vector<double> scaled(n);
  for (std::size_t t = 0; t < t_len; ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const auto [lo, hi] = scope == ScaleScope::kGlobal ? global[j] : minmax(j, t, t + 1);
      const double range = hi - lo;
      double mean = 0.0;
      bool uniform = true;
      for (std::size_t i = 0; i < n; ++i) {
        // A constant dimension scales to 0 everywhere.
        scaled[i] = range > 0.0 ? (filled.series[i].row(t)[j] - lo) / range : 0.0;
        mean += scaled[i];
        uniform = uniform && scaled[i] == scaled[0];
      }
      if (uniform) continue;  // exact zero rather than a rounding residue
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : scaled) var += (v - mean) * (v - mean);
      acc += std::sqrt(var / static_cast<double>(n));
    }
    res.per_month[t] = acc / static_cast<double>(d);
  }
  return res;
}

}  // namespace watch
