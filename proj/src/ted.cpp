#include "watch/ted.hpp"

#include <algorithm>
#include <cmath>

#include "watch/error.hpp"
#include "watch/kernels.hpp"
#include "watch/robust.hpp"

namespace watch {

namespace {

double distance(std::span<const double> a, std::span<const double> b, Distance kind) {
  if (kind == Distance::kL2) return std::sqrt(kernels::squared_distance(a, b));
  const double na = kernels::dot(a, a);
  const double nb = kernels::dot(b, b);
  // A zero vector carries no direction, so no direction change is detectable.
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double cos = kernels::dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
  return 1.0 - std::clamp(cos, -1.0, 1.0);
}

}  // namespace

Distance parse_distance(const std::string& name) {
  if (name == "l2" || name == "L2") return Distance::kL2;
  if (name == "cosine") return Distance::kCosine;
  fail(ErrorCode::kUsage, "unknown distance '" + name + "' (expected l2 or cosine)");
}

void TedConfig::validate() const {
  if (window < 1) fail(ErrorCode::kValidation, "TED window must be >= 1");
}

std::vector<double> ted_reference(const SiteSeries& series, int t, const TedConfig& cfg) {
  std::vector<std::size_t> rows;
  for (int u = std::max(0, t - cfg.window); u < t; ++u) {
    if (series.is_available(static_cast<std::size_t>(u))) rows.push_back(static_cast<std::size_t>(u));
  }
  if (rows.empty()) return {};
  std::vector<double> ref(series.dim);
  std::vector<double> column(rows.size());
  for (std::size_t j = 0; j < series.dim; ++j) {
    for (std::size_t k = 0; k < rows.size(); ++k) column[k] = series.row(rows[k])[j];
    ref[j] = robust::median(column);
  }
  return ref;
}

ScoreSeries ted_score(const SiteSeries& series, const TedConfig& cfg) {
  cfg.validate();
  const int len = static_cast<int>(series.length());
  ScoreSeries out;
  out.site_id = series.site_id;
  out.scorer_tag = cfg.distance == Distance::kL2 ? "ted-l2" : "ted-cosine";
  out.raw.assign(static_cast<std::size_t>(len), 0.0);
  std::vector<bool> scored(static_cast<std::size_t>(len), false);
  for (int t = 0; t < len; ++t) {
    const auto ref = ted_reference(series, t, cfg);
    if (ref.empty()) continue;
    out.raw[static_cast<std::size_t>(t)] = distance(series.row(static_cast<std::size_t>(t)), ref, cfg.distance);
    scored[static_cast<std::size_t>(t)] = true;
  }
  if (cfg.first_month == FirstMonthPolicy::kCopyNext) {
    // Months with no history take the score of the next scored month.
    for (int t = len - 2; t >= 0; --t) {
      if (!scored[static_cast<std::size_t>(t)]) out.raw[static_cast<std::size_t>(t)] = out.raw[static_cast<std::size_t>(t + 1)];
    }
  }
  out.probability = minmax_probability(out.raw);
  return out;
}

std::vector<double> minmax_probability(const std::vector<double>& raw) {
  std::vector<double> p(raw.size(), 0.5);
  if (raw.empty()) return p;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return p;
  for (std::size_t i = 0; i < raw.size(); ++i) p[i] = (raw[i] - *lo) / range;
  return p;
}

}  // namespace watch
