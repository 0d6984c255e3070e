#include "watch/robust.hpp"

#include <algorithm>
#include <cmath>

namespace watch::robust {

double median(std::span<const double> values) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double mad(std::span<const double> values, double center) {
  std::vector<double> dev(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::abs(values[i] - center);
  return median(dev);
}

Location location(std::span<const double> values) {
  Location loc;
  loc.median = median(values);
  loc.mad = mad(values, loc.median);
  return loc;
}

std::vector<double> robust_z(std::span<const double> values, double epsilon) {
  const auto loc = location(values);
  const double scale = kMadToSigma * loc.mad + epsilon;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - loc.median) / scale;
  return out;
}

}  // namespace watch::robust
