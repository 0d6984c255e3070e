#pragma once

#include <span>
#include <vector>

namespace watch::robust {

// Scale factor making the MAD consistent with the standard deviation under normality.
inline constexpr double kMadToSigma = 1.4826;

// Median of `values`; the midpoint of the two central values for even counts. 0 when empty.
double median(std::span<const double> values);
// Median absolute deviation about `center`.
double mad(std::span<const double> values, double center);

struct Location {
  double median = 0.0;
  double mad = 0.0;
};
Location location(std::span<const double> values);

// (x - median) / (1.4826 * MAD + epsilon) elementwise.
std::vector<double> robust_z(std::span<const double> values, double epsilon);

}  // namespace watch::robust
