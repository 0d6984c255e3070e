#pragma once

// Central finite-difference check of reverse-mode gradients over every
// entry of a parameter store.

#include <cmath>
#include <functional>
#include <vector>

#include "watch/nn.hpp"

namespace watch::testing {

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / (||analytic|| + ||numeric||)
  double max_abs_error = 0.0;
  double analytic_norm = 0.0;
};

using LossBuilder = std::function<nn::Graph::Id(nn::Graph&)>;

inline double loss_value(const LossBuilder& build) {
  nn::Graph g;
  return g.scalar(build(g));
}

inline GradCheck check_gradients(nn::ParameterStore& params, const LossBuilder& build, double step = 1e-6) {
  params.zero_grad();
  {
    nn::Graph g;
    g.backward(build(g));
  }
  std::vector<double> analytic, numeric;
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      analytic.push_back(p.grad.data[i]);
      const double keep = p.value.data[i];
      p.value.data[i] = keep + step;
      const double up = loss_value(build);
      p.value.data[i] = keep - step;
      const double down = loss_value(build);
      p.value.data[i] = keep;
      numeric.push_back((up - down) / (2.0 * step));
    }
  }
  GradCheck r;
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
    r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[i] - numeric[i]));
  }
  r.analytic_norm = std::sqrt(na);
  const double denom = std::sqrt(na) + std::sqrt(nn_);
  r.relative_error = denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
  return r;
}

}  // namespace watch::testing
