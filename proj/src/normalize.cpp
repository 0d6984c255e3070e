#include "watch/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "watch/binio.hpp"
#include "watch/error.hpp"

namespace watch {

namespace {

constexpr std::uint16_t kStatsVersion = 1;

struct Moments {
  std::vector<double> sum, sumsq;
  std::size_t count = 0;
  explicit Moments(std::size_t d) : sum(d, 0.0), sumsq(d, 0.0) {}
};

// Two-pass population mean/std per dimension over the rows in `rows`.
void mean_std(const std::vector<std::span<const double>>& rows, std::size_t dim, std::vector<double>& mean,
              std::vector<double>& stdev) {
  mean.assign(dim, 0.0);
  stdev.assign(dim, 0.0);
  if (rows.empty()) return;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < dim; ++j) mean[j] += r[j];
  }
  const double n = static_cast<double>(rows.size());
  for (double& m : mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double dv = r[j] - mean[j];
      stdev[j] += dv * dv;
    }
  }
  for (double& s : stdev) s = std::sqrt(s / n);
}

void stage_one(std::span<const double> in, std::span<double> out, const CalendarStats& stats, int calendar_month) {
  const auto& mu = stats.month_mean[calendar_month - 1];
  const auto& sd = stats.month_std[calendar_month - 1];
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mu[j]) / (sd[j] + stats.epsilon);
}

}  // namespace

double missing_fraction(const Dataset& dataset) {
  std::size_t total = 0;
  for (const auto& s : dataset.series) total += s.length();
  return total == 0 ? 0.0 : static_cast<double>(dataset.missing_count()) / static_cast<double>(total);
}

Dataset impute_missing(const Dataset& dataset) {
  if (dataset.missing_count() == 0) return dataset;
  const std::size_t d = dataset.dim;
  std::array<std::vector<double>, 12> sum;
  std::array<std::size_t, 12> count{};
  for (auto& s : sum) s.assign(d, 0.0);
  for (const auto& s : dataset.series) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      if (!s.is_available(t)) continue;
      const int m = dataset.axis.calendar_month(static_cast<int>(t)) - 1;
      const auto row = s.row(t);
      for (std::size_t j = 0; j < d; ++j) sum[m][j] += row[j];
      ++count[m];
    }
  }
  Dataset out = dataset;
  for (auto& s : out.series) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      if (s.is_available(t)) continue;
      const int m = out.axis.calendar_month(static_cast<int>(t)) - 1;
      if (count[m] == 0) {
        fail(ErrorCode::kValidation,
             "cannot impute: calendar month " + std::to_string(m + 1) + " has no observations in the dataset");
      }
      auto row = s.row(t);
      for (std::size_t j = 0; j < d; ++j) row[j] = sum[m][j] / static_cast<double>(count[m]);
    }
  }
  out.validate();
  return out;
}

CalendarStats fit_calendar_stats(const Dataset& dataset, double epsilon, std::optional<Split> only) {
  if (!(epsilon > 0.0)) fail(ErrorCode::kValidation, "epsilon must be positive");
  CalendarStats st;
  st.dim = dataset.dim;
  st.epsilon = epsilon;
  st.population = only ? split_name(*only) : "all";

  std::vector<const SiteSeries*> population;
  for (const auto& s : dataset.series) {
    if (!only || dataset.split_of(s.site_id) == only) population.push_back(&s);
  }
  if (population.empty()) fail(ErrorCode::kValidation, "no sites in the fitting population");

  std::array<std::vector<std::span<const double>>, 12> by_month;
  for (const auto* s : population) {
    for (std::size_t t = 0; t < s->length(); ++t) {
      by_month[dataset.axis.calendar_month(static_cast<int>(t)) - 1].push_back(s->row(t));
    }
  }
  for (int m = 0; m < 12; ++m) mean_std(by_month[m], st.dim, st.month_mean[m], st.month_std[m]);

  std::vector<double> pooled;
  pooled.reserve(population.size() * static_cast<std::size_t>(dataset.axis.length) * st.dim);
  std::vector<std::span<const double>> rows;
  for (const auto* s : population) {
    for (std::size_t t = 0; t < s->length(); ++t) {
      const std::size_t off = pooled.size();
      pooled.resize(off + st.dim);
      stage_one(s->row(t), {pooled.data() + off, st.dim}, st, dataset.axis.calendar_month(static_cast<int>(t)));
    }
  }
  for (std::size_t off = 0; off < pooled.size(); off += st.dim) rows.emplace_back(pooled.data() + off, st.dim);
  mean_std(rows, st.dim, st.global_mean, st.global_std);
  return st;
}

SiteSeries apply_two_stage(const SiteSeries& series, const CalendarStats& stats) {
  if (series.dim != stats.dim) {
    fail(ErrorCode::kValidation, "dimension mismatch: series d=" + std::to_string(series.dim) +
                                     ", stats d=" + std::to_string(stats.dim));
  }
  SiteSeries out = series;
  for (std::size_t t = 0; t < series.length(); ++t) {
    auto row = out.row(t);
    stage_one(series.row(t), row, stats, series.axis.calendar_month(static_cast<int>(t)));
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = (row[j] - stats.global_mean[j]) / (stats.global_std[j] + stats.epsilon);
    }
  }
  return out;
}

Dataset apply_two_stage(const Dataset& dataset, const CalendarStats& stats) {
  Dataset out = dataset;
  for (auto& s : out.series) s = apply_two_stage(s, stats);
  out.validate();
  return out;
}

std::uint64_t CalendarStats::fingerprint() const { return binio::fnv1a(encode_stats(*this)); }

std::vector<std::uint8_t> encode_stats(const CalendarStats& st) {
  binio::Writer w;
  w.magic("WSTA");
  w.put<std::uint16_t>(kStatsVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(st.dim));
  w.put<double>(st.epsilon);
  w.string(st.population);
  for (int m = 0; m < 12; ++m) w.doubles(st.month_mean[m]);
  for (int m = 0; m < 12; ++m) w.doubles(st.month_std[m]);
  w.doubles(st.global_mean);
  w.doubles(st.global_std);
  return w.bytes();
}

CalendarStats decode_stats(std::span<const std::uint8_t> bytes, const std::string& context) {
  binio::Reader r(bytes, context);
  r.expect_magic("WSTA");
  if (r.get<std::uint16_t>() != kStatsVersion) fail(ErrorCode::kIo, context + ": unsupported stats version");
  CalendarStats st;
  st.dim = r.get<std::uint32_t>();
  st.epsilon = r.get<double>();
  st.population = r.string();
  for (int m = 0; m < 12; ++m) {
    st.month_mean[m].resize(st.dim);
    r.doubles(st.month_mean[m]);
  }
  for (int m = 0; m < 12; ++m) {
    st.month_std[m].resize(st.dim);
    r.doubles(st.month_std[m]);
  }
  st.global_mean.resize(st.dim);
  st.global_std.resize(st.dim);
  r.doubles(st.global_mean);
  r.doubles(st.global_std);
  r.expect_end();
  return st;
}

void save_stats(const std::filesystem::path& path, const CalendarStats& stats) {
  binio::write_file(path, encode_stats(stats));
}

CalendarStats load_stats(const std::filesystem::path& path) {
  return decode_stats(binio::read_file(path), path.string());
}

GridScores cross_grid_normalize(const GridScores& grid_scores, double epsilon) {
  GridScores out = grid_scores;
  if (grid_scores.empty()) return out;
  const std::size_t g = grid_scores.size();
  const std::size_t t_len = grid_scores.front().size();
  for (const auto& row : grid_scores) {
    if (row.size() != t_len) fail(ErrorCode::kValidation, "grid score rows have different lengths");
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    bool uniform = true;
    for (std::size_t i = 1; i < g && uniform; ++i) uniform = grid_scores[i][t] == grid_scores[0][t];
    if (uniform) {
      // Rounding in the mean would otherwise leak a residue of order ulp / epsilon.
      for (std::size_t i = 0; i < g; ++i) out[i][t] = 0.0;
      continue;
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < g; ++i) mean += grid_scores[i][t];
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      const double dv = grid_scores[i][t] - mean;
      var += dv * dv;
    }
    const double scale = std::sqrt(var / static_cast<double>(g)) + epsilon;
    for (std::size_t i = 0; i < g; ++i) out[i][t] = (grid_scores[i][t] - mean) / scale;
  }
  return out;
}

PoolMode parse_pool_mode(const std::string& name) {
  if (name == "max") return PoolMode::kMax;
  if (name == "mean") return PoolMode::kMean;
  fail(ErrorCode::kUsage, "unknown pooling mode '" + name + "' (expected max or mean)");
}

std::vector<double> pool_site(const GridScores& grid_scores, PoolMode mode) {
  if (grid_scores.empty()) fail(ErrorCode::kValidation, "cannot pool a site with zero grids");
  const std::size_t t_len = grid_scores.front().size();
  std::vector<double> out(grid_scores.front());
  for (std::size_t i = 1; i < grid_scores.size(); ++i) {
    if (grid_scores[i].size() != t_len) fail(ErrorCode::kValidation, "grid score rows have different lengths");
    for (std::size_t t = 0; t < t_len; ++t) {
      out[t] = mode == PoolMode::kMax ? std::max(out[t], grid_scores[i][t]) : out[t] + grid_scores[i][t];
    }
  }
  if (mode == PoolMode::kMean) {
    for (double& v : out) v /= static_cast<double>(grid_scores.size());
  }
  return out;
}

}  // namespace watch
