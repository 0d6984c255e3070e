#include "watch/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "watch/binio.hpp"
#include "watch/error.hpp"

namespace watch {

namespace {

constexpr std::uint16_t kPatchVersion = 1;

// Linear-interpolated percentile of sorted data, q in [0, 1].
double percentile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return 0.0;
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.empty() || std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double ratio_index(double a, double b) {
  const double den = a + b;
  return den == 0.0 ? 0.0 : (a - b) / den;
}

}  // namespace

Patch::Patch(std::string id, int month_index, std::size_t h, std::size_t w)
    : site_id(std::move(id)), month(month_index), height(h), width(w), mask(h * w, 1) {
  for (auto& b : bands) b.assign(h * w, 0.0);
}

bool Patch::in_mask(long y, long x) const {
  if (y < 0 || x < 0 || y >= static_cast<long>(height) || x >= static_cast<long>(width)) return false;
  return mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] != 0;
}

void Patch::validate() const {
  const std::size_t n = height * width;
  if (n == 0) fail(ErrorCode::kValidation, "patch '" + site_id + "' has zero size");
  for (const auto& b : bands) {
    if (b.size() != n) fail(ErrorCode::kValidation, "patch '" + site_id + "' band sizes differ from H x W");
  }
  if (mask.size() != n) fail(ErrorCode::kValidation, "patch '" + site_id + "' mask size differs from H x W");
  const auto count = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  if (count == 0) fail(ErrorCode::kValidation, "patch '" + site_id + "' has an empty mask");
  if (count < kMinMaskPixels) {
    fail(ErrorCode::kValidation, "patch '" + site_id + "' mask has " + std::to_string(count) + " pixels, need " +
                                     std::to_string(kMinMaskPixels));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0) continue;
    for (const auto& b : bands) {
      if (!std::isfinite(b[i])) fail(ErrorCode::kValidation, "patch '" + site_id + "' has non-finite band values");
    }
  }
}

std::vector<int> quantized_luminance(const Patch& p) {
  const std::size_t n = p.height * p.width;
  std::vector<double> lum(n);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    lum[i] = (p.bands[0][i] + p.bands[1][i] + p.bands[2][i]) / 3.0;
    if (p.mask[i] != 0) {
      lo = std::min(lo, lum[i]);
      hi = std::max(hi, lum[i]);
    }
  }
  std::vector<int> levels(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (p.mask[i] == 0) continue;
    if (hi > lo) {
      const int q = static_cast<int>(std::floor((lum[i] - lo) / (hi - lo) * kGrayLevels));
      levels[i] = std::clamp(q, 0, kGrayLevels - 1);
    } else {
      levels[i] = 0;
    }
  }
  return levels;
}

std::vector<double> glcm(const std::vector<int>& levels, const Patch& p, int dx, int dy) {
  std::vector<double> m(kGrayLevels * kGrayLevels, 0.0);
  double total = 0.0;
  for (long y = 0; y < static_cast<long>(p.height); ++y) {
    for (long x = 0; x < static_cast<long>(p.width); ++x) {
      if (!p.in_mask(y, x) || !p.in_mask(y + dy, x + dx)) continue;
      const int a = levels[static_cast<std::size_t>(y) * p.width + static_cast<std::size_t>(x)];
      const int b = levels[static_cast<std::size_t>(y + dy) * p.width + static_cast<std::size_t>(x + dx)];
      m[a * kGrayLevels + b] += 1.0;
      m[b * kGrayLevels + a] += 1.0;
      total += 2.0;
    }
  }
  if (total > 0.0) {
    for (double& v : m) v /= total;
  }
  return m;
}

namespace {

// contrast, homogeneity, energy (sqrt of angular second moment), correlation.
std::array<double, 4> glcm_props(const std::vector<double>& m) {
  double total = 0.0;
  for (double v : m) total += v;
  if (total == 0.0) return {0.0, 1.0, 1.0, 1.0};  // no pairs: treat as a single-level image
  double contrast = 0.0, homog = 0.0, asm_ = 0.0, mu = 0.0;
  for (int i = 0; i < kGrayLevels; ++i) {
    for (int j = 0; j < kGrayLevels; ++j) {
      const double v = m[i * kGrayLevels + j];
      const double diff = static_cast<double>(i - j);
      contrast += diff * diff * v;
      homog += v / (1.0 + diff * diff);
      asm_ += v * v;
      mu += static_cast<double>(i) * v;
    }
  }
  // Symmetric matrix: row and column marginals coincide.
  double var = 0.0, cov = 0.0;
  for (int i = 0; i < kGrayLevels; ++i) {
    for (int j = 0; j < kGrayLevels; ++j) {
      const double v = m[i * kGrayLevels + j];
      var += (i - mu) * (i - mu) * v;
      cov += (i - mu) * (j - mu) * v;
    }
  }
  const double corr = var > 1e-15 ? cov / var : 1.0;
  return {contrast, homog, std::sqrt(asm_), corr};
}

}  // namespace

std::array<double, kFeatureDim> extract_handcrafted(const Patch& p) {
  p.validate();
  std::array<double, kFeatureDim> f{};
  const std::size_t n = p.height * p.width;
  std::array<std::vector<double>, 4> vals;
  std::vector<double> ndvi, ndwi, lum;
  for (std::size_t i = 0; i < n; ++i) {
    if (p.mask[i] == 0) continue;
    for (std::size_t b = 0; b < 4; ++b) vals[b].push_back(p.bands[b][i]);
    ndvi.push_back(ratio_index(p.bands[3][i], p.bands[2][i]));
    ndwi.push_back(ratio_index(p.bands[1][i], p.bands[3][i]));
    lum.push_back((p.bands[0][i] + p.bands[1][i] + p.bands[2][i]) / 3.0);
  }

  std::size_t k = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    std::vector<double> s = vals[b];
    std::sort(s.begin(), s.end());
    const double mean = mean_of(s);
    f[k++] = mean;
    f[k++] = std_of(s, mean);
    f[k++] = s.front();
    f[k++] = s.back();
    f[k++] = percentile_sorted(s, 0.5);
    f[k++] = percentile_sorted(s, 0.75) - percentile_sorted(s, 0.25);
  }
  for (const auto* idx : {&ndvi, &ndwi}) {
    std::vector<double> s = *idx;
    std::sort(s.begin(), s.end());
    const double mean = mean_of(s);
    f[k++] = mean;
    f[k++] = std_of(s, mean);
    f[k++] = percentile_sorted(s, 0.1);
    f[k++] = percentile_sorted(s, 0.9);
  }

  const auto levels = quantized_luminance(p);
  for (auto [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
    for (double v : glcm_props(glcm(levels, p, dx, dy))) f[k++] = v;
  }

  // Uniform LBP over pixels whose whole 3x3 neighbourhood is masked.
  std::vector<double> lum_full(n);
  for (std::size_t i = 0; i < n; ++i) lum_full[i] = (p.bands[0][i] + p.bands[1][i] + p.bands[2][i]) / 3.0;
  const auto lum_at = [&](long y, long x) { return lum_full[static_cast<std::size_t>(y) * p.width + static_cast<std::size_t>(x)]; };
  static constexpr int kRing[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}};
  std::array<double, 10> hist{};
  double lbp_count = 0.0;
  for (long y = 0; y < static_cast<long>(p.height); ++y) {
    for (long x = 0; x < static_cast<long>(p.width); ++x) {
      if (!p.in_mask(y, x)) continue;
      bool full = true;
      for (const auto& o : kRing) full = full && p.in_mask(y + o[0], x + o[1]);
      if (!full) continue;
      const double c = lum_at(y, x);
      int bits[8];
      int ones = 0;
      for (int r = 0; r < 8; ++r) {
        bits[r] = lum_at(y + kRing[r][0], x + kRing[r][1]) >= c ? 1 : 0;
        ones += bits[r];
      }
      int transitions = 0;
      for (int r = 0; r < 8; ++r) transitions += bits[r] != bits[(r + 1) % 8];
      hist[transitions <= 2 ? ones : 9] += 1.0;
      lbp_count += 1.0;
    }
  }
  for (double h : hist) f[k++] = lbp_count > 0.0 ? h / lbp_count : 0.0;

  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) f[k++] = pearson(vals[a], vals[b]);
  }

  f[k++] = static_cast<double>(vals[0].size()) / static_cast<double>(n);
  std::array<double, kGrayLevels> lh{};
  for (int l : levels) {
    if (l >= 0) lh[static_cast<std::size_t>(l)] += 1.0;
  }
  double entropy = 0.0;
  for (double c : lh) {
    if (c > 0.0) {
      const double q = c / static_cast<double>(vals[0].size());
      entropy -= q * std::log2(q);
    }
  }
  f[k++] = entropy;

  // Central-difference gradient where all four direct neighbours are masked.
  std::vector<double> grad;
  for (long y = 0; y < static_cast<long>(p.height); ++y) {
    for (long x = 0; x < static_cast<long>(p.width); ++x) {
      if (!p.in_mask(y, x) || !p.in_mask(y, x - 1) || !p.in_mask(y, x + 1) || !p.in_mask(y - 1, x) ||
          !p.in_mask(y + 1, x)) {
        continue;
      }
      const double gx = 0.5 * (lum_at(y, x + 1) - lum_at(y, x - 1));
      const double gy = 0.5 * (lum_at(y + 1, x) - lum_at(y - 1, x));
      grad.push_back(std::hypot(gx, gy));
    }
  }
  const double gm = mean_of(grad);
  f[k++] = gm;
  f[k++] = std_of(grad, gm);
  return f;
}

// ---------------------------------------------------------------------------
// Patch files

std::vector<std::uint8_t> encode_patch(const Patch& p) {
  binio::Writer w;
  w.magic("WTCP");
  w.put<std::uint16_t>(kPatchVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.height));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.width));
  w.put<std::int32_t>(p.month);
  w.string(p.site_id);
  for (const auto& b : p.bands) w.floats(b);
  w.raw(p.mask);
  return w.bytes();
}

Patch decode_patch(std::span<const std::uint8_t> bytes, const std::string& context) {
  binio::Reader r(bytes, context);
  r.expect_magic("WTCP");
  if (r.get<std::uint16_t>() != kPatchVersion) fail(ErrorCode::kIo, context + ": unsupported patch version");
  const auto h = r.get<std::uint32_t>();
  const auto w = r.get<std::uint32_t>();
  const auto month = r.get<std::int32_t>();
  Patch p(r.string(), month, h, w);
  for (auto& b : p.bands) r.floats(b);
  const auto mask = r.raw(static_cast<std::size_t>(h) * w);
  p.mask.assign(mask.begin(), mask.end());
  r.expect_end();
  return p;
}

void write_patch_file(const std::filesystem::path& path, const Patch& patch) {
  binio::write_file(path, encode_patch(patch));
}

Patch read_patch_file(const std::filesystem::path& path) { return decode_patch(binio::read_file(path), path.string()); }

Dataset patches_to_dataset(const std::vector<Patch>& patches, const TimeAxis& axis) {
  axis.validate();
  Dataset ds;
  ds.axis = axis;
  ds.dim = kFeatureDim;
  std::map<std::string, std::size_t> index;
  for (const auto& p : patches) {
    if (!axis.contains(p.month)) {
      fail(ErrorCode::kValidation, "patch for '" + p.site_id + "' has month " + std::to_string(p.month) +
                                       " outside the time axis");
    }
    auto [it, inserted] = index.try_emplace(p.site_id, ds.series.size());
    if (inserted) {
      SiteSeries s(p.site_id, axis, kFeatureDim);
      std::fill(s.available.begin(), s.available.end(), 0);
      ds.series.push_back(std::move(s));
    }
    SiteSeries& s = ds.series[it->second];
    const auto t = static_cast<std::size_t>(p.month);
    if (s.available[t] != 0) {
      fail(ErrorCode::kValidation, "duplicate patch for '" + p.site_id + "' month " + std::to_string(p.month));
    }
    const auto feats = extract_handcrafted(p);
    // Stored at float32 precision, like every series file.
    std::transform(feats.begin(), feats.end(), s.row(t).begin(), [](double v) { return static_cast<double>(static_cast<float>(v)); });
    s.available[t] = 1;
  }
  ds.validate();
  return ds;
}

}  // namespace watch
