#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "watch/error.hpp"
#include "watch/features.hpp"

using namespace watch;

namespace {

Patch uniform_patch(std::size_t h, std::size_t w, std::array<double, 4> v) {
  Patch p("u", 0, h, w);
  for (std::size_t b = 0; b < 4; ++b) std::fill(p.bands[b].begin(), p.bands[b].end(), v[b]);
  return p;
}

Patch random_patch(std::size_t h, std::size_t w, Rng& rng) {
  Patch p("r", 3, h, w);
  for (auto& band : p.bands) {
    for (double& v : band) v = 0.05 + 0.5 * rng.uniform();
  }
  return p;
}

Patch rotate90(const Patch& p) {
  // (y, x) -> (x, H-1-y)
  Patch r(p.site_id, p.month, p.width, p.height);
  for (std::size_t y = 0; y < p.height; ++y) {
    for (std::size_t x = 0; x < p.width; ++x) {
      const std::size_t ny = x, nx = p.height - 1 - y;
      for (std::size_t b = 0; b < 4; ++b) r.at(b, ny, nx) = p.at(b, y, x);
      r.mask[ny * r.width + nx] = p.mask[y * p.width + x];
    }
  }
  return r;
}

}  // namespace

TEST_CASE("uniform patch") {
  const auto f = extract_handcrafted(uniform_patch(8, 8, {0.1, 0.2, 0.3, 0.3}));
  CHECK(f.size() == 60);
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(f[b * 6 + 1] == 0.0);  // std
    CHECK(f[b * 6 + 5] == 0.0);  // IQR
  }
  for (std::size_t k = 24; k < 28; ++k) CHECK(f[k] == 0.0);  // NIR == R => NDVI 0
  CHECK(f[32] == 0.0);                                      // contrast
  CHECK(f[36] == 0.0);
  CHECK(f[35] == 1.0);  // correlation of a constant image
  CHECK(f[40 + 8] == 1.0);
  for (std::size_t k = 40; k < 48; ++k) CHECK(f[k] == 0.0);
  CHECK(f[56] == 1.0);  // full mask
  CHECK(f[57] == 0.0);  // entropy
  CHECK(f[58] == 0.0);
}

TEST_CASE("checkerboard GLCM contrast equals the squared level difference") {
  Patch p = uniform_patch(4, 4, {0, 0, 0, 0});
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      const double v = (x + y) % 2 == 0 ? 0.1 : 0.9;
      for (std::size_t b = 0; b < 3; ++b) p.at(b, y, x) = v;
    }
  }
  const auto levels = quantized_luminance(p);
  CHECK(levels[0] == 0);
  CHECK(levels[1] == kGrayLevels - 1);
  // brute force: every horizontal neighbour pair differs by 15 levels
  const auto m = glcm(levels, p, 1, 0);
  CHECK(m[0 * kGrayLevels + 15] == doctest::Approx(0.5));
  const auto f = extract_handcrafted(p);
  CHECK(f[32] == doctest::Approx(225.0).epsilon(1e-12));
  CHECK(f[36] == doctest::Approx(225.0).epsilon(1e-12));
  CHECK(f[33] == doctest::Approx(1.0 / 226.0).epsilon(1e-12));
  CHECK(f[35] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("hand-checked statistics") {
  Patch p = uniform_patch(4, 4, {0, 0, 0, 0});
  for (std::size_t i = 0; i < 16; ++i) p.bands[0][i] = static_cast<double>(i);
  const auto f = extract_handcrafted(p);
  CHECK(f[0] == doctest::Approx(7.5));
  CHECK(f[1] == doctest::Approx(std::sqrt(255.0 / 12.0)));
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 15.0);
  CHECK(f[4] == doctest::Approx(7.5));
  CHECK(f[5] == doctest::Approx(7.5));  // p75 11.25 - p25 3.75
}

TEST_CASE("features depend only on masked pixels") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Patch p = random_patch(12, 10, rng);
    for (auto& m : p.mask) m = rng.uniform() < 0.7 ? 1 : 0;
    if (std::count(p.mask.begin(), p.mask.end(), 1) < 16) continue;
    const auto a = extract_handcrafted(p);
    Patch q = p;
    for (std::size_t i = 0; i < q.mask.size(); ++i) {
      if (q.mask[i] == 0) {
        for (auto& band : q.bands) band[i] = 100.0 * rng.normal();
      }
    }
    q.bands[0][0] = q.mask[0] == 0 ? std::nan("") : q.bands[0][0];
    CHECK(extract_handcrafted(q) == a);
  }
}

TEST_CASE("rotation changes only offset-dependent GLCM entries") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Patch p = random_patch(9, 7, rng);
    const auto a = extract_handcrafted(p);
    const auto b = extract_handcrafted(rotate90(p));
    for (std::size_t k = 0; k < 60; ++k) {
      if (k >= 32 && k < 40) continue;
      CAPTURE(k);
      CHECK(b[k] == doctest::Approx(a[k]).epsilon(1e-9));
    }
    // the two offsets swap under a quarter turn
    for (std::size_t k = 0; k < 4; ++k) CHECK(b[32 + k] == doctest::Approx(a[36 + k]).epsilon(1e-9));
  }
}

TEST_CASE("validation") {
  Patch p = uniform_patch(4, 4, {1, 1, 1, 1});
  std::fill(p.mask.begin(), p.mask.end(), 0);
  CHECK_THROWS_AS(extract_handcrafted(p), Error);
  p.mask[0] = 1;
  CHECK_THROWS_AS(extract_handcrafted(p), Error);
  Patch q = uniform_patch(4, 4, {1, 1, 1, 1});
  q.bands[2][5] = INFINITY;
  CHECK_THROWS_AS(extract_handcrafted(q), Error);
}

TEST_CASE("patch files and ingestion") {
  testing::TempDir dir("patch");
  Rng rng(7);
  Patch p = random_patch(6, 5, rng);
  for (auto& band : p.bands) {
    for (double& v : band) v = static_cast<float>(v);
  }
  p.mask[3] = 0;
  write_patch_file(dir / "a.wtcp", p);
  const Patch back = read_patch_file(dir / "a.wtcp");
  CHECK(back.bands == p.bands);
  CHECK(back.mask == p.mask);
  CHECK(back.site_id == p.site_id);
  CHECK(back.month == 3);

  TimeAxis axis;
  axis.length = 6;
  Patch p2 = p;
  p2.month = 5;
  const Dataset ds = patches_to_dataset({p, p2}, axis);
  REQUIRE(ds.series.size() == 1);
  CHECK(ds.dim == 60);
  CHECK(ds.series[0].available == std::vector<std::uint8_t>{0, 0, 0, 1, 0, 1});
  CHECK_THROWS_AS(patches_to_dataset({p, p}, axis), Error);
}
