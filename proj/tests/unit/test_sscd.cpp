#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "watch/error.hpp"
#include "watch/normalize.hpp"
#include "watch/sscd.hpp"
#include "watch/synth.hpp"

using namespace watch;
using nn::Graph;
using nn::Matrix;

namespace {

SscdConfig tiny_config() {
  SscdConfig cfg;
  cfg.latent_dim = 3;
  cfg.hidden_dim = 5;
  cfg.epochs = 6;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.seed = 7;
  return cfg;
}

Dataset small_synthetic(std::uint64_t seed, std::size_t n = 12) {
  SynthSpec spec;
  spec.n_sites = n;
  spec.axis.length = 36;
  spec.dim = 4;
  spec.event_min = 6;
  spec.event_max = 30;
  spec.seed = seed;
  const auto raw = generate_dataset(spec).dataset;
  return apply_two_stage(raw, fit_calendar_stats(raw));
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("config validation") {
  SscdConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.mask_ratio = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SscdConfig{};
  cfg.knn_k = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = SscdConfig{};
  cfg.alpha.nov = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("config json round trip") {
  SscdConfig cfg = tiny_config();
  cfg.alpha = {0.1, 0.2, 0.3};
  cfg.lambda_bt = 0.5;
  const SscdConfig back = nlohmann::json(cfg).get<SscdConfig>();
  CHECK(back.alpha.fore == 0.2);
  CHECK(back.lambda_bt == 0.5);
  CHECK(back.hidden_dim == 5);
  CHECK(back.seed == 7);
}

TEST_CASE("every loss component passes a gradient check") {
  Rng rng(21);
  SscdConfig cfg = tiny_config();
  for (int trial = 0; trial < 5; ++trial) {
    SscdNetworks nets(4, cfg);
    nets.initialize(rng);
    SscdBatch b;
    b.x = random_matrix(6, 4, rng);
    b.prev = random_matrix(6, 4, rng);
    b.context = random_matrix(6, 12, rng);
    b.mask_a = random_mask(6, 4, 0.25, rng);
    b.mask_b = random_mask(6, 4, 0.25, rng);
    for (int component = 0; component < 5; ++component) {
      CAPTURE(component);
      const auto r = testing::check_gradients(nets.params(), [&](Graph& g) {
        const auto t = sscd_batch_loss(g, nets, b, cfg);
        return std::array{t.rec, t.fore, t.contrast, t.bt, t.total}[static_cast<std::size_t>(component)];
      });
      CHECK(r.relative_error < 1e-4);
    }
  }
}

TEST_CASE("masks hide max(1, round(ratio*d)) dimensions per row") {
  Rng rng(1);
  for (std::size_t d : {1, 3, 4, 8, 10}) {
    const Matrix m = random_mask(20, d, 0.25, rng);
    const auto expect = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.25 * static_cast<double>(d))));
    for (std::size_t i = 0; i < 20; ++i) {
      double s = 0;
      for (double v : m.row(i)) s += v;
      CHECK(s == static_cast<double>(expect));
    }
  }
}

TEST_CASE("forecast context is zero padded at the start") {
  const auto s = testing::series_from({1, 2, 3, 4, 5}, 1);
  const Matrix c = forecast_context(s, 3);
  CHECK(std::vector<double>(c.row(0).begin(), c.row(0).end()) == std::vector<double>{0, 0, 0});
  CHECK(std::vector<double>(c.row(1).begin(), c.row(1).end()) == std::vector<double>{0, 0, 1});
  CHECK(std::vector<double>(c.row(4).begin(), c.row(4).end()) == std::vector<double>{2, 3, 4});
}

TEST_CASE("ensemble arithmetic") {
  const auto e = sscd_ensemble({1, 0, 2}, {1, 0, 2}, {1, 0, 2}, EnsembleWeights{});
  CHECK(e.raw[0] == doctest::Approx(1.3).epsilon(1e-12));
  CHECK(std::abs(e.raw[0] - 1.3) < 1e-9);
  CHECK(e.raw[1] == 0.0);
  const auto twice = sscd_ensemble({2, 0, 4}, {2, 0, 4}, {2, 0, 4}, EnsembleWeights{});
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(twice.raw[t] == doctest::Approx(2.0 * e.raw[t]).epsilon(1e-14));
    CHECK(twice.probability[t] == doctest::Approx(e.probability[t]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(sscd_ensemble({1}, {1, 2}, {1}, EnsembleWeights{}), Error);
}

TEST_CASE("calibration and robust z-scoring") {
  TimeAxis axis;
  axis.length = 24;
  CalendarLocations calib{};
  std::vector<double> medians(24);
  for (int t = 0; t < 24; ++t) {
    calib[static_cast<std::size_t>(axis.calendar_month(t) - 1)] = {static_cast<double>(t % 12), 2.0};
    medians[static_cast<std::size_t>(t)] = static_cast<double>(t % 12);
  }
  for (double v : calibrate_and_zscore(medians, axis, calib, 1e-6)) CHECK(v == 0.0);
  for (double v : calibrate_and_zscore(std::vector<double>(24, 3.0), axis, CalendarLocations{}, 1e-6)) CHECK(v == 0.0);

  const auto loc = robust::location(std::vector<double>{1, 1, 1, 9});
  CHECK(loc.median == 1.0);
  CHECK(loc.mad == 0.0);
  CHECK((9.0 - loc.median) / (robust::kMadToSigma * loc.mad + 1e-6) == doctest::Approx(8e6));
}

TEST_CASE("forecast error by hand with a zero forecaster") {
  SscdModelBundle b;
  b.config = tiny_config();
  b.nets = SscdNetworks(1, b.config);
  Rng rng(2);
  b.nets.initialize(rng);
  for (auto& p : b.nets.params()) {
    if (p.name.rfind("fore.", 0) == 0) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  }
  b.bank = Matrix(1, b.config.latent_dim);
  b.bank_sites = {"other"};
  b.bank_site = {0};
  b.bank_month = {0};
  const auto sig = sscd_signals(testing::series_from({0, 0, 0, 9}, 1), b);
  CHECK(sig.fore[0] == 0.0);
  CHECK(sig.fore[3] == 81.0);
}

TEST_CASE("novelty is zero for latents duplicated in the bank and ignores bank order") {
  SscdModelBundle b;
  b.config = tiny_config();
  b.config.knn_k = 2;
  b.nets = SscdNetworks(2, b.config);
  Rng rng(3);
  b.nets.initialize(rng);
  const auto s = testing::series_from({0.5, -0.2, 0.1, 0.3}, 2, "q");
  Graph g;
  const Matrix z = g.value(b.nets.encode(g, g.constant(Matrix{2, 2, 0.0})));
  Graph g2;
  Matrix x(2, 2);
  x.data = s.values;
  const Matrix zq = g2.value(b.nets.encode(g2, g2.constant(x)));
  b.bank = Matrix(5, b.config.latent_dim);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t j = 0; j < b.config.latent_dim; ++j) b.bank(r, j) = zq(0, j);
  }
  for (std::size_t r = 2; r < 5; ++r) {
    for (std::size_t j = 0; j < b.config.latent_dim; ++j) b.bank(r, j) = z(0, j) + static_cast<double>(r);
  }
  b.bank_sites = {"a", "b"};
  b.bank_site = {0, 1, 0, 1, 0};
  b.bank_month = {0, 0, 1, 1, 2};
  const auto sig = sscd_signals(s, b);
  CHECK(sig.nov[0] == 0.0);
  CHECK(sig.nov[1] > 0.0);

  SscdModelBundle shuffled = b;
  shuffled.bank = Matrix(5, b.config.latent_dim);
  const std::vector<std::size_t> perm{4, 2, 0, 3, 1};
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t j = 0; j < b.config.latent_dim; ++j) shuffled.bank(r, j) = b.bank(perm[r], j);
    shuffled.bank_site[r] = b.bank_site[perm[r]];
    shuffled.bank_month[r] = b.bank_month[perm[r]];
  }
  const auto sig2 = sscd_signals(s, shuffled);
  CHECK(sig2.nov == sig.nov);
}

TEST_CASE("self matches are excluded from the bank neighbourhood") {
  const Dataset ds = small_synthetic(4, 6);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  const auto bundle = train_sscd(ds, cfg);
  CHECK(bundle.bank.rows == 6 * 36);
  const auto sig = sscd_signals(ds.series[0], bundle);
  for (double v : sig.nov) CHECK(v > 0.0);
}

TEST_CASE("training decreases the loss and is deterministic") {
  const Dataset ds = small_synthetic(5);
  auto cfg = tiny_config();
  cfg.patience = 100;
  std::vector<SscdEpochLog> log;
  const auto a = train_sscd(ds, cfg, 0, &log);
  REQUIRE(log.size() == 6);
  for (const auto& row : log) {
    CHECK(std::isfinite(row.rec));
    CHECK(std::isfinite(row.fore));
    CHECK(std::isfinite(row.contrast));
    CHECK(std::isfinite(row.bt));
  }
  CHECK(log[4].total < log[0].total);

  const auto b = train_sscd(ds, cfg);
  CHECK(encode_bundle(a) == encode_bundle(b));
  const auto sa = sscd_score(ds.series[3], a);
  const auto sb = sscd_score(ds.series[3], b);
  CHECK(sa.raw == sb.raw);
}

TEST_CASE("constant dataset trains to near-zero reconstruction and forecast loss") {
  Dataset ds;
  ds.axis.length = 24;
  ds.dim = 3;
  for (int i = 0; i < 4; ++i) ds.series.emplace_back("c" + std::to_string(i), ds.axis, 3);
  ds.validate();
  auto cfg = tiny_config();
  cfg.epochs = 60;
  cfg.learning_rate = 1e-2;
  cfg.patience = 100;
  std::vector<SscdEpochLog> log;
  train_sscd(ds, cfg, 0, &log);
  CHECK(log.back().rec < 1e-3);
  CHECK(log.back().fore < 1e-3);
}

TEST_CASE("bundle round trip is bit-exact") {
  testing::TempDir dir("bundle");
  const Dataset ds = small_synthetic(6, 6);
  auto cfg = tiny_config();
  cfg.epochs = 2;
  const auto bundle = train_sscd(ds, cfg, 0xabcdef);
  save_bundle(dir / "m.wssc", bundle);
  const auto back = load_bundle(dir / "m.wssc");
  CHECK(encode_bundle(back) == encode_bundle(bundle));
  CHECK(back.stats_fingerprint == 0xabcdef);
  for (const auto& s : ds.series) CHECK(sscd_score(s, back).raw == sscd_score(s, bundle).raw);

  auto bytes = encode_bundle(bundle);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_bundle(bytes), Error);
}

TEST_CASE("dimension mismatch is rejected at scoring time") {
  const Dataset ds = small_synthetic(7, 4);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  const auto bundle = train_sscd(ds, cfg);
  Rng rng(1);
  CHECK_THROWS_AS(sscd_score(testing::random_series("x", 36, 5, rng), bundle), Error);
}
