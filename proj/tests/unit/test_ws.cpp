#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "watch/error.hpp"
#include "watch/normalize.hpp"
#include "watch/synth.hpp"
#include "watch/ws.hpp"

using namespace watch;
using nn::Graph;

namespace {

WsConfig tiny_config() {
  WsConfig cfg;
  cfg.encoder_dim = 4;
  cfg.hidden_dim = 4;
  cfg.max_epochs = 5;
  cfg.batch_sites = 4;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  return cfg;
}

Dataset labeled_dataset(std::size_t n_preserved, std::size_t n_known, std::size_t n_unknown) {
  Rng rng(8);
  Dataset ds;
  ds.dim = 3;
  std::size_t i = 0;
  const auto add = [&](bool looted, std::optional<int> month) {
    const std::string id = "s" + std::to_string(i++);
    ds.series.push_back(testing::random_series(id, 96, 3, rng));
    ds.labels.push_back({id, looted, month});
    ds.splits[id] = Split::kTrain;
  };
  for (std::size_t k = 0; k < n_preserved; ++k) add(false, std::nullopt);
  for (std::size_t k = 0; k < n_known; ++k) add(true, 20 + static_cast<int>(k));
  for (std::size_t k = 0; k < n_unknown; ++k) add(true, std::nullopt);
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("known index follows the cutoff rule") {
  CHECK(known_idx({"a", true, 30}, 47) == 30);
  CHECK(known_idx({"a", true, 47}, 47) == 47);
  CHECK(known_idx({"a", false, std::nullopt}, 47) == -1);
  CHECK(known_idx({"a", true, 60}, 47) == -1);
  CHECK(known_idx({"a", true, std::nullopt}, 47) == -1);
}

TEST_CASE("gaussian targets") {
  const auto y = build_targets({"a", true, 10}, 96, 2.0, 47);
  REQUIRE(y.has_value());
  CHECK((*y)[10] == 1.0);
  CHECK(std::abs((*y)[12] - 0.606531) < 1e-6);
  CHECK(std::abs((*y)[12] - std::exp(-0.5)) < 1e-15);
  for (int delta = 1; delta <= 10; ++delta) CHECK((*y)[10 + delta] == (*y)[10 - delta]);
  const auto z = build_targets({"b", false, std::nullopt}, 96, 2.0, 47);
  REQUIRE(z.has_value());
  CHECK(*z == std::vector<double>(96, 0.0));
  CHECK_FALSE(build_targets({"c", true, 60}, 96, 2.0, 47).has_value());
  CHECK_FALSE(build_targets({"c", true, std::nullopt}, 96, 2.0, 47).has_value());
}

TEST_CASE("training set assembly with oversampling") {
  const Dataset ds = labeled_dataset(3, 1, 2);
  WsConfig cfg = tiny_config();
  const auto set = assemble_training_set(ds, cfg);
  CHECK(set.items.size() == 7);
  CHECK(set.positives == 1);
  CHECK(set.warnings.empty());
  for (const auto& item : set.items) CHECK(item.series->site_id != "s4");
  CHECK(assemble_training_set(ds, cfg, Split::kTrain, false).items.size() == 4);

  const Dataset none = labeled_dataset(3, 0, 1);
  const auto degenerate = assemble_training_set(none, cfg);
  CHECK(degenerate.items.size() == 3);
  CHECK(degenerate.warnings.size() == 1);
  CHECK(default_pos_weight(degenerate) == 1.0);
}

TEST_CASE("default positive weight is the ratio of near-zero to positive targets") {
  WsTrainingSet set;
  SiteSeries s;
  set.items.push_back({&s, {0.0, 0.01, 0.5, 1.0}});
  set.items.push_back({&s, {0.0, 0.0, 0.0, 0.2}});
  CHECK(default_pos_weight(set) == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("weighted BCE through the network passes a gradient check") {
  Rng rng(31);
  WsConfig cfg = tiny_config();
  for (int trial = 0; trial < 5; ++trial) {
    WsNetwork net(3, cfg);
    net.initialize(rng);
    std::vector<SiteSeries> series;
    std::vector<WsItem> items;
    for (int b = 0; b < 3; ++b) series.push_back(testing::random_series("s" + std::to_string(b), 7, 3, rng));
    for (int b = 0; b < 3; ++b) {
      auto y = *build_targets({"s", b != 1, b != 1 ? std::optional<int>(2 + b) : std::nullopt}, 7, 2.0, 6);
      items.push_back({&series[static_cast<std::size_t>(b)], y});
    }
    std::vector<const WsItem*> batch{&items[0], &items[1], &items[2]};
    const auto r = testing::check_gradients(net.params(), [&](Graph& g) { return ws_batch_loss(g, net, batch, 2.5); });
    CHECK(r.relative_error < 1e-4);
  }
}

TEST_CASE("predictions are causal and probabilities are sigmoids of logits") {
  Rng rng(4);
  WsConfig cfg = tiny_config();
  WsModel model;
  model.config = cfg;
  model.net = WsNetwork(3, cfg);
  model.net.initialize(rng);
  for (int trial = 0; trial < 5; ++trial) {
    const auto full = testing::random_series("x", 96, 3, rng);
    auto prefix = full;
    prefix.axis.length = 40;
    prefix.values.resize(40 * 3);
    prefix.available.resize(40);
    const auto a = ws_predict(model, full);
    const auto b = ws_predict(model, prefix);
    REQUIRE(b.raw.size() == 40);
    for (std::size_t t = 0; t < 40; ++t) {
      CHECK(a.raw[t] == b.raw[t]);
      CHECK(a.probability[t] == b.probability[t]);
    }
    for (std::size_t t = 0; t < 96; ++t) CHECK(a.probability[t] == doctest::Approx(1.0 / (1.0 + std::exp(-a.raw[t]))));
  }
  Rng r2(5);
  CHECK_THROWS_AS(ws_predict(model, testing::random_series("y", 96, 2, r2)), Error);
}

TEST_CASE("all-negative training drives probabilities below one half") {
  const Dataset ds = labeled_dataset(4, 0, 0);
  WsConfig cfg = tiny_config();
  cfg.max_epochs = 40;
  cfg.patience = 100;
  const auto set = assemble_training_set(ds, cfg);
  const auto model = train_ws(set, {}, 3, cfg);
  for (const auto& s : ds.series) {
    for (double p : ws_predict(model, s).probability) CHECK(p < 0.5);
  }
}

TEST_CASE("training is deterministic and the model file round-trips") {
  testing::TempDir dir("ws");
  const Dataset ds = labeled_dataset(4, 2, 1);
  WsConfig cfg = tiny_config();
  const auto set = assemble_training_set(ds, cfg);
  std::vector<WsEpochLog> log;
  const auto a = train_ws(set, {}, 3, cfg, 42, &log);
  const auto b = train_ws(set, {}, 3, cfg, 42);
  CHECK(encode_ws_model(a) == encode_ws_model(b));
  CHECK(log.size() == 5);
  CHECK(a.pos_weight == doctest::Approx(default_pos_weight(set)));

  save_ws_model(dir / "m.wsws", a);
  const auto back = load_ws_model(dir / "m.wsws");
  CHECK(encode_ws_model(back) == encode_ws_model(a));
  CHECK(ws_predict(back, ds.series[0]).raw == ws_predict(a, ds.series[0]).raw);
  CHECK(back.stats_fingerprint == 42);
  CHECK_NOTHROW(require_fingerprint(back.stats_fingerprint, 42, "model"));
  try {
    require_fingerprint(back.stats_fingerprint, 43, "model");
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFingerprint);
  }
}

TEST_CASE("config validation") {
  WsConfig cfg;
  TimeAxis axis;
  CHECK_NOTHROW(cfg.validate_for(axis));
  cfg.c_end = 96;
  CHECK_THROWS_AS(cfg.validate_for(axis), Error);
  cfg = WsConfig{};
  cfg.sigma_w = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  const WsConfig back = nlohmann::json(tiny_config()).get<WsConfig>();
  CHECK(back.hidden_dim == 4);
  CHECK_FALSE(back.pos_weight.has_value());
}
