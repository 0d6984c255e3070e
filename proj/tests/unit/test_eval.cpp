#include "doctest.h"
#include "fixtures.hpp"
#include "watch/error.hpp"
#include "watch/eval.hpp"
#include "watch/synth.hpp"

using namespace watch;

namespace {

ScoreSeries peaked(const std::string& id, int length, std::vector<int> peaks) {
  ScoreSeries s{id, std::vector<double>(static_cast<std::size_t>(length), 0.0), {}, "test"};
  double h = 1.0;
  for (int p : peaks) {
    s.raw[static_cast<std::size_t>(p)] = h;
    h -= 0.01;
  }
  s.probability = s.raw;
  return s;
}

}  // namespace

TEST_CASE("hit predicates") {
  // event in March (index 2), prediction in May (index 4)
  const std::vector<int> topk{4};
  CHECK_FALSE(hit_symmetric(topk, 2, 1));
  CHECK(hit_symmetric(topk, 2, 2));
  CHECK(hit_positive(topk, 2, 2));
  CHECK_FALSE(hit_negative(topk, 2, 2));
  CHECK(hit_negative({0}, 2, 2));
  CHECK(hit_symmetric({2}, 2, 0));
  CHECK(hit_positive({2}, 2, 0));
  CHECK(hit_negative({2}, 2, 0));
}

TEST_CASE("top-k ordering breaks ties toward the earlier month") {
  const std::vector<double> p{0.5, 0.9, 0.5, 0.9, 0.1};
  CHECK(topk_months(p, 3, MonthWindow{}) == std::vector<int>{1, 3, 0});
  CHECK(topk_months(p, 2, MonthWindow{2, 5}) == std::vector<int>{3, 2});
  CHECK_THROWS_AS(topk_months(p, 6, MonthWindow{}), Error);
}

TEST_CASE("oracle scorer gets perfect recall") {
  std::vector<ScoreSeries> scores;
  std::vector<SiteLabel> labels;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "s" + std::to_string(i);
    scores.push_back(peaked(id, 96, {10 + i}));
    labels.push_back({id, true, 10 + i});
  }
  labels.push_back({"preserved", false, std::nullopt});
  const auto rep = recall_suite(scores, labels, EvalConfig{});
  CHECK(rep.n_sites == 10);
  for (std::size_t i = 0; i < rep.margins.size(); ++i) {
    CHECK(rep.r_sym[i] == 1.0);
    CHECK(rep.r_pos[i] == 1.0);
    CHECK(rep.r_neg[i] == 1.0);
  }
  REQUIRE(rep.gap_pp.has_value());
  CHECK(*rep.gap_pp == 0.0);
}

TEST_CASE("directional gap for late predictions is positive") {
  std::vector<ScoreSeries> scores;
  std::vector<SiteLabel> labels;
  for (int i = 0; i < 4; ++i) {
    const std::string id = "s" + std::to_string(i);
    scores.push_back(peaked(id, 96, {32}));
    labels.push_back({id, true, 30});
  }
  EvalConfig cfg;
  cfg.k = 1;
  const auto rep = recall_suite(scores, labels, cfg);
  // R+ = 1 for m >= 2 (5 of 7 margins), R- = 0 everywhere
  CHECK(*rep.gap_pp == doctest::Approx(100.0 * 5.0 / 7.0).epsilon(1e-12));
  CHECK(rep.r_sym[rep.margin_slot(1)] == 0.0);
  CHECK(rep.r_sym[rep.margin_slot(2)] == 1.0);
}

TEST_CASE("error paths") {
  std::vector<ScoreSeries> scores{peaked("a", 24, {3})};
  CHECK_THROWS_AS(recall_suite(scores, {{"a", false, std::nullopt}}, EvalConfig{}), Error);
  CHECK_THROWS_AS(recall_suite(scores, {{"b", true, 3}}, EvalConfig{}), Error);
  CHECK_THROWS_AS(oracle_recall(scores, {{"a", false, std::nullopt}}, EvalConfig{}), Error);
  EvalConfig bad;
  bad.k = 0;
  CHECK_THROWS_AS(recall_suite(scores, {{"a", true, 3}}, bad), Error);
}

TEST_CASE("window restricts events and predictions") {
  std::vector<ScoreSeries> scores{peaked("a", 96, {60, 10}), peaked("b", 96, {5})};
  std::vector<SiteLabel> labels{{"a", true, 60}, {"b", true, 5}};
  EvalConfig cfg;
  cfg.k = 1;
  cfg.window = {48, 96};
  const auto rep = recall_suite(scores, labels, cfg);
  CHECK(rep.n_sites == 1);
  CHECK(rep.r_sym[0] == 1.0);
}

TEST_CASE("single site with K = T saturates") {
  Rng rng(4);
  ScoreSeries s{"a", {}, std::vector<double>(24), "r"};
  for (double& p : s.probability) p = rng.uniform();
  const auto rep = oracle_recall({s}, {{"a", true, 7}}, EvalConfig{24, {0}, {}});
  CHECK(rep.r_sym[0] == 1.0);
}

TEST_CASE("recall suite matches the exhaustive oracle on random instances") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int length = 1 + static_cast<int>(rng.below(96));
    EvalConfig cfg;
    cfg.k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(24, length))));
    std::vector<ScoreSeries> scores;
    std::vector<SiteLabel> labels;
    for (int i = 0; i < 8; ++i) {
      ScoreSeries s{"s" + std::to_string(i), {}, std::vector<double>(static_cast<std::size_t>(length)), "r"};
      for (double& p : s.probability) p = static_cast<double>(rng.below(5)) / 4.0;  // plenty of ties
      scores.push_back(s);
      labels.push_back({s.site_id, true, static_cast<int>(rng.below(static_cast<std::uint64_t>(length)))});
    }
    const auto a = recall_suite(scores, labels, cfg);
    const auto b = oracle_recall(scores, labels, cfg);
    CHECK(a.r_sym == b.r_sym);
    CHECK(a.r_pos == b.r_pos);
    CHECK(a.r_neg == b.r_neg);
    CHECK(a.gap_pp == b.gap_pp);
    for (std::size_t i = 0; i < a.sites.size(); ++i) CHECK(a.sites[i].topk == b.sites[i].topk);
  }
}

TEST_CASE("macro averaging and rendering") {
  EvalReport r1, r2;
  r1.margins = r2.margins = {0, 1};
  r1.r_sym = {0.2, 0.4};
  r2.r_sym = {0.4, 0.8};
  r1.r_pos = r1.r_neg = r1.r_sym;
  r2.r_pos = r2.r_neg = r2.r_sym;
  EvalReport t1 = r1;
  t1.r_sym = {0.1, 0.1};
  std::map<std::string, std::map<std::string, EvalReport>> reports;
  reports["sscd"]["e1"] = r1;
  reports["sscd"]["e2"] = r2;
  reports["ted"]["e1"] = t1;
  reports["ted"]["e2"] = t1;
  const auto table = macro_average(reports);
  CHECK(table.rows[0].r_sym.at("sscd") == doctest::Approx(0.3));
  const auto delta = table.delta("sscd", "ted");
  CHECK(delta[1] == doctest::Approx(0.5));
  const auto text = render_macro_table(table);
  CHECK(text.find("sscd") != std::string::npos);
  CHECK(render_report_table("ted", "e1", r1).find("ted\te1\t0") != std::string::npos);
}
