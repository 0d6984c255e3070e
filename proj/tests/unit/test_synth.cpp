#include <cmath>

#include "doctest.h"
#include "watch/error.hpp"
#include "watch/normalize.hpp"
#include "watch/synth.hpp"
#include "watch/ted.hpp"

using namespace watch;

TEST_CASE("generation is deterministic per seed") {
  SynthSpec spec;
  spec.n_sites = 20;
  spec.dim = 4;
  spec.missing_fraction = 0.01;
  const auto a = generate_dataset(spec);
  const auto b = generate_dataset(spec);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(a.dataset.series[i].values == b.dataset.series[i].values);
    CHECK(a.dataset.series[i].available == b.dataset.series[i].available);
  }
  spec.seed = 1;
  const auto c = generate_dataset(spec);
  CHECK(c.dataset.series[0].values != a.dataset.series[0].values);
}

TEST_CASE("roles, labels and splits follow the generator settings") {
  SynthSpec spec;
  spec.n_sites = 40;
  spec.dim = 4;
  spec.known_fraction = 0.5;
  const auto out = generate_dataset(spec);
  const Dataset& ds = out.dataset;
  std::size_t looted = 0, known = 0;
  for (const auto& l : ds.labels) {
    looted += l.looted;
    if (l.event_month) {
      ++known;
      CHECK(*l.event_month >= spec.event_min);
      CHECK(*l.event_month <= spec.event_max);
    }
  }
  CHECK(looted == 20);
  CHECK(known == 10);
  std::map<Split, std::size_t> counts;
  for (const auto& [id, s] : ds.splits) ++counts[s];
  CHECK(ds.splits.size() == 40);
  CHECK(counts[Split::kTrain] == 24);
  for (const auto& s : ds.series) {
    for (double v : s.values) CHECK(static_cast<double>(static_cast<float>(v)) == v);
  }
}

TEST_CASE("noise sample statistics match the generator settings") {
  SynthSpec spec;
  spec.n_sites = 50;
  spec.dim = 8;
  spec.amplitude = 0.0;
  spec.looted_fraction = 0.0;
  spec.noise_sigma = 2.0;
  const auto ds = generate_dataset(spec).dataset;
  double sum = 0, sq = 0, n = 0;
  for (const auto& s : ds.series) {
    for (double v : s.values) {
      sum += v;
      sq += v * v;
      n += 1;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 3.0 * 2.0 / std::sqrt(n));
  // std of the sample std is about sigma / sqrt(2n)
  CHECK(std::abs(sd - 2.0) < 3.0 * 2.0 / std::sqrt(2.0 * n));
}

TEST_CASE("planted missing months are counted exactly") {
  SynthSpec spec;
  spec.n_sites = 100;
  spec.dim = 2;
  spec.missing_fraction = 0.005;
  const auto out = generate_dataset(spec);
  CHECK(out.planted_missing == 48);
  CHECK(out.dataset.missing_count() == 48);
  CHECK(missing_fraction(out.dataset) == doctest::Approx(0.005));
}

TEST_CASE("noiseless step: TED is zero before the event and the step size at it") {
  SynthSpec spec;
  spec.n_sites = 10;
  spec.dim = 8;
  spec.amplitude = 0.0;
  spec.looted_fraction = 1.0;
  spec.seed = 4;
  // Near-zero noise; magnitude is in noise units, so this is a step of 3.
  spec.noise_sigma = 1e-12;
  spec.magnitude = 3.0e12;
  const auto out = generate_dataset(spec);
  for (std::size_t i = 0; i < out.dataset.series.size(); ++i) {
    const auto& s = out.dataset.series[i];
    const int c = *out.dataset.labels[i].event_month;
    const auto raw = ted_score(s, TedConfig{}).raw;
    const double expect = 3.0 * std::sqrt(static_cast<double>(out.changed_dims_count[i]));
    for (int t = 0; t < c; ++t) CHECK(raw[static_cast<std::size_t>(t)] < 1e-6);
    CHECK(raw[static_cast<std::size_t>(c)] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("change profiles") {
  SynthSpec spec;
  spec.n_sites = 1;
  spec.dim = 1;
  spec.looted_fraction = 1.0;
  spec.noise_sigma = 1e-12;
  spec.amplitude = 0.0;
  spec.magnitude = 1e12;
  spec.change_length = 4;
  spec.lead = 2;
  spec.change = ChangeKind::kRamp;
  const auto ramp = generate_dataset(spec);
  const int onset = ramp.onset[0];
  CHECK(onset == *ramp.dataset.labels[0].event_month - 2);
  const auto& s = ramp.dataset.series[0];
  const double sign = s.row(static_cast<std::size_t>(onset + 3))[0] > 0 ? 1.0 : -1.0;
  CHECK(std::abs(s.row(static_cast<std::size_t>(onset - 1))[0]) < 1e-6);
  CHECK(sign * s.row(static_cast<std::size_t>(onset))[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(sign * s.row(static_cast<std::size_t>(onset + 1))[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(sign * s.row(static_cast<std::size_t>(onset + 10))[0] == doctest::Approx(1.0).epsilon(1e-6));

  spec.change = ChangeKind::kTransient;
  spec.lead = 0;
  const auto tr = generate_dataset(spec);
  const auto& u = tr.dataset.series[0];
  const auto c = static_cast<std::size_t>(tr.onset[0]);
  CHECK(std::abs(u.row(c + 3)[0]) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(u.row(c + 4)[0]) < 1e-6);
}

TEST_CASE("generator settings validation and json") {
  SynthSpec spec;
  spec.noise_sigma = 0.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SynthSpec{};
  spec.looted_fraction = 1.5;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SynthSpec{};
  spec.axis.length = 10;
  spec.event_min = 1;
  spec.event_max = 8;
  CHECK(spec.warnings().size() == 1);
  const auto j = nlohmann::json::parse(R"({"n_sites": 5, "d": 3, "change": "ramp", "axis": {"T": 48}})");
  const auto parsed = j.get<SynthSpec>();
  CHECK(parsed.n_sites == 5);
  CHECK(parsed.change == ChangeKind::kRamp);
  CHECK(parsed.axis.length == 48);
  const auto again = nlohmann::json(parsed).get<SynthSpec>();
  CHECK(again.dim == 3);
}
