#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "watch/binio.hpp"
#include "watch/datamodel.hpp"
#include "watch/error.hpp"

using namespace watch;
using testing::TempDir;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kUsage;
}

Dataset small_dataset() {
  Rng rng(1);
  Dataset ds;
  ds.dim = 3;
  for (int i = 0; i < 4; ++i) ds.series.push_back(testing::random_series("site" + std::to_string(i), 96, 3, rng));
  ds.series[1].available[5] = 0;
  ds.labels.push_back({"site0", true, 30});
  ds.labels.push_back({"site1", true, std::nullopt});
  ds.labels.push_back({"site2", false, std::nullopt});
  ds.splits["site0"] = Split::kTrain;
  ds.splits["site1"] = Split::kVal;
  ds.splits["site2"] = Split::kTest;
  ds.groups["site3"] = "parent";
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("time axis indexing") {
  TimeAxis axis;
  CHECK(axis.month_index(2020, 12) == 47);
  CHECK(axis.month_index(2024, 12) == 95);
  CHECK(axis.month_index(2017, 1) == 0);
  CHECK(axis.calendar_month(0) == 1);
  CHECK(axis.calendar_month(47) == 12);
  CHECK(axis.calendar_month(50) == 3);
  CHECK(axis.year_of(47) == 2020);
  CHECK(code_of([&] { (void)axis.month_index(2025, 1); }) == ErrorCode::kValidation);
  CHECK(code_of([&] { (void)axis.month_index(2016, 12); }) == ErrorCode::kValidation);

  TimeAxis shifted{2018, 7, 24};
  CHECK(shifted.calendar_month(0) == 7);
  CHECK(shifted.calendar_month(6) == 1);
  CHECK(shifted.month_index(2019, 1) == 6);
}

TEST_CASE("dataset validation rejects inconsistent inputs") {
  SUBCASE("dimension mismatch") {
    Dataset ds = small_dataset();
    ds.series[2].dim = 4;
    ds.series[2].values.resize(96 * 4);
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
  SUBCASE("non-finite available value") {
    Dataset ds = small_dataset();
    ds.series[0].values[7] = std::nan("");
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
  SUBCASE("non-finite value in an unavailable month is tolerated") {
    Dataset ds = small_dataset();
    ds.series[1].row(5)[0] = std::nan("");
    CHECK_NOTHROW(ds.validate());
  }
  SUBCASE("duplicate site") {
    Dataset ds = small_dataset();
    ds.series[3].site_id = "site0";
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
  SUBCASE("label for unknown site") {
    Dataset ds = small_dataset();
    ds.labels.push_back({"ghost", false, std::nullopt});
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
  SUBCASE("event month on preserved site") {
    Dataset ds = small_dataset();
    ds.labels[2].event_month = 4;
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
  SUBCASE("event month outside the axis") {
    Dataset ds = small_dataset();
    ds.labels[0].event_month = 96;
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
  SUBCASE("site id with a comma") {
    Dataset ds = small_dataset();
    ds.series[3].site_id = "a,b";
    ds.groups.clear();
    CHECK(code_of([&] { ds.validate(); }) == ErrorCode::kValidation);
  }
}

TEST_CASE("dataset lookups") {
  const Dataset ds = small_dataset();
  REQUIRE(ds.find("site2") != nullptr);
  CHECK(ds.find("nope") == nullptr);
  CHECK(ds.label_for("site0")->event_month == 30);
  CHECK(ds.label_for("site3") == nullptr);
  CHECK(ds.split_of("site1") == Split::kVal);
  CHECK_FALSE(ds.split_of("site3").has_value());
  CHECK(ds.group_of("site3") == "parent");
  CHECK(ds.group_of("site0") == "site0");
  CHECK(ds.missing_count() == 1);
}

TEST_CASE("dataset save/load is bit-exact") {
  TempDir dir("ds");
  const Dataset ds = small_dataset();
  const auto manifest = save_dataset(ds, dir.path());
  const Dataset back = load_dataset(manifest);
  REQUIRE(back.series.size() == ds.series.size());
  CHECK(back.axis == ds.axis);
  CHECK(back.dim == ds.dim);
  for (std::size_t i = 0; i < ds.series.size(); ++i) {
    CHECK(back.series[i].site_id == ds.series[i].site_id);
    CHECK(back.series[i].available == ds.series[i].available);
    for (std::size_t t = 0; t < ds.series[i].length(); ++t) {
      if (!ds.series[i].is_available(t)) continue;
      for (std::size_t j = 0; j < ds.dim; ++j) CHECK(back.series[i].row(t)[j] == ds.series[i].row(t)[j]);
    }
  }
  REQUIRE(back.labels.size() == 3);
  CHECK(back.label_for("site0")->event_month == 30);
  CHECK(back.label_for("site1")->looted);
  CHECK_FALSE(back.label_for("site1")->event_month.has_value());
  CHECK(back.splits == ds.splits);
  CHECK(back.groups == ds.groups);
  // a second save reproduces the same series bytes
  TempDir dir2("ds2");
  save_dataset(back, dir2.path());
  for (const auto& entry : std::filesystem::directory_iterator(dir.path() / "series")) {
    CHECK(binio::read_file(entry.path()) == binio::read_file(dir2.path() / "series" / entry.path().filename()));
  }
}

TEST_CASE("series files: binary header and CSV fallback") {
  TempDir dir("series");
  TimeAxis axis;
  axis.length = 4;
  {
    std::ofstream out(dir / "a.csv");
    out << "t,f0,f1\n0,1.5,2\n1,,\n2,3,4\n";
  }
  const SiteSeries s = read_series_file(dir / "a.csv", "a", axis);
  CHECK(s.dim == 2);
  CHECK(s.available == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(s.row(2)[1] == 4.0);

  write_series_file(dir / "a.wtch", s);
  const auto bytes = binio::read_file(dir / "a.wtch");
  REQUIRE(bytes.size() == 4 + 2 + 4 + 4 + 4 + 4 * 2 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "WTCH");
  const SiteSeries back = read_series_file(dir / "a.wtch", "a", axis);
  CHECK(back.available == s.available);
  CHECK(back.row(0)[0] == 1.5);

  TimeAxis wrong;
  wrong.length = 5;
  CHECK(code_of([&] { (void)read_series_file(dir / "a.wtch", "a", wrong); }) == ErrorCode::kValidation);
  auto corrupt = bytes;
  corrupt[0] = 'X';
  binio::write_file(dir / "bad.wtch", corrupt);
  CHECK(code_of([&] { (void)read_series_file(dir / "bad.wtch", "a", axis); }) == ErrorCode::kIo);
  corrupt = bytes;
  corrupt.resize(corrupt.size() - 3);
  binio::write_file(dir / "short.wtch", corrupt);
  CHECK(code_of([&] { (void)read_series_file(dir / "short.wtch", "a", axis); }) == ErrorCode::kIo);
}

TEST_CASE("score directories round-trip exactly") {
  TempDir dir("scores");
  std::vector<ScoreSeries> scores(2);
  scores[0] = {"x/y", {0.1, 1.0 / 3.0, -2.0}, {0.5, 0.25, 1.0}, "ted-l2"};
  scores[1] = {"z", {1, 2, 3}, {0, 0.5, 1}, "ted-l2"};
  write_score_dir(dir.path(), scores);
  const auto back = read_score_dir(dir.path());
  REQUIRE(back.size() == 2);
  CHECK(back[0].site_id == "x/y");
  CHECK(back[0].raw == scores[0].raw);
  CHECK(back[0].probability == scores[0].probability);
  CHECK(back[1].scorer_tag == "ted-l2");
}

TEST_CASE("manifest with missing series file is an I/O error") {
  TempDir dir("missing");
  {
    std::ofstream out(dir / "manifest.json");
    out << R"({"axis":{"origin_year":2017,"origin_month":1,"T":96},"d":2,
               "sites":[{"site_id":"a","series_file":"nope.wtch","split":"train"}],"labels":[]})";
  }
  CHECK(code_of([&] { (void)load_dataset(dir / "manifest.json"); }) == ErrorCode::kIo);
}
