#include "watch/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "watch/binio.hpp"
#include "watch/error.hpp"

namespace watch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint16_t kSeriesVersion = 1;

std::string padded(std::size_t i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu%s", i, ext);
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::kIo, context + ": cannot parse number '" + s + "'");
  }
}

SiteSeries read_series_csv(const fs::path& path, const std::string& site_id, const TimeAxis& axis) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kIo, path.string() + ": empty CSV");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t") fail(ErrorCode::kIo, path.string() + ": header must start with 't'");
  const std::size_t d = header.size() - 1;
  SiteSeries s(site_id, axis, d);
  std::fill(s.available.begin(), s.available.end(), 0);  // rows absent from the file stay missing
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const double tv = parse_double(cells[0], path.string());
    const int t = static_cast<int>(tv);
    if (!axis.contains(t)) fail(ErrorCode::kValidation, path.string() + ": month index out of range");
    bool blank = true;
    for (std::size_t j = 1; j < cells.size(); ++j) blank = blank && cells[j].empty();
    if (blank) continue;
    if (cells.size() != d + 1) fail(ErrorCode::kValidation, path.string() + ": row width mismatch");
    for (std::size_t j = 0; j < d; ++j) s.row(t)[j] = parse_double(cells[j + 1], path.string());
    s.available[t] = 1;
  }
  return s;
}

}  // namespace

void TimeAxis::validate() const {
  if (length < 1) fail(ErrorCode::kValidation, "time axis length must be >= 1");
  if (origin_month < 1 || origin_month > 12) fail(ErrorCode::kValidation, "origin month must be in 1..12");
}

int TimeAxis::month_index(int year, int month) const {
  if (month < 1 || month > 12) fail(ErrorCode::kValidation, "calendar month must be in 1..12");
  const int idx = (year - origin_year) * 12 + (month - origin_month);
  if (!contains(idx)) {
    fail(ErrorCode::kValidation,
         "date " + std::to_string(year) + "-" + std::to_string(month) + " outside the time axis");
  }
  return idx;
}

SiteSeries::SiteSeries(std::string id, TimeAxis ax, std::size_t d)
    : site_id(std::move(id)),
      axis(ax),
      dim(d),
      values(static_cast<std::size_t>(ax.length) * d, 0.0),
      available(static_cast<std::size_t>(ax.length), 1) {}

std::size_t SiteSeries::missing_count() const {
  std::size_t n = 0;
  for (auto a : available) n += a == 0;
  return n;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kValidation, "unknown split '" + name + "'");
}

void Dataset::validate() {
  axis.validate();
  series_index_.clear();
  label_index_.clear();
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    if (s.dim != dim) {
      fail(ErrorCode::kValidation, "dimension mismatch: site '" + s.site_id + "' has d=" +
                                       std::to_string(s.dim) + ", dataset d=" + std::to_string(dim));
    }
    if (!(s.axis == axis)) fail(ErrorCode::kValidation, "site '" + s.site_id + "' has a different time axis");
    if (s.values.size() != s.length() * dim || s.available.size() != s.length()) {
      fail(ErrorCode::kValidation, "site '" + s.site_id + "' has inconsistent storage");
    }
    for (std::size_t t = 0; t < s.length(); ++t) {
      if (!s.is_available(t)) continue;
      for (double v : s.row(t)) {
        if (!std::isfinite(v)) fail(ErrorCode::kValidation, "non-finite value in available month of '" + s.site_id + "'");
      }
    }
    if (s.site_id.empty() || s.site_id.find_first_of(",\n\r") != std::string::npos) {
      fail(ErrorCode::kValidation, "site_id must be non-empty and free of commas/newlines: '" + s.site_id + "'");
    }
    if (!series_index_.emplace(s.site_id, i).second) {
      fail(ErrorCode::kValidation, "duplicate site_id '" + s.site_id + "'");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    if (!series_index_.contains(l.site_id)) {
      fail(ErrorCode::kValidation, "label references unknown site '" + l.site_id + "'");
    }
    if (l.event_month) {
      if (!l.looted) fail(ErrorCode::kValidation, "event month on non-looted site '" + l.site_id + "'");
      if (!axis.contains(*l.event_month)) {
        fail(ErrorCode::kValidation, "event month index " + std::to_string(*l.event_month) +
                                         " out of range for site '" + l.site_id + "'");
      }
    }
    if (!label_index_.emplace(l.site_id, i).second) {
      fail(ErrorCode::kValidation, "duplicate label for '" + l.site_id + "'");
    }
  }
  for (const auto& [id, split] : splits) {
    if (!series_index_.contains(id)) fail(ErrorCode::kValidation, "split references unknown site '" + id + "'");
  }
}

const SiteSeries* Dataset::find(const std::string& site_id) const {
  if (series_index_.size() != series.size()) {
    for (const auto& s : series) {
      if (s.site_id == site_id) return &s;
    }
    return nullptr;
  }
  auto it = series_index_.find(site_id);
  return it == series_index_.end() ? nullptr : &series[it->second];
}

const SiteLabel* Dataset::label_for(const std::string& site_id) const {
  if (label_index_.size() != labels.size()) {
    for (const auto& l : labels) {
      if (l.site_id == site_id) return &l;
    }
    return nullptr;
  }
  auto it = label_index_.find(site_id);
  return it == label_index_.end() ? nullptr : &labels[it->second];
}

std::optional<Split> Dataset::split_of(const std::string& site_id) const {
  auto it = splits.find(site_id);
  if (it == splits.end()) return std::nullopt;
  return it->second;
}

std::string Dataset::group_of(const std::string& site_id) const {
  auto it = groups.find(site_id);
  return it == groups.end() ? site_id : it->second;
}

std::size_t Dataset::missing_count() const {
  std::size_t n = 0;
  for (const auto& s : series) n += s.missing_count();
  return n;
}

std::vector<std::uint8_t> encode_series(const SiteSeries& series) {
  binio::Writer w;
  w.magic("WTCH");
  w.put<std::uint16_t>(kSeriesVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(series.length()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(series.dim));
  w.raw(series.available);
  w.floats(series.values);
  return w.bytes();
}

void write_series_file(const fs::path& path, const SiteSeries& series) {
  binio::write_file(path, encode_series(series));
}

SiteSeries read_series_file(const fs::path& path, const std::string& site_id, const TimeAxis& axis) {
  if (path.extension() == ".csv") return read_series_csv(path, site_id, axis);
  const auto bytes = binio::read_file(path);
  binio::Reader r(bytes, path.string());
  r.expect_magic("WTCH");
  const auto version = r.get<std::uint16_t>();
  if (version != kSeriesVersion) fail(ErrorCode::kIo, path.string() + ": unsupported series version " + std::to_string(version));
  const auto t = r.get<std::uint32_t>();
  const auto d = r.get<std::uint32_t>();
  if (static_cast<int>(t) != axis.length) {
    fail(ErrorCode::kValidation, path.string() + ": T=" + std::to_string(t) + " does not match axis length");
  }
  SiteSeries s(site_id, axis, d);
  const auto avail = r.raw(t);
  for (std::size_t i = 0; i < t; ++i) {
    if (avail[i] > 1) fail(ErrorCode::kIo, path.string() + ": availability byte must be 0 or 1");
    s.available[i] = avail[i];
  }
  r.floats(s.values);
  r.expect_end();
  return s;
}

namespace {

SiteLabel parse_label(const json& e, const TimeAxis& axis) {
  SiteLabel l;
  l.site_id = e.at("site_id").get<std::string>();
  l.looted = e.at("looted").get<bool>();
  if (e.contains("event_index") && !e.at("event_index").is_null()) {
    l.event_month = e.at("event_index").get<int>();
  } else if (e.contains("event_year") && !e.at("event_year").is_null()) {
    const int y = e.at("event_year").get<int>();
    const int mo = e.at("event_month").get<int>();
    if (mo < 1 || mo > 12) fail(ErrorCode::kValidation, "label for '" + l.site_id + "': calendar month out of range");
    const int idx = (y - axis.origin_year) * 12 + (mo - axis.origin_month);
    if (!axis.contains(idx)) fail(ErrorCode::kValidation, "label for '" + l.site_id + "': event month out of range");
    l.event_month = idx;
  }
  return l;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) fail(ErrorCode::kIo, "manifest not found: " + manifest_path.string());
  json m;
  try {
    m = json::parse(binio::read_text(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  try {
    const auto& ax = m.at("axis");
    ds.axis.origin_year = ax.at("origin_year").get<int>();
    ds.axis.origin_month = ax.at("origin_month").get<int>();
    ds.axis.length = ax.contains("length") ? ax.at("length").get<int>() : ax.at("T").get<int>();
    ds.axis.validate();
    ds.dim = m.at("d").get<std::size_t>();
    for (const auto& e : m.at("sites")) {
      const auto id = e.at("site_id").get<std::string>();
      fs::path file = e.at("series_file").get<std::string>();
      if (file.is_relative()) file = base / file;
      if (!fs::exists(file)) fail(ErrorCode::kIo, "series file not found: " + file.string());
      ds.series.push_back(read_series_file(file, id, ds.axis));
      if (e.contains("split") && !e.at("split").is_null()) ds.splits[id] = parse_split(e.at("split").get<std::string>());
      if (e.contains("group") && !e.at("group").is_null()) ds.groups[id] = e.at("group").get<std::string>();
    }
    if (m.contains("labels")) {
      for (const auto& e : m.at("labels")) ds.labels.push_back(parse_label(e, ds.axis));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, manifest_path.string() + ": malformed manifest: " + e.what());
  }
  ds.validate();
  return ds;
}

void load_annotations(Dataset& dataset, const fs::path& path) {
  json m;
  try {
    m = json::parse(binio::read_text(path));
    if (m.contains("sites")) {
      for (const auto& e : m.at("sites")) {
        const auto id = e.at("site_id").get<std::string>();
        if (e.contains("split") && !e.at("split").is_null()) dataset.splits[id] = parse_split(e.at("split").get<std::string>());
        if (e.contains("group") && !e.at("group").is_null()) dataset.groups[id] = e.at("group").get<std::string>();
      }
    }
    if (m.contains("labels")) {
      for (const auto& e : m.at("labels")) dataset.labels.push_back(parse_label(e, dataset.axis));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, path.string() + ": malformed annotations: " + e.what());
  }
  dataset.validate();
}

fs::path save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "series");
  json m;
  m["format"] = "watch-manifest";
  m["version"] = 1;
  m["axis"] = {{"origin_year", dataset.axis.origin_year},
               {"origin_month", dataset.axis.origin_month},
               {"length", dataset.axis.length}};
  m["d"] = dataset.dim;
  json sites = json::array();
  for (std::size_t i = 0; i < dataset.series.size(); ++i) {
    const auto& s = dataset.series[i];
    const std::string rel = "series/" + padded(i, ".wtch");
    write_series_file(dir / rel, s);
    json e{{"site_id", s.site_id}, {"series_file", rel}};
    if (auto sp = dataset.split_of(s.site_id)) e["split"] = split_name(*sp);
    if (auto it = dataset.groups.find(s.site_id); it != dataset.groups.end()) e["group"] = it->second;
    sites.push_back(std::move(e));
  }
  m["sites"] = std::move(sites);
  json labels = json::array();
  for (const auto& l : dataset.labels) {
    json e{{"site_id", l.site_id}, {"looted", l.looted}};
    if (l.event_month) {
      e["event_year"] = dataset.axis.year_of(*l.event_month);
      e["event_month"] = dataset.axis.calendar_month(*l.event_month);
    }
    labels.push_back(std::move(e));
  }
  m["labels"] = std::move(labels);
  const fs::path manifest = dir / "manifest.json";
  binio::write_text(manifest, m.dump(2) + "\n");
  return manifest;
}

void write_score_file(const fs::path& path, const ScoreSeries& scores) {
  std::string out = "t,raw,probability\n";
  for (std::size_t t = 0; t < scores.raw.size(); ++t) {
    out += std::to_string(t) + "," + format_double(scores.raw[t]) + "," + format_double(scores.probability[t]) + "\n";
  }
  binio::write_text(path, out);
}

ScoreSeries read_score_file(const fs::path& path, const std::string& site_id) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  ScoreSeries s;
  s.site_id = site_id;
  std::string line;
  std::getline(in, line);
  if (line.rfind("t,raw,probability", 0) != 0) fail(ErrorCode::kIo, path.string() + ": bad score header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) fail(ErrorCode::kIo, path.string() + ": bad score row");
    if (static_cast<std::size_t>(parse_double(cells[0], path.string())) != s.raw.size()) {
      fail(ErrorCode::kIo, path.string() + ": score rows out of order");
    }
    s.raw.push_back(parse_double(cells[1], path.string()));
    s.probability.push_back(parse_double(cells[2], path.string()));
  }
  return s;
}

void write_score_dir(const fs::path& dir, const std::vector<ScoreSeries>& scores) {
  fs::create_directories(dir);
  std::string index = "site_id,file,scorer\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::string file = padded(i, ".csv");
    write_score_file(dir / file, scores[i]);
    index += scores[i].site_id + "," + file + "," + scores[i].scorer_tag + "\n";
  }
  binio::write_text(dir / "index.csv", index);
}

std::vector<ScoreSeries> read_score_dir(const fs::path& dir) {
  std::ifstream in(dir / "index.csv");
  if (!in) fail(ErrorCode::kIo, "score index not found in " + dir.string());
  std::vector<ScoreSeries> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 2) fail(ErrorCode::kIo, "malformed score index in " + dir.string());
    auto s = read_score_file(dir / cells[1], cells[0]);
    if (cells.size() > 2) s.scorer_tag = cells[2];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace watch
