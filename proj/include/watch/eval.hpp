#pragma once

// Temporally tolerant, direction-aware recall over top-K predicted months.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "watch/datamodel.hpp"

namespace watch {

struct MonthWindow {
  int begin = 0;  // inclusive
  int end = -1;   // exclusive; -1 means "to the end of the axis"

  int resolved_end(int length) const { return end < 0 ? length : end; }
  bool contains(int t, int length) const { return t >= begin && t < resolved_end(length); }
};

struct EvalConfig {
  int k = 12;
  std::vector<int> margins{0, 1, 2, 3, 4, 5, 6};
  MonthWindow window;

  void validate() const;
};

struct SiteHits {
  std::string site_id;
  int event_month = 0;
  std::vector<int> topk;
  std::vector<std::uint8_t> sym, pos, neg;  // one entry per margin
};

struct EvalReport {
  std::vector<int> margins;
  std::vector<double> r_sym, r_pos, r_neg;  // fractions, one per margin
  std::optional<double> gap_pp;             // directional gap in percentage points
  std::size_t n_sites = 0;
  std::vector<SiteHits> sites;

  std::size_t margin_slot(int m) const;  // throws when m is absent
};

// Top-K months by descending probability inside `window`, ties to the earlier month.
std::vector<int> topk_months(const std::vector<double>& probability, int k, const MonthWindow& window);

bool hit_symmetric(const std::vector<int>& topk, int event, int margin);
bool hit_positive(const std::vector<int>& topk, int event, int margin);
bool hit_negative(const std::vector<int>& topk, int event, int margin);

// Recall over sites carrying an event month inside the window. Sites without a
// score series are an error; score series without a qualifying label are ignored.
EvalReport recall_suite(const std::vector<ScoreSeries>& scores, const std::vector<SiteLabel>& labels,
                        const EvalConfig& cfg);

// Mean over m = 0..6 of R+(m) - R-(m), in percentage points.
double directional_gap(const EvalReport& report);

struct MacroRow {
  int margin = 0;
  std::map<std::string, double> r_sym;  // method -> macro recall (fraction)
};

struct MacroTable {
  std::vector<std::string> methods;
  std::vector<MacroRow> rows;
  // Paired difference between two methods, per margin (fractions).
  std::vector<double> delta(const std::string& minuend, const std::string& subtrahend) const;
};

// reports[method][embedding]; unweighted mean over embeddings per margin.
MacroTable macro_average(const std::map<std::string, std::map<std::string, EvalReport>>& reports);

// Rendering: tab-separated rows (method, embedding, margin, R_sym, R+, R-) in percent.
std::string render_report_table(const std::string& method, const std::string& embedding, const EvalReport& report);
std::string render_macro_table(const MacroTable& table, const std::string& minuend = "sscd",
                               const std::string& subtrahend = "ted");

}  // namespace watch
