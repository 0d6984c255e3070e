#include "watch/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "watch/error.hpp"

namespace watch {

void EvalConfig::validate() const {
  if (k < 1) fail(ErrorCode::kValidation, "K must be >= 1");
  if (margins.empty()) fail(ErrorCode::kValidation, "at least one margin is required");
  for (int m : margins) {
    if (m < 0) fail(ErrorCode::kValidation, "margins must be non-negative");
  }
  if (window.begin < 0) fail(ErrorCode::kValidation, "window begin must be >= 0");
}

std::size_t EvalReport::margin_slot(int m) const {
  const auto it = std::find(margins.begin(), margins.end(), m);
  if (it == margins.end()) fail(ErrorCode::kValidation, "margin " + std::to_string(m) + " missing from report");
  return static_cast<std::size_t>(it - margins.begin());
}

std::vector<int> topk_months(const std::vector<double>& probability, int k, const MonthWindow& window) {
  const int len = static_cast<int>(probability.size());
  const int begin = window.begin;
  const int end = window.resolved_end(len);
  if (begin < 0 || end > len || begin >= end) fail(ErrorCode::kValidation, "evaluation window outside the series");
  if (k > end - begin) fail(ErrorCode::kValidation, "K exceeds the evaluation window length");
  std::vector<int> idx(static_cast<std::size_t>(end - begin));
  std::iota(idx.begin(), idx.end(), begin);
  const auto order = [&](int a, int b) {
    const double pa = probability[static_cast<std::size_t>(a)];
    const double pb = probability[static_cast<std::size_t>(b)];
    return pa != pb ? pa > pb : a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), order);
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

bool hit_symmetric(const std::vector<int>& topk, int event, int margin) {
  return std::any_of(topk.begin(), topk.end(), [&](int t) { return std::abs(t - event) <= margin; });
}

bool hit_positive(const std::vector<int>& topk, int event, int margin) {
  return std::any_of(topk.begin(), topk.end(), [&](int t) { return t - event >= 0 && t - event <= margin; });
}

bool hit_negative(const std::vector<int>& topk, int event, int margin) {
  return std::any_of(topk.begin(), topk.end(), [&](int t) { return event - t >= 0 && event - t <= margin; });
}

EvalReport recall_suite(const std::vector<ScoreSeries>& scores, const std::vector<SiteLabel>& labels,
                        const EvalConfig& cfg) {
  cfg.validate();
  std::map<std::string, const ScoreSeries*> by_site;
  for (const auto& s : scores) by_site[s.site_id] = &s;

  EvalReport rep;
  rep.margins = cfg.margins;
  const std::size_t nm = cfg.margins.size();
  std::vector<std::size_t> sym(nm, 0), pos(nm, 0), neg(nm, 0);
  for (const auto& label : labels) {
    if (!label.looted || !label.event_month) continue;
    const auto it = by_site.find(label.site_id);
    if (it == by_site.end()) fail(ErrorCode::kValidation, "no scores for labeled site '" + label.site_id + "'");
    const auto& p = it->second->probability;
    const int c = *label.event_month;
    if (!cfg.window.contains(c, static_cast<int>(p.size()))) continue;

    SiteHits h;
    h.site_id = label.site_id;
    h.event_month = c;
    h.topk = topk_months(p, cfg.k, cfg.window);
    for (std::size_t i = 0; i < nm; ++i) {
      const int m = cfg.margins[i];
      h.sym.push_back(hit_symmetric(h.topk, c, m));
      h.pos.push_back(hit_positive(h.topk, c, m));
      h.neg.push_back(hit_negative(h.topk, c, m));
      sym[i] += h.sym.back();
      pos[i] += h.pos.back();
      neg[i] += h.neg.back();
    }
    rep.sites.push_back(std::move(h));
  }
  rep.n_sites = rep.sites.size();
  if (rep.n_sites == 0) fail(ErrorCode::kValidation, "no sites with a known event month inside the evaluation window");
  const double n = static_cast<double>(rep.n_sites);
  for (std::size_t i = 0; i < nm; ++i) {
    rep.r_sym.push_back(static_cast<double>(sym[i]) / n);
    rep.r_pos.push_back(static_cast<double>(pos[i]) / n);
    rep.r_neg.push_back(static_cast<double>(neg[i]) / n);
  }
  bool has_gap_margins = true;
  for (int m = 0; m <= 6; ++m) {
    has_gap_margins = has_gap_margins && std::find(rep.margins.begin(), rep.margins.end(), m) != rep.margins.end();
  }
  if (has_gap_margins) rep.gap_pp = directional_gap(rep);
  return rep;
}

double directional_gap(const EvalReport& report) {
  double sum = 0.0;
  for (int m = 0; m <= 6; ++m) {
    const std::size_t i = report.margin_slot(m);
    sum += report.r_pos[i] - report.r_neg[i];
  }
  return 100.0 * sum / 7.0;
}

std::vector<double> MacroTable::delta(const std::string& minuend, const std::string& subtrahend) const {
  std::vector<double> out;
  for (const auto& row : rows) {
    const auto a = row.r_sym.find(minuend);
    const auto b = row.r_sym.find(subtrahend);
    if (a == row.r_sym.end() || b == row.r_sym.end()) fail(ErrorCode::kValidation, "delta over a missing method");
    out.push_back(a->second - b->second);
  }
  return out;
}

MacroTable macro_average(const std::map<std::string, std::map<std::string, EvalReport>>& reports) {
  if (reports.empty()) fail(ErrorCode::kValidation, "macro average over no reports");
  MacroTable table;
  const std::vector<int>* margins = nullptr;
  for (const auto& [method, by_embedding] : reports) {
    if (by_embedding.empty()) fail(ErrorCode::kValidation, "method '" + method + "' has no reports");
    table.methods.push_back(method);
    if (margins == nullptr) margins = &by_embedding.begin()->second.margins;
  }
  for (int m : *margins) {
    MacroRow row;
    row.margin = m;
    for (const auto& [method, by_embedding] : reports) {
      double sum = 0.0;
      for (const auto& [embedding, rep] : by_embedding) sum += rep.r_sym[rep.margin_slot(m)];
      row.r_sym[method] = sum / static_cast<double>(by_embedding.size());
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {
std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}
}  // namespace

std::string render_report_table(const std::string& method, const std::string& embedding, const EvalReport& report) {
  std::string out;
  for (std::size_t i = 0; i < report.margins.size(); ++i) {
    out += method + "\t" + embedding + "\t" + std::to_string(report.margins[i]) + "\t" + pct(report.r_sym[i]) + "\t" +
           pct(report.r_pos[i]) + "\t" + pct(report.r_neg[i]) + "\n";
  }
  return out;
}

std::string render_macro_table(const MacroTable& table, const std::string& minuend, const std::string& subtrahend) {
  std::string out = "margin";
  for (const auto& m : table.methods) out += "\t" + m;
  const bool with_delta = std::find(table.methods.begin(), table.methods.end(), minuend) != table.methods.end() &&
                          std::find(table.methods.begin(), table.methods.end(), subtrahend) != table.methods.end();
  if (with_delta) out += "\tdelta";
  out += "\n";
  const auto d = with_delta ? table.delta(minuend, subtrahend) : std::vector<double>{};
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out += std::to_string(table.rows[i].margin);
    for (const auto& m : table.methods) out += "\t" + pct(table.rows[i].r_sym.at(m));
    if (with_delta) out += "\t" + pct(d[i]);
    out += "\n";
  }
  return out;
}

}  // namespace watch
