#include "watch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "watch/error.hpp"
#include "watch/random.hpp"

namespace watch {

namespace {

constexpr std::uint64_t kGlobalStream = 0xFFFFFFFFull;

float snap(double v) { return static_cast<float>(v); }

std::string site_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "site-%05zu", i);
  return buf;
}

}  // namespace

ChangeKind parse_change_kind(const std::string& name) {
  if (name == "none") return ChangeKind::kNone;
  if (name == "step") return ChangeKind::kStep;
  if (name == "ramp") return ChangeKind::kRamp;
  if (name == "transient") return ChangeKind::kTransient;
  fail(ErrorCode::kValidation, "unknown change model '" + name + "' (expected none, step, ramp or transient)");
}

const char* change_kind_name(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::kNone: return "none";
    case ChangeKind::kStep: return "step";
    case ChangeKind::kRamp: return "ramp";
    case ChangeKind::kTransient: return "transient";
  }
  return "none";
}

void SynthSpec::validate() const {
  axis.validate();
  if (n_sites == 0 || dim == 0) fail(ErrorCode::kValidation, "synth needs n_sites >= 1 and d >= 1");
  if (!(noise_sigma > 0)) fail(ErrorCode::kValidation, "noise_sigma must be positive");
  if (amplitude < 0 || site_offset < 0 || magnitude < 0 || nuisance_magnitude < 0) {
    fail(ErrorCode::kValidation, "amplitudes and magnitudes must be non-negative");
  }
  for (double f : {dim_fraction, looted_fraction, known_fraction, missing_fraction, train_fraction, val_fraction}) {
    if (!(f >= 0 && f <= 1)) fail(ErrorCode::kValidation, "fractions must lie in [0, 1]");
  }
  if (train_fraction + val_fraction > 1.0) fail(ErrorCode::kValidation, "train + val fractions exceed 1");
  if (change_length < 1) fail(ErrorCode::kValidation, "change_length must be >= 1");
  if (lead < 0) fail(ErrorCode::kValidation, "lead must be >= 0");
  if (event_min > event_max || !axis.contains(event_min) || !axis.contains(event_max)) {
    fail(ErrorCode::kValidation, "event range must be a non-empty interval inside the axis");
  }
  if (nuisance_per_site < 0) fail(ErrorCode::kValidation, "nuisance_per_site must be >= 0");
}

std::vector<std::string> SynthSpec::warnings() const {
  std::vector<std::string> out;
  if (axis.length < 12 && amplitude > 0) out.push_back("axis shorter than 12 months: seasonal cycle is unidentifiable");
  if (event_min - lead < 0) out.push_back("lead pushes some change onsets before the first month; they are clipped");
  return out;
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"n_sites", s.n_sites},
                     {"axis", {{"origin_year", s.axis.origin_year}, {"origin_month", s.axis.origin_month}, {"T", s.axis.length}}},
                     {"d", s.dim},
                     {"amplitude", s.amplitude},
                     {"noise_sigma", s.noise_sigma},
                     {"site_offset", s.site_offset},
                     {"change", change_kind_name(s.change)},
                     {"magnitude", s.magnitude},
                     {"change_length", s.change_length},
                     {"lead", s.lead},
                     {"dim_fraction", s.dim_fraction},
                     {"looted_fraction", s.looted_fraction},
                     {"known_fraction", s.known_fraction},
                     {"missing_fraction", s.missing_fraction},
                     {"event_min", s.event_min},
                     {"event_max", s.event_max},
                     {"nuisance_per_site", s.nuisance_per_site},
                     {"nuisance_magnitude", s.nuisance_magnitude},
                     {"train_fraction", s.train_fraction},
                     {"val_fraction", s.val_fraction},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  const auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("n_sites", s.n_sites);
  if (j.contains("axis")) {
    const auto& a = j.at("axis");
    if (a.contains("origin_year")) a.at("origin_year").get_to(s.axis.origin_year);
    if (a.contains("origin_month")) a.at("origin_month").get_to(s.axis.origin_month);
    if (a.contains("T")) a.at("T").get_to(s.axis.length);
  }
  opt("T", s.axis.length);
  opt("d", s.dim);
  opt("amplitude", s.amplitude);
  opt("noise_sigma", s.noise_sigma);
  opt("site_offset", s.site_offset);
  if (j.contains("change")) s.change = parse_change_kind(j.at("change").get<std::string>());
  opt("magnitude", s.magnitude);
  opt("change_length", s.change_length);
  opt("lead", s.lead);
  opt("dim_fraction", s.dim_fraction);
  opt("looted_fraction", s.looted_fraction);
  opt("known_fraction", s.known_fraction);
  opt("missing_fraction", s.missing_fraction);
  opt("event_min", s.event_min);
  opt("event_max", s.event_max);
  opt("nuisance_per_site", s.nuisance_per_site);
  opt("nuisance_magnitude", s.nuisance_magnitude);
  opt("train_fraction", s.train_fraction);
  opt("val_fraction", s.val_fraction);
  opt("seed", s.seed);
}

namespace {

std::vector<std::size_t> pick_dims(std::size_t dim, double fraction, Rng& rng) {
  const auto n = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(dim))), 1, dim);
  std::vector<std::size_t> all(dim);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all.begin(), all.end());
  all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

// Shape of the planted change at month t relative to its onset, in [0, 1].
double change_profile(ChangeKind kind, int t, int onset, int length) {
  if (t < onset) return 0.0;
  switch (kind) {
    case ChangeKind::kNone: return 0.0;
    case ChangeKind::kStep: return 1.0;
    case ChangeKind::kRamp: return std::min(1.0, static_cast<double>(t - onset + 1) / static_cast<double>(length));
    case ChangeKind::kTransient: return t - onset < length ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace

SynthDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_sites;
  const std::size_t d = spec.dim;
  const int t_len = spec.axis.length;
  Rng global(spec.seed, kGlobalStream);

  std::vector<double> phase(d);
  for (auto& p : phase) p = global.uniform(0.0, 2.0 * std::numbers::pi);

  // Role assignment: exact counts, random placement.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  global.shuffle(order.begin(), order.end());
  const auto n_looted = static_cast<std::size_t>(std::lround(spec.looted_fraction * static_cast<double>(n)));
  const auto n_known = static_cast<std::size_t>(std::lround(spec.known_fraction * static_cast<double>(n_looted)));
  std::vector<int> role(n, 0);  // 0 preserved, 1 looted unknown month, 2 looted known month
  for (std::size_t r = 0; r < n_looted; ++r) role[order[r]] = r < n_known ? 2 : 1;

  SynthDataset out;
  Dataset& ds = out.dataset;
  ds.axis = spec.axis;
  ds.dim = d;
  out.onset.assign(n, -1);
  out.changed_dims_count.assign(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(spec.seed, i);
    SiteSeries s(site_name(i), spec.axis, d);
    std::vector<double> level(d);
    for (auto& v : level) v = spec.site_offset * rng.normal();
    std::vector<double> delta(static_cast<std::size_t>(t_len) * d, 0.0);

    SiteLabel label{s.site_id, role[i] != 0, std::nullopt};
    if (role[i] != 0) {
      const int event = spec.event_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.event_max - spec.event_min + 1)));
      const int onset = std::max(0, event - spec.lead);
      out.onset[i] = onset;
      if (role[i] == 2) label.event_month = event;
      const auto dims = pick_dims(d, spec.dim_fraction, rng);
      out.changed_dims_count[i] = dims.size();
      const double size = spec.magnitude * spec.noise_sigma;
      for (std::size_t j : dims) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (int t = 0; t < t_len; ++t) {
          delta[static_cast<std::size_t>(t) * d + j] += sign * size * change_profile(spec.change, t, onset, spec.change_length);
        }
      }
    }
    for (int k = 0; k < spec.nuisance_per_site; ++k) {
      const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(t_len)));
      const int length = 1 + static_cast<int>(rng.below(2));
      const auto dims = pick_dims(d, spec.dim_fraction, rng);
      const double size = spec.nuisance_magnitude * spec.noise_sigma;
      for (std::size_t j : dims) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (int t = start; t < std::min(t_len, start + length); ++t) delta[static_cast<std::size_t>(t) * d + j] += sign * size;
      }
    }
    for (int t = 0; t < t_len; ++t) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(spec.axis.calendar_month(t) - 1) / 12.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double v = level[j] + spec.amplitude * std::sin(angle + phase[j]) + spec.noise_sigma * rng.normal() +
                         delta[static_cast<std::size_t>(t) * d + j];
        s.row(static_cast<std::size_t>(t))[j] = snap(v);
      }
    }
    ds.series.push_back(std::move(s));
    ds.labels.push_back(std::move(label));
  }

  // Missing months: an exact number of (site, month) cells, uniformly placed.
  const std::size_t cells = n * static_cast<std::size_t>(t_len);
  out.planted_missing = static_cast<std::size_t>(std::lround(spec.missing_fraction * static_cast<double>(cells)));
  if (out.planted_missing > 0) {
    std::vector<std::size_t> all(cells);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t k = 0; k < out.planted_missing; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(global.below(cells - k));
      std::swap(all[k], all[j]);
      auto& s = ds.series[all[k] / static_cast<std::size_t>(t_len)];
      const std::size_t t = all[k] % static_cast<std::size_t>(t_len);
      s.available[t] = 0;
      for (double& v : s.row(t)) v = 0.0;
    }
  }

  // Stratified splits over the three roles.
  for (int r = 0; r < 3; ++r) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (role[i] == r) members.push_back(i);
    }
    global.shuffle(members.begin(), members.end());
    const auto n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(members.size())));
    const auto n_val = std::min(members.size() - n_train,
                                static_cast<std::size_t>(std::lround(spec.val_fraction * static_cast<double>(members.size()))));
    for (std::size_t k = 0; k < members.size(); ++k) {
      const Split split = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kVal : Split::kTest);
      ds.splits[ds.series[members[k]].site_id] = split;
    }
  }
  ds.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive-scan evaluator. Deliberately shares nothing with eval.cpp beyond
// the data types.

EvalReport oracle_recall(const std::vector<ScoreSeries>& scores, const std::vector<SiteLabel>& labels,
                         const EvalConfig& cfg) {
  if (cfg.k < 1) fail(ErrorCode::kValidation, "K must be >= 1");
  if (cfg.margins.empty()) fail(ErrorCode::kValidation, "at least one margin is required");
  for (int m : cfg.margins) {
    if (m < 0) fail(ErrorCode::kValidation, "margins must be non-negative");
  }
  if (cfg.window.begin < 0) fail(ErrorCode::kValidation, "window begin must be >= 0");

  EvalReport rep;
  rep.margins = cfg.margins;
  std::vector<long> sym(cfg.margins.size()), pos(cfg.margins.size()), neg(cfg.margins.size());
  for (const auto& label : labels) {
    if (!label.looted || !label.event_month.has_value()) continue;
    const ScoreSeries* found = nullptr;
    for (const auto& s : scores) {
      if (s.site_id == label.site_id) found = &s;  // last one wins, as with a map rebuilt in order
    }
    if (found == nullptr) fail(ErrorCode::kValidation, "no scores for labeled site '" + label.site_id + "'");
    const std::vector<double>& p = found->probability;
    const int len = static_cast<int>(p.size());
    const int lo = cfg.window.begin;
    const int hi = cfg.window.end < 0 ? len : cfg.window.end;
    const int c = *label.event_month;
    if (c < lo || c >= hi) continue;
    if (hi > len || lo >= hi) fail(ErrorCode::kValidation, "evaluation window outside the series");
    if (cfg.k > hi - lo) fail(ErrorCode::kValidation, "K exceeds the evaluation window length");

    // Selection by repeated argmax; strict comparison keeps the earliest month on ties.
    std::vector<bool> taken(static_cast<std::size_t>(len), false);
    SiteHits h;
    h.site_id = label.site_id;
    h.event_month = c;
    for (int pick = 0; pick < cfg.k; ++pick) {
      int best = -1;
      for (int t = lo; t < hi; ++t) {
        if (taken[static_cast<std::size_t>(t)]) continue;
        if (best < 0 || p[static_cast<std::size_t>(t)] > p[static_cast<std::size_t>(best)]) best = t;
      }
      taken[static_cast<std::size_t>(best)] = true;
      h.topk.push_back(best);
    }
    for (std::size_t mi = 0; mi < cfg.margins.size(); ++mi) {
      const int m = cfg.margins[mi];
      bool s = false, after = false, before = false;
      for (int t : h.topk) {
        const int diff = t - c;
        if (diff >= -m && diff <= m) s = true;
        if (diff >= 0 && diff <= m) after = true;
        if (diff <= 0 && diff >= -m) before = true;
      }
      h.sym.push_back(s);
      h.pos.push_back(after);
      h.neg.push_back(before);
      sym[mi] += s;
      pos[mi] += after;
      neg[mi] += before;
    }
    rep.sites.push_back(h);
  }
  rep.n_sites = rep.sites.size();
  if (rep.n_sites == 0) fail(ErrorCode::kValidation, "no sites with a known event month inside the evaluation window");
  for (std::size_t mi = 0; mi < cfg.margins.size(); ++mi) {
    rep.r_sym.push_back(static_cast<double>(sym[mi]) / static_cast<double>(rep.n_sites));
    rep.r_pos.push_back(static_cast<double>(pos[mi]) / static_cast<double>(rep.n_sites));
    rep.r_neg.push_back(static_cast<double>(neg[mi]) / static_cast<double>(rep.n_sites));
  }
  double gap = 0.0;
  int found_margins = 0;
  for (int m = 0; m <= 6; ++m) {
    for (std::size_t mi = 0; mi < cfg.margins.size(); ++mi) {
      if (cfg.margins[mi] == m) {
        gap += rep.r_pos[mi] - rep.r_neg[mi];
        ++found_margins;
        break;
      }
    }
  }
  if (found_margins == 7) rep.gap_pp = 100.0 * gap / 7.0;
  return rep;
}

}  // namespace watch
