#pragma once

// Seeded synthetic site series with planted change events, plus an
// exhaustive-scan recall evaluator kept independent of the eval module.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "watch/datamodel.hpp"
#include "watch/eval.hpp"

namespace watch {

enum class ChangeKind { kNone, kStep, kRamp, kTransient };

ChangeKind parse_change_kind(const std::string& name);
const char* change_kind_name(ChangeKind kind);

struct SynthSpec {
  std::size_t n_sites = 200;
  TimeAxis axis;
  std::size_t dim = 32;
  double amplitude = 1.0;    // seasonal sinusoid amplitude
  double noise_sigma = 1.0;  // i.i.d. Gaussian noise per entry
  double site_offset = 0.0;  // std of a per-site, per-dimension level shift
  ChangeKind change = ChangeKind::kStep;
  double magnitude = 5.0;        // change size in multiples of noise_sigma
  int change_length = 6;         // ramp duration or transient duration in months
  int lead = 0;                  // change onset = labeled month - lead
  double dim_fraction = 0.25;    // share of dimensions touched by a change
  double looted_fraction = 0.5;
  double known_fraction = 1.0;   // looted sites whose month is labeled
  double missing_fraction = 0.0;
  int event_min = 12;
  int event_max = 83;  // inclusive
  // Unlabeled nuisance transients (1-2 months) planted on every site.
  int nuisance_per_site = 0;
  double nuisance_magnitude = 3.0;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  // Non-fatal issues, e.g. a season that the axis is too short to identify.
  std::vector<std::string> warnings() const;
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

struct SynthDataset {
  Dataset dataset;
  // Ground truth for every looted site, including ones whose month is unlabeled.
  std::vector<int> onset;  // per series; -1 for preserved sites
  std::vector<std::size_t> changed_dims_count;
  std::size_t planted_missing = 0;
};

// Deterministic per seed; each site draws from its own (seed, site index) stream.
SynthDataset generate_dataset(const SynthSpec& spec);

// Same contract as recall_suite, computed by exhaustive scans.
EvalReport oracle_recall(const std::vector<ScoreSeries>& scores, const std::vector<SiteLabel>& labels,
                         const EvalConfig& cfg);

}  // namespace watch
