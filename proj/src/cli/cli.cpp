#include "watch/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "watch/binio.hpp"
#include "watch/datamodel.hpp"
#include "watch/error.hpp"
#include "watch/eval.hpp"
#include "watch/features.hpp"
#include "watch/normalize.hpp"
#include "watch/sscd.hpp"
#include "watch/synth.hpp"
#include "watch/ted.hpp"
#include "watch/variation.hpp"
#include "watch/ws.hpp"

namespace watch {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t hash_json(const json& j) {
  const std::string s = j.dump();
  return binio::fnv1a({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

json read_json(const fs::path& path) {
  try {
    return json::parse(binio::read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, path.string() + ": " + e.what());
  }
}

// Options every command shares.
struct Common {
  std::string config_path;
  std::optional<std::string> out;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file with per-command sections");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--set", sets, "Override a config key of the command's section: key=value (dots nest)");
  }

  json config() const { return config_path.empty() ? json::object() : read_json(config_path); }

  json section(const char* name) const {
    const json cfg = config();
    if (!cfg.is_object()) fail(ErrorCode::kValidation, "config file must hold a JSON object");
    json s = cfg.contains(name) ? cfg.at(name) : json::object();
    if (!s.is_object()) fail(ErrorCode::kValidation, std::string("config section '") + name + "' must be an object");
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) fail(ErrorCode::kUsage, "--set expects key=value, got '" + kv + "'");
      std::string key = kv.substr(0, eq);
      std::replace(key.begin(), key.end(), '.', '/');
      const std::string text = kv.substr(eq + 1);
      json value = json::parse(text, nullptr, false);
      if (value.is_discarded()) value = text;
      s[json::json_pointer("/" + key)] = std::move(value);
    }
    return s;
  }

  fs::path out_dir(const char* command) const {
    if (out) return *out;
    const char* root = std::getenv(kOutRootEnv);
    return fs::path(root != nullptr && *root != '\0' ? root : "watch-out") / command;
  }
};

template <typename T>
T field(const json& section, const char* key, const std::optional<T>& flag, T fallback) {
  if (flag) return *flag;
  if (section.contains(key)) return section.at(key).get<T>();
  return fallback;
}

void write_run(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed) {
  json run{{"command", command},
           {"version", kVersion},
           {"seed", seed},
           {"config_hash", hex64(hash_json(config))},
           {"config", config}};
  fs::create_directories(dir);
  binio::write_text(dir / "run.json", run.dump(2) + "\n");
}

void warn(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

// Raw manifests are imputed and normalized with frozen stats.
Dataset prepare(const Dataset& raw, const std::optional<CalendarStats>& stats, bool input_normalized) {
  if (input_normalized) return raw;
  if (!stats) fail(ErrorCode::kUsage, "raw input needs --stats (or pass --input-normalized)");
  if (stats->dim != raw.dim) {
    fail(ErrorCode::kValidation, "stats dimension " + std::to_string(stats->dim) + " does not match dataset dimension " +
                                     std::to_string(raw.dim));
  }
  return apply_two_stage(impute_missing(raw), *stats);
}

// ---- synth ---------------------------------------------------------------

struct SynthCmd {
  Common common;
  std::string spec_path;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--spec", spec_path, "JSON generator spec (merged over the config's synth section)");
    cmd->add_option("--seed", seed, "Generator seed");
  }

  int run(std::ostream& out, std::ostream& err) {
    json j = common.section("synth");
    if (!spec_path.empty()) j.merge_patch(read_json(spec_path));
    if (seed) j["seed"] = *seed;
    const auto spec = j.get<SynthSpec>();
    spec.validate();
    warn(err, spec.warnings());
    const auto gen = generate_dataset(spec);
    const fs::path dir = common.out_dir("synth");
    const auto manifest = save_dataset(gen.dataset, dir);
    std::string truth = "site_id,onset,changed_dims\n";
    for (std::size_t i = 0; i < gen.dataset.series.size(); ++i) {
      truth += gen.dataset.series[i].site_id + "," + std::to_string(gen.onset[i]) + "," +
               std::to_string(gen.changed_dims_count[i]) + "\n";
    }
    binio::write_text(dir / "truth.csv", truth);
    write_run(dir, "synth", json(spec), spec.seed);
    out << "wrote " << gen.dataset.series.size() << " sites to " << manifest.string() << "\n";
    return 0;
  }
};

// ---- ingest-rasters ------------------------------------------------------

struct IngestCmd {
  Common common;
  std::string in_dir;
  std::string labels_path;
  std::optional<int> origin_year, origin_month, length;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--in", in_dir, "Directory of .wtcp patch files")->required();
    cmd->add_option("--labels", labels_path, "Manifest-shaped JSON with labels and site splits/groups");
    cmd->add_option("--origin-year", origin_year);
    cmd->add_option("--origin-month", origin_month);
    cmd->add_option("--length", length, "Number of months on the axis");
  }

  int run(std::ostream& out, std::ostream&) {
    const json s = common.section("ingest");
    TimeAxis axis;
    axis.origin_year = field(s, "origin_year", origin_year, axis.origin_year);
    axis.origin_month = field(s, "origin_month", origin_month, axis.origin_month);
    axis.length = field(s, "length", length, axis.length);
    axis.validate();

    if (!fs::is_directory(in_dir)) fail(ErrorCode::kIo, "patch directory not found: " + in_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wtcp") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::kIo, "no .wtcp patch files in " + in_dir);
    std::vector<Patch> patches;
    patches.reserve(files.size());
    for (const auto& f : files) patches.push_back(read_patch_file(f));

    Dataset ds = patches_to_dataset(patches, axis);
    if (!labels_path.empty()) load_annotations(ds, labels_path);
    const fs::path dir = common.out_dir("ingest");
    const auto manifest = save_dataset(ds, dir);
    json config{{"axis", {{"origin_year", axis.origin_year}, {"origin_month", axis.origin_month}, {"length", axis.length}}},
                {"patches", files.size()},
                {"labels", labels_path}};
    write_run(dir, "ingest-rasters", config, 0);
    out << "ingested " << files.size() << " patches into " << ds.series.size() << " sites at "
        << manifest.string() << "\n";
    return 0;
  }
};

// ---- normalize -----------------------------------------------------------

struct NormalizeCmd {
  Common common;
  std::string manifest;
  std::optional<std::string> fit_on;
  std::optional<double> epsilon;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--manifest", manifest, "Raw dataset manifest")->required();
    cmd->add_option("--fit-on", fit_on, "Fitting population")->check(CLI::IsMember({"all", "train"}));
    cmd->add_option("--epsilon", epsilon, "Stabilizer added to standard deviations");
  }

  int run(std::ostream& out, std::ostream&) {
    const json s = common.section("normalize");
    const std::string population = field<std::string>(s, "fit_on", fit_on, "all");
    if (population != "all" && population != "train") fail(ErrorCode::kValidation, "fit_on must be all or train");
    const double eps = field(s, "epsilon", epsilon, kDefaultEpsilon);
    if (!(eps > 0)) fail(ErrorCode::kValidation, "epsilon must be positive");

    const Dataset raw = load_dataset(manifest);
    const Dataset imputed = impute_missing(raw);
    const auto stats = fit_calendar_stats(imputed, eps, population == "train" ? std::optional(Split::kTrain) : std::nullopt);
    const Dataset normalized = apply_two_stage(imputed, stats);
    const fs::path dir = common.out_dir("normalize");
    save_dataset(normalized, dir);
    save_stats(dir / "stats.bin", stats);
    json config{{"manifest", manifest},
                {"fit_on", population},
                {"epsilon", eps},
                {"missing_fraction", missing_fraction(raw)},
                {"stats_fingerprint", hex64(stats.fingerprint())}};
    write_run(dir, "normalize", config, 0);
    out << "normalized " << raw.series.size() << " sites; stats fingerprint " << hex64(stats.fingerprint()) << "\n";
    return 0;
  }
};

// ---- train ---------------------------------------------------------------

struct TrainCmd {
  Common common;
  std::string method;
  std::string manifest;
  std::string stats_path;
  bool input_normalized = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> c_end;
  std::optional<int> epochs;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--method", method)->required()->check(CLI::IsMember({"sscd", "ws"}));
    cmd->add_option("--manifest", manifest)->required();
    cmd->add_option("--stats", stats_path, "Normalization stats the model is tied to")
        ->required();
    cmd->add_flag("--input-normalized", input_normalized, "Manifest already holds normalized series");
    cmd->add_option("--seed", seed);
    cmd->add_option("--c-end", c_end, "WS label cutoff month index");
    cmd->add_option("--epochs", epochs, "SSCD epochs or WS maximum epochs");
  }

  int run(std::ostream& out, std::ostream& err) {
    json s = common.section(method.c_str());
    if (seed) s["seed"] = *seed;
    const auto stats = load_stats(stats_path);
    const Dataset ds = prepare(load_dataset(manifest), stats, input_normalized);
    const fs::path dir = common.out_dir("train");
    fs::create_directories(dir);
    json config{{"method", method},
                {"manifest", manifest},
                {"input_normalized", input_normalized},
                {"stats_fingerprint", hex64(stats.fingerprint())}};
    std::uint64_t used_seed = 0;

    if (method == "sscd") {
      if (c_end) fail(ErrorCode::kUsage, "--c-end applies to ws only");
      if (epochs) s["epochs"] = *epochs;
      const auto cfg = s.get<SscdConfig>();
      cfg.validate();
      std::vector<SscdEpochLog> log;
      const auto bundle = train_sscd(ds, cfg, stats.fingerprint(), &log);
      save_bundle(dir / "model.bin", bundle);
      std::string csv = "epoch,rec,fore,contrast,bt,total,val_total\n";
      for (std::size_t e = 0; e < log.size(); ++e) {
        const auto& r = log[e];
        csv += std::to_string(e + 1) + "," + fmt(r.rec) + "," + fmt(r.fore) + "," + fmt(r.contrast) + "," +
               fmt(r.bt) + "," + fmt(r.total) + "," + fmt(r.val_total) + "\n";
      }
      binio::write_text(dir / "train_log.csv", csv);
      config["sscd"] = json(cfg);
      used_seed = cfg.seed;
      out << "trained sscd for " << log.size() << " epochs\n";
    } else {
      if (c_end) s["c_end"] = *c_end;
      if (epochs) s["max_epochs"] = *epochs;
      const auto cfg = s.get<WsConfig>();
      cfg.validate_for(ds.axis);
      const auto training = assemble_training_set(ds, cfg);
      const auto validation = assemble_training_set(ds, cfg, Split::kVal, false);
      warn(err, training.warnings);
      std::vector<WsEpochLog> log;
      const auto model = train_ws(training, validation, ds.dim, cfg, stats.fingerprint(), &log);
      save_ws_model(dir / "model.bin", model);
      std::string csv = "epoch,train_loss,val_loss\n";
      for (std::size_t e = 0; e < log.size(); ++e) {
        csv += std::to_string(e + 1) + "," + fmt(log[e].train_loss) + "," + fmt(log[e].val_loss) + "\n";
      }
      binio::write_text(dir / "train_log.csv", csv);
      config["ws"] = json(cfg);
      config["pos_weight"] = model.pos_weight;
      config["positives"] = training.positives;
      used_seed = cfg.seed;
      out << "trained ws for " << log.size() << " epochs on " << training.items.size() << " items\n";
    }
    write_run(dir, "train", config, used_seed);
    return 0;
  }
};

// ---- scorers shared by score and global ----------------------------------

struct ScorerOptions {
  std::string method;
  std::string manifest;
  std::string stats_path;
  std::string model_path;
  bool input_normalized = false;
  std::optional<int> window;
  std::optional<std::string> distance;

  void attach(CLI::App* cmd) {
    cmd->add_option("--method", method)->required()->check(CLI::IsMember({"ted", "sscd", "ws"}));
    cmd->add_option("--manifest", manifest)->required();
    cmd->add_option("--stats", stats_path, "Frozen normalization stats");
    cmd->add_option("--model", model_path, "Trained sscd/ws model");
    cmd->add_flag("--input-normalized", input_normalized, "Manifest already holds normalized series");
    cmd->add_option("--window", window, "TED reference window R");
    cmd->add_option("--distance", distance, "TED distance")->check(CLI::IsMember({"l2", "cosine"}));
  }
};

struct Scorer {
  std::function<ScoreSeries(const SiteSeries&)> score;
  json config;
};

struct ScoringInput {
  Dataset dataset;
  Scorer scorer;
};

ScoringInput load_scoring_input(const ScorerOptions& o, const Common& common) {
  if (o.method != "ted") {
    if (o.model_path.empty()) fail(ErrorCode::kUsage, "--model is required for method " + o.method);
    if (o.stats_path.empty()) fail(ErrorCode::kUsage, "--stats is required for method " + o.method);
  }
  std::optional<CalendarStats> stats;
  if (!o.stats_path.empty()) stats = load_stats(o.stats_path);
  ScoringInput in;
  in.dataset = prepare(load_dataset(o.manifest), stats, o.input_normalized);
  json config{{"method", o.method}, {"manifest", o.manifest}, {"input_normalized", o.input_normalized}};
  if (stats) config["stats_fingerprint"] = hex64(stats->fingerprint());

  if (o.method == "ted") {
    const json s = common.section("ted");
    TedConfig cfg;
    cfg.window = field(s, "window", o.window, cfg.window);
    const std::string dist = field<std::string>(s, "distance", o.distance, "l2");
    cfg.distance = parse_distance(dist);
    cfg.validate();
    config["ted"] = {{"window", cfg.window}, {"distance", dist}};
    in.scorer = {[cfg](const SiteSeries& series) { return ted_score(series, cfg); }, config};
  } else if (o.method == "sscd") {
    auto bundle = std::make_shared<SscdModelBundle>(load_bundle(o.model_path));
    require_fingerprint(bundle->stats_fingerprint, stats->fingerprint(), "sscd bundle");
    if (bundle->nets.dim() != in.dataset.dim) fail(ErrorCode::kValidation, "sscd bundle dimension does not match dataset");
    config["sscd"] = json(bundle->config);
    in.scorer = {[bundle](const SiteSeries& series) { return sscd_score(series, *bundle); }, config};
  } else {
    auto model = std::make_shared<WsModel>(load_ws_model(o.model_path));
    require_fingerprint(model->stats_fingerprint, stats->fingerprint(), "ws model");
    config["ws"] = json(model->config);
    in.scorer = {[model](const SiteSeries& series) { return ws_predict(*model, series); }, config};
  }
  return in;
}

// ---- score ---------------------------------------------------------------

struct ScoreCmd {
  Common common;
  ScorerOptions scorer;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    scorer.attach(cmd);
  }

  int run(std::ostream& out, std::ostream&) {
    const auto in = load_scoring_input(scorer, common);
    std::vector<ScoreSeries> scores;
    scores.reserve(in.dataset.series.size());
    for (const auto& s : in.dataset.series) scores.push_back(in.scorer.score(s));
    const fs::path dir = common.out_dir("score");
    write_score_dir(dir, scores);
    write_run(dir, "score", in.scorer.config, 0);
    out << "scored " << scores.size() << " sites with " << scorer.method << "\n";
    return 0;
  }
};

// ---- global --------------------------------------------------------------

struct GlobalCmd {
  Common common;
  ScorerOptions scorer;
  std::optional<std::string> pool;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    scorer.attach(cmd);
    cmd->add_option("--pool", pool, "Pooling across a site's grid cells")->check(CLI::IsMember({"max", "mean"}));
  }

  int run(std::ostream& out, std::ostream&) {
    const json s = common.section("global");
    const std::string pool_name = field<std::string>(s, "pool", pool, "max");
    const PoolMode mode = parse_pool_mode(pool_name);
    const double eps = s.value("epsilon", kDefaultEpsilon);
    const auto in = load_scoring_input(scorer, common);

    // Groups keep the order in which their first grid cell appears.
    std::vector<std::string> order;
    std::map<std::string, GridScores> grids;
    for (const auto& series : in.dataset.series) {
      const std::string group = in.dataset.group_of(series.site_id);
      auto [it, inserted] = grids.try_emplace(group);
      if (inserted) order.push_back(group);
      it->second.push_back(in.scorer.score(series).probability);
    }
    std::vector<ScoreSeries> pooled;
    pooled.reserve(order.size());
    for (const auto& group : order) {
      const auto& g = grids.at(group);
      if (g.empty()) fail(ErrorCode::kValidation, "site '" + group + "' has no grid cells");
      ScoreSeries site;
      site.site_id = group;
      site.raw = pool_site(cross_grid_normalize(g, eps), mode);
      site.probability = minmax_probability(site.raw);
      site.scorer_tag = "global-" + scorer.method;
      pooled.push_back(std::move(site));
    }
    const fs::path dir = common.out_dir("global");
    write_score_dir(dir, pooled);
    json config = in.scorer.config;
    config["pool"] = pool_name;
    config["epsilon"] = eps;
    write_run(dir, "global", config, 0);
    out << "pooled " << in.dataset.series.size() << " grid cells into " << pooled.size() << " sites\n";
    return 0;
  }
};

// ---- eval ----------------------------------------------------------------

json report_to_json(const EvalReport& r, const std::string& method, const std::string& embedding, const EvalConfig& cfg) {
  json j{{"method", method},
         {"embedding", embedding},
         {"k", cfg.k},
         {"window", {cfg.window.begin, cfg.window.end}},
         {"margins", r.margins},
         {"r_sym", r.r_sym},
         {"r_pos", r.r_pos},
         {"r_neg", r.r_neg},
         {"n_sites", r.n_sites}};
  j["gap_pp"] = r.gap_pp ? json(*r.gap_pp) : json(nullptr);
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  j.at("margins").get_to(r.margins);
  j.at("r_sym").get_to(r.r_sym);
  j.at("r_pos").get_to(r.r_pos);
  j.at("r_neg").get_to(r.r_neg);
  j.at("n_sites").get_to(r.n_sites);
  if (j.contains("gap_pp") && !j.at("gap_pp").is_null()) r.gap_pp = j.at("gap_pp").get<double>();
  const auto n = r.margins.size();
  if (r.r_sym.size() != n || r.r_pos.size() != n || r.r_neg.size() != n) {
    fail(ErrorCode::kValidation, "report recall arrays do not match its margins");
  }
  return r;
}

struct EvalCmd {
  Common common;
  std::string scores_dir;
  std::string manifest;
  std::optional<int> k;
  std::vector<int> margins;
  std::optional<int> window_begin, window_end;
  std::string method = "unknown";
  std::string embedding = "default";

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--scores", scores_dir, "Score directory written by score/global")
        ->required();
    cmd->add_option("--manifest", manifest, "Manifest carrying the labels")->required();
    cmd->add_option("--k", k, "Top-K months per site");
    cmd->add_option("--margins", margins, "Temporal tolerances in months")->delimiter(',');
    cmd->add_option("--window-begin", window_begin, "First evaluated month index");
    cmd->add_option("--window-end", window_end, "One past the last evaluated month index (-1: axis end)");
    cmd->add_option("--method", method, "Method name recorded in the report");
    cmd->add_option("--embedding", embedding, "Embedding name recorded in the report");
  }

  int run(std::ostream& out, std::ostream&) {
    const json s = common.section("eval");
    EvalConfig cfg;
    cfg.k = field(s, "k", k, cfg.k);
    if (!margins.empty()) {
      cfg.margins = margins;
    } else if (s.contains("margins")) {
      s.at("margins").get_to(cfg.margins);
    }
    cfg.window.begin = field(s, "window_begin", window_begin, cfg.window.begin);
    cfg.window.end = field(s, "window_end", window_end, cfg.window.end);
    cfg.validate();

    const Dataset ds = load_dataset(manifest);
    const auto scores = read_score_dir(scores_dir);
    const EvalReport report = recall_suite(scores, ds.labels, cfg);

    const fs::path dir = common.out_dir("eval");
    fs::create_directories(dir);
    const json rj = report_to_json(report, method, embedding, cfg);
    binio::write_text(dir / "report.json", rj.dump(2) + "\n");
    binio::write_text(dir / "report.tsv", render_report_table(method, embedding, report));

    std::string curve = "margin,r_sym,r_pos,r_neg\n";
    for (std::size_t i = 0; i < report.margins.size(); ++i) {
      curve += std::to_string(report.margins[i]) + "," + fmt(report.r_sym[i]) + "," + fmt(report.r_pos[i]) + "," +
               fmt(report.r_neg[i]) + "\n";
    }
    binio::write_text(dir / "recall_curve.csv", curve);

    std::string sites = "site_id,event_month,margin,sym,pos,neg,topk\n";
    for (const auto& h : report.sites) {
      std::string topk;
      for (std::size_t i = 0; i < h.topk.size(); ++i) topk += (i ? " " : "") + std::to_string(h.topk[i]);
      for (std::size_t i = 0; i < report.margins.size(); ++i) {
        sites += h.site_id + "," + std::to_string(h.event_month) + "," + std::to_string(report.margins[i]) + "," +
                 std::to_string(h.sym[i]) + "," + std::to_string(h.pos[i]) + "," + std::to_string(h.neg[i]) + "," +
                 topk + "\n";
      }
    }
    binio::write_text(dir / "sites.csv", sites);

    json config{{"scores", scores_dir}, {"manifest", manifest}, {"k", cfg.k}, {"margins", cfg.margins},
                {"window", {cfg.window.begin, cfg.window.end}}, {"method", method}, {"embedding", embedding}};
    write_run(dir, "eval", config, 0);
    out << render_report_table(method, embedding, report);
    if (report.gap_pp) out << "directional gap (pp)\t" << fmt(*report.gap_pp) << "\n";
    return 0;
  }
};

// ---- feature-variation ---------------------------------------------------

struct VariationCmd {
  Common common;
  std::string manifest;
  std::optional<std::string> scale;

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--manifest", manifest)->required();
    cmd->add_option("--scale", scale, "Min-max scope")->check(CLI::IsMember({"global", "per-month"}));
  }

  int run(std::ostream& out, std::ostream& err) {
    const json s = common.section("feature_variation");
    const std::string scope = field<std::string>(s, "scale", scale, "global");
    const Dataset ds = load_dataset(manifest);
    const auto result = feature_variation(ds, parse_scale_scope(scope));
    warn(err, result.warnings);
    std::string csv = "t,year,month,variation\n";
    for (std::size_t t = 0; t < result.per_month.size(); ++t) {
      const int ti = static_cast<int>(t);
      csv += std::to_string(t) + "," + std::to_string(ds.axis.year_of(ti)) + "," +
             std::to_string(ds.axis.calendar_month(ti)) + "," + fmt(result.per_month[t]) + "\n";
    }
    const fs::path dir = common.out_dir("feature-variation");
    fs::create_directories(dir);
    binio::write_text(dir / "variation.csv", csv);
    write_run(dir, "feature-variation", json{{"manifest", manifest}, {"scale", scope}}, 0);
    out << "wrote " << result.per_month.size() << " months to " << (dir / "variation.csv").string() << "\n";
    return 0;
  }
};

// ---- report --------------------------------------------------------------

struct ReportCmd {
  Common common;
  std::vector<std::string> reports;
  std::string minuend = "sscd";
  std::string subtrahend = "ted";

  void attach(CLI::App* cmd) {
    common.attach(cmd);
    cmd->add_option("--reports", reports, "report.json files written by eval")->required();
    cmd->add_option("--minuend", minuend, "Method on the left of the delta column");
    cmd->add_option("--subtrahend", subtrahend, "Method on the right of the delta column");
  }

  int run(std::ostream& out, std::ostream&) {
    std::map<std::string, std::map<std::string, EvalReport>> grouped;
    for (const auto& path : reports) {
      const json j = read_json(path);
      const auto method = j.at("method").get<std::string>();
      const auto embedding = j.at("embedding").get<std::string>();
      if (!grouped[method].emplace(embedding, report_from_json(j)).second) {
        fail(ErrorCode::kValidation, "duplicate report for " + method + "/" + embedding);
      }
    }
    const auto table = macro_average(grouped);
    const std::string text = render_macro_table(table, minuend, subtrahend);
    const fs::path dir = common.out_dir("report");
    fs::create_directories(dir);
    binio::write_text(dir / "macro.tsv", text);
    write_run(dir, "report", json{{"reports", reports}, {"minuend", minuend}, {"subtrahend", subtrahend}}, 0);
    out << text;
    return 0;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Month-level change-event localization for site embedding time series", "watch"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthCmd synth;
  IngestCmd ingest;
  NormalizeCmd normalize;
  TrainCmd train;
  ScoreCmd score;
  EvalCmd eval;
  GlobalCmd global;
  VariationCmd variation;
  ReportCmd report;

  std::vector<std::pair<CLI::App*, std::function<int(std::ostream&, std::ostream&)>>> commands;
  const auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.attach(sub);
    commands.emplace_back(sub, [&cmd](std::ostream& o, std::ostream& e) { return cmd.run(o, e); });
  };
  add("synth", "Generate a synthetic benchmark dataset", synth);
  add("ingest-rasters", "Convert masked 4-band patches into a 60-dim handcrafted-feature dataset", ingest);
  add("normalize", "Impute, fit calendar stats, and write the normalized dataset", normalize);
  add("train", "Train an sscd or ws model against frozen stats", train);
  add("score", "Score every site with ted, sscd or ws", score);
  add("eval", "Temporal-tolerance recall of a score directory", eval);
  add("global", "Score grid cells, cross-grid normalize, and pool per site", global);
  add("feature-variation", "Per-month cross-site feature variation", variation);
  add("report", "Macro-average eval reports across embeddings", report);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error[usage]: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kUsage);
  }

  try {
    for (auto& [sub, fn] : commands) {
      if (sub->parsed()) return fn(out, err);
    }
    err << "error[usage]: no command given\n";
    return static_cast<int>(ErrorCode::kUsage);
  } catch (const Error& e) {
    err << "error[" << error_code_name(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error[validation]: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kValidation);
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kIo);
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace watch
