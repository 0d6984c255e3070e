#include "watch/ws.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "watch/binio.hpp"
#include "watch/error.hpp"

namespace watch {

using nn::Graph;
using nn::Matrix;

namespace {

constexpr std::uint16_t kModelVersion = 1;
constexpr double kPositiveThreshold = 0.05;

}  // namespace

void WsConfig::validate() const {
  if (encoder_dim == 0 || hidden_dim == 0 || layers == 0) fail(ErrorCode::kValidation, "WS dimensions must be positive");
  if (!(sigma_w > 0)) fail(ErrorCode::kValidation, "sigma_w must be positive");
  if (c_end < 0) fail(ErrorCode::kValidation, "c_end must be non-negative");
  if (oversample < 1) fail(ErrorCode::kValidation, "oversample must be at least 1");
  if (pos_weight && !(*pos_weight > 0)) fail(ErrorCode::kValidation, "pos_weight must be positive");
  if (!(learning_rate > 0)) fail(ErrorCode::kValidation, "learning_rate must be positive");
  if (max_epochs < 1 || batch_sites < 1) fail(ErrorCode::kValidation, "need max_epochs >= 1 and batch_sites >= 1");
}

void WsConfig::validate_for(const TimeAxis& axis) const {
  validate();
  if (c_end >= axis.length) {
    fail(ErrorCode::kValidation, "c_end " + std::to_string(c_end) + " outside [0, " + std::to_string(axis.length) + ")");
  }
}

void to_json(nlohmann::json& j, const WsConfig& c) {
  j = nlohmann::json{{"encoder_dim", c.encoder_dim},
                     {"hidden_dim", c.hidden_dim},
                     {"layers", c.layers},
                     {"sigma_w", c.sigma_w},
                     {"c_end", c.c_end},
                     {"oversample", c.oversample},
                     {"learning_rate", c.learning_rate},
                     {"weight_decay", c.weight_decay},
                     {"clip_norm", c.clip_norm},
                     {"patience", c.patience},
                     {"max_epochs", c.max_epochs},
                     {"batch_sites", c.batch_sites},
                     {"seed", c.seed}};
  j["pos_weight"] = c.pos_weight ? nlohmann::json(*c.pos_weight) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, WsConfig& c) {
  const auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("encoder_dim", c.encoder_dim);
  opt("hidden_dim", c.hidden_dim);
  opt("layers", c.layers);
  opt("sigma_w", c.sigma_w);
  opt("c_end", c.c_end);
  opt("oversample", c.oversample);
  opt("learning_rate", c.learning_rate);
  opt("weight_decay", c.weight_decay);
  opt("clip_norm", c.clip_norm);
  opt("patience", c.patience);
  opt("max_epochs", c.max_epochs);
  opt("batch_sites", c.batch_sites);
  opt("seed", c.seed);
  if (j.contains("pos_weight")) {
    if (j.at("pos_weight").is_null()) {
      c.pos_weight.reset();
    } else {
      c.pos_weight = j.at("pos_weight").get<double>();
    }
  }
}

// ---------------------------------------------------------------------------
// Targets and training items

int known_idx(const SiteLabel& label, int c_end) {
  if (label.looted && label.event_month && *label.event_month <= c_end) return *label.event_month;
  return -1;
}

std::optional<std::vector<double>> build_targets(const SiteLabel& label, int length, double sigma_w, int c_end) {
  std::vector<double> y(static_cast<std::size_t>(length), 0.0);
  if (!label.looted) return y;
  const int c = known_idx(label, c_end);
  if (c < 0) return std::nullopt;
  for (int t = 0; t < length; ++t) {
    const double delta = static_cast<double>(t - c);
    y[static_cast<std::size_t>(t)] = std::exp(-delta * delta / (2.0 * sigma_w * sigma_w));
  }
  return y;
}

WsTrainingSet assemble_training_set(const Dataset& ds, const WsConfig& cfg, Split split, bool oversample_positives) {
  cfg.validate_for(ds.axis);
  WsTrainingSet set;
  for (const auto& s : ds.series) {
    if (ds.split_of(s.site_id).value_or(Split::kTrain) != split) continue;
    const SiteLabel* label = ds.label_for(s.site_id);
    const SiteLabel unlabeled{s.site_id, false, std::nullopt};
    auto target = build_targets(label != nullptr ? *label : unlabeled, ds.axis.length, cfg.sigma_w, cfg.c_end);
    if (!target) continue;
    const bool positive = label != nullptr && label->looted;
    const int copies = positive && oversample_positives ? cfg.oversample : 1;
    if (positive) ++set.positives;
    for (int k = 0; k < copies; ++k) set.items.push_back({&s, *target});
  }
  if (set.positives == 0) {
    set.warnings.push_back(std::string("no known-month looted sites in ") + split_name(split) +
                           " split; training degenerates to all-negative targets");
  }
  return set;
}

double default_pos_weight(const WsTrainingSet& set) {
  double neg = 0.0, pos = 0.0;
  for (const auto& item : set.items) {
    for (double y : item.target) (y < kPositiveThreshold ? neg : pos) += 1.0;
  }
  return pos > 0.0 ? neg / pos : 1.0;
}

// ---------------------------------------------------------------------------
// Network

WsNetwork::WsNetwork(std::size_t dim, const WsConfig& cfg)
    : dim_(dim), hidden_(cfg.hidden_dim), layers_(cfg.layers) {
  const std::size_t e = cfg.encoder_dim;
  params_.add("enc.0.w", dim, e);
  params_.add("enc.0.b", 1, e);
  params_.add("enc.ln.gamma", 1, e);
  params_.add("enc.ln.beta", 1, e);
  params_.add("enc.1.w", e, e);
  params_.add("enc.1.b", 1, e);
  for (std::size_t l = 0; l < layers_; ++l) {
    const std::string p = "lstm." + std::to_string(l);
    params_.add(p + ".wx", l == 0 ? e : hidden_, 4 * hidden_);
    params_.add(p + ".wh", hidden_, 4 * hidden_);
    params_.add(p + ".b", 1, 4 * hidden_);
  }
  params_.add("head.w", hidden_, 1);
  params_.add("head.b", 1, 1);
}

void WsNetwork::initialize(Rng& rng) {
  const std::size_t e = params_[0].value.cols;
  nn::init_uniform_fan_in(params_[0], dim_, rng);
  nn::init_uniform_fan_in(params_[1], dim_, rng);
  std::fill(params_[2].value.data.begin(), params_[2].value.data.end(), 1.0);
  std::fill(params_[3].value.data.begin(), params_[3].value.data.end(), 0.0);
  nn::init_uniform_fan_in(params_[4], e, rng);
  nn::init_uniform_fan_in(params_[5], e, rng);
  for (std::size_t l = 0; l < layers_; ++l) {
    const std::size_t base = 6 + 3 * l;
    for (std::size_t k = 0; k < 3; ++k) nn::init_uniform_fan_in(params_[base + k], hidden_, rng);
    auto& bias = params_[base + 2].value.data;
    std::fill(bias.begin() + static_cast<std::ptrdiff_t>(hidden_),
              bias.begin() + static_cast<std::ptrdiff_t>(2 * hidden_), 1.0);
  }
  const std::size_t head = 6 + 3 * layers_;
  nn::init_uniform_fan_in(params_[head], hidden_, rng);
  nn::init_uniform_fan_in(params_[head + 1], hidden_, rng);
}

Graph::Id WsNetwork::forward(Graph& g, const std::vector<const SiteSeries*>& batch) {
  if (batch.empty()) fail(ErrorCode::kValidation, "empty WS batch");
  const std::size_t n = batch.size();
  const std::size_t t_len = batch.front()->length();
  Matrix x(t_len * n, dim_);
  for (std::size_t b = 0; b < n; ++b) {
    const SiteSeries& s = *batch[b];
    if (s.dim != dim_) {
      fail(ErrorCode::kValidation, "dimension mismatch: series d=" + std::to_string(s.dim) + ", model d=" +
                                       std::to_string(dim_));
    }
    if (s.length() != t_len) fail(ErrorCode::kValidation, "WS batch mixes series lengths");
    for (std::size_t t = 0; t < t_len; ++t) {
      std::copy(s.row(t).begin(), s.row(t).end(), x.row(t * n + b).begin());
    }
  }

  auto h = g.linear(g.constant(std::move(x)), params_[0], params_[1]);
  h = g.tanh(g.layer_norm(h, g.param(params_[2]), g.param(params_[3])));
  h = g.tanh(g.linear(h, params_[4], params_[5]));

  const std::size_t hd = hidden_;
  for (std::size_t l = 0; l < layers_; ++l) {
    const std::size_t base = 6 + 3 * l;
    // Input projections for every step at once; only the recurrent term is sequential.
    const auto gx = g.linear(h, params_[base], params_[base + 2]);
    const auto wh = g.param(params_[base + 1]);
    std::vector<Graph::Id> outs;
    outs.reserve(t_len);
    std::optional<Graph::Id> hp, cp;
    for (std::size_t t = 0; t < t_len; ++t) {
      auto gates = g.slice_rows(gx, t * n, (t + 1) * n);
      if (hp) gates = g.add(gates, g.matmul(*hp, wh));
      const auto i = g.sigmoid(g.slice_cols(gates, 0, hd));
      const auto f = g.sigmoid(g.slice_cols(gates, hd, 2 * hd));
      const auto cand = g.tanh(g.slice_cols(gates, 2 * hd, 3 * hd));
      const auto o = g.sigmoid(g.slice_cols(gates, 3 * hd, 4 * hd));
      const auto c = cp ? g.add(g.mul(f, *cp), g.mul(i, cand)) : g.mul(i, cand);
      const auto ht = g.mul(o, g.tanh(c));
      outs.push_back(ht);
      hp = ht;
      cp = c;
    }
    h = g.concat_rows(outs);
  }
  const std::size_t head = 6 + 3 * layers_;
  return g.linear(h, params_[head], params_[head + 1]);
}

Graph::Id ws_batch_loss(Graph& g, WsNetwork& net, const std::vector<const WsItem*>& batch, double pos_weight) {
  std::vector<const SiteSeries*> series;
  series.reserve(batch.size());
  for (const auto* item : batch) series.push_back(item->series);
  const auto logits = net.forward(g, series);
  const std::size_t n = batch.size();
  const std::size_t t_len = series.front()->length();
  Matrix y(t_len * n, 1);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < t_len; ++t) y(t * n + b, 0) = batch[b]->target[t];
  }
  return g.bce_with_logits(logits, y, pos_weight);
}

// ---------------------------------------------------------------------------
// Training

namespace {

double set_loss(WsNetwork& net, const WsTrainingSet& set, std::size_t batch_sites, double pos_weight) {
  double sum = 0.0, weight = 0.0;
  for (std::size_t b = 0; b < set.items.size(); b += batch_sites) {
    std::vector<const WsItem*> batch;
    for (std::size_t i = b; i < std::min(set.items.size(), b + batch_sites); ++i) batch.push_back(&set.items[i]);
    Graph g;
    const auto loss = ws_batch_loss(g, net, batch, pos_weight);
    sum += static_cast<double>(batch.size()) * g.scalar(loss);
    weight += static_cast<double>(batch.size());
  }
  return sum / weight;
}

}  // namespace

WsModel train_ws(const WsTrainingSet& training, const WsTrainingSet& validation, std::size_t dim, const WsConfig& cfg,
                 std::uint64_t stats_fingerprint, std::vector<WsEpochLog>* log) {
  cfg.validate();
  if (training.items.empty()) fail(ErrorCode::kValidation, "WS training set is empty");

  Rng rng(cfg.seed);
  WsModel model;
  model.config = cfg;
  model.stats_fingerprint = stats_fingerprint;
  model.pos_weight = cfg.pos_weight.value_or(default_pos_weight(training));
  model.net = WsNetwork(dim, cfg);
  model.net.initialize(rng);
  WsNetwork& net = model.net;

  std::vector<const WsItem*> order;
  for (const auto& item : training.items) order.push_back(&item);

  nn::Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.clip_norm});
  double best = std::numeric_limits<double>::infinity();
  auto best_values = net.params().values();
  int waited = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    WsEpochLog row;
    double weight = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_sites) {
      const std::vector<const WsItem*> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                             order.begin() + static_cast<std::ptrdiff_t>(
                                                                 std::min(order.size(), b + cfg.batch_sites)));
      Graph g;
      const auto loss = ws_batch_loss(g, net, batch, model.pos_weight);
      if (!std::isfinite(g.scalar(loss))) {
        fail(ErrorCode::kNumerical, "WS training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      net.params().zero_grad();
      g.backward(loss);
      opt.step(net.params());
      row.train_loss += static_cast<double>(batch.size()) * g.scalar(loss);
      weight += static_cast<double>(batch.size());
    }
    row.train_loss /= weight;
    if (!net.params().all_finite()) fail(ErrorCode::kNumerical, "WS parameters became non-finite");
    row.val_loss = validation.items.empty() ? row.train_loss
                                            : set_loss(net, validation, cfg.batch_sites, model.pos_weight);
    if (log != nullptr) log->push_back(row);
    if (row.val_loss < best) {
      best = row.val_loss;
      best_values = net.params().values();
      waited = 0;
    } else if (++waited >= cfg.patience) {
      break;
    }
  }
  net.params().set_values(best_values);
  net.params().round_to_float();
  return model;
}

ScoreSeries ws_predict(const WsModel& model, const SiteSeries& series) {
  auto& net = const_cast<WsNetwork&>(model.net);  // forward reads parameters only
  Graph g;
  const auto logits = net.forward(g, {&series});
  ScoreSeries out;
  out.site_id = series.site_id;
  out.scorer_tag = "ws";
  out.raw = g.value(logits).data;
  out.probability.resize(out.raw.size());
  for (std::size_t t = 0; t < out.raw.size(); ++t) out.probability[t] = 1.0 / (1.0 + std::exp(-out.raw[t]));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<std::uint8_t> encode_ws_model(const WsModel& m) {
  binio::Writer w;
  w.magic("WSWS");
  w.put<std::uint16_t>(kModelVersion);
  w.string(nlohmann::json(m.config).dump());
  w.put<std::uint64_t>(m.config.seed);
  w.put<std::uint64_t>(m.stats_fingerprint);
  w.put<double>(m.pos_weight);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.net.dim()));
  const auto& params = m.net.params();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.string(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.cols));
    w.floats(p.value.data);
  }
  return w.bytes();
}

WsModel decode_ws_model(std::span<const std::uint8_t> bytes, const std::string& context) {
  binio::Reader r(bytes, context);
  r.expect_magic("WSWS");
  if (r.get<std::uint16_t>() != kModelVersion) fail(ErrorCode::kIo, context + ": unsupported model version");
  WsModel m;
  try {
    m.config = nlohmann::json::parse(r.string()).get<WsConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIo, context + ": bad config snapshot: " + e.what());
  }
  m.config.seed = r.get<std::uint64_t>();
  m.stats_fingerprint = r.get<std::uint64_t>();
  m.pos_weight = r.get<double>();
  const auto dim = r.get<std::uint32_t>();
  m.net = WsNetwork(dim, m.config);
  auto& params = m.net.params();
  if (r.get<std::uint32_t>() != params.size()) fail(ErrorCode::kIo, context + ": parameter count mismatch");
  for (auto& p : params) {
    const auto name = r.string();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (name != p.name || rows != p.value.rows || cols != p.value.cols) {
      fail(ErrorCode::kIo, context + ": unexpected tensor '" + name + "'");
    }
    r.floats(p.value.data);
  }
  r.expect_end();
  return m;
}

void save_ws_model(const std::filesystem::path& path, const WsModel& model) {
  binio::write_file(path, encode_ws_model(model));
}

WsModel load_ws_model(const std::filesystem::path& path) { return decode_ws_model(binio::read_file(path), path.string()); }

void require_fingerprint(std::uint64_t model_fp, std::uint64_t stats_fp, const std::string& what) {
  if (model_fp != stats_fp) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " (model %016llx, stats %016llx)", static_cast<unsigned long long>(model_fp),
                  static_cast<unsigned long long>(stats_fp));
    fail(ErrorCode::kFingerprint, what + " was trained against different normalization statistics" + buf);
  }
}

}  // namespace watch
