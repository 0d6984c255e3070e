#include "watch/sscd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "watch/binio.hpp"
#include "watch/error.hpp"
#include "watch/kernels.hpp"
#include "watch/ted.hpp"

namespace watch {

using nn::Graph;
using nn::Matrix;

namespace {

constexpr std::uint16_t kBundleVersion = 1;

bool finite(double v) { return std::isfinite(v); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void SscdConfig::validate() const {
  if (latent_dim == 0 || hidden_dim == 0) fail(ErrorCode::kValidation, "SSCD dimensions must be positive");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) fail(ErrorCode::kValidation, "mask_ratio must lie in (0, 1)");
  if (knn_k == 0) fail(ErrorCode::kValidation, "knn_k must be positive");
  if (!(alpha.rec > 0 && alpha.fore > 0 && alpha.nov > 0)) fail(ErrorCode::kValidation, "ensemble weights must be positive");
  if (lambda_rec < 0 || lambda_fore < 0 || lambda_contrast < 0 || lambda_bt < 0 || bt_offdiag < 0) {
    fail(ErrorCode::kValidation, "loss weights must be non-negative");
  }
  if (!(temperature > 0)) fail(ErrorCode::kValidation, "temperature must be positive");
  if (context == 0) fail(ErrorCode::kValidation, "forecast context must be positive");
  if (epochs < 1 || batch_size < 2) fail(ErrorCode::kValidation, "need epochs >= 1 and batch_size >= 2");
  if (!(learning_rate > 0)) fail(ErrorCode::kValidation, "learning_rate must be positive");
  if (!(val_fraction >= 0 && val_fraction < 1)) fail(ErrorCode::kValidation, "val_fraction must lie in [0, 1)");
  if (!(epsilon > 0)) fail(ErrorCode::kValidation, "epsilon must be positive");
}

void to_json(nlohmann::json& j, const SscdConfig& c) {
  j = nlohmann::json{{"latent_dim", c.latent_dim},
                     {"hidden_dim", c.hidden_dim},
                     {"mask_ratio", c.mask_ratio},
                     {"knn_k", c.knn_k},
                     {"alpha", {c.alpha.rec, c.alpha.fore, c.alpha.nov}},
                     {"lambda", {c.lambda_rec, c.lambda_fore, c.lambda_contrast, c.lambda_bt}},
                     {"bt_offdiag", c.bt_offdiag},
                     {"temperature", c.temperature},
                     {"context", c.context},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"weight_decay", c.weight_decay},
                     {"clip_norm", c.clip_norm},
                     {"patience", c.patience},
                     {"val_fraction", c.val_fraction},
                     {"epsilon", c.epsilon},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SscdConfig& c) {
  const auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("latent_dim", c.latent_dim);
  opt("hidden_dim", c.hidden_dim);
  opt("mask_ratio", c.mask_ratio);
  opt("knn_k", c.knn_k);
  if (j.contains("alpha")) {
    const auto& a = j.at("alpha");
    c.alpha = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
  }
  if (j.contains("lambda")) {
    const auto& l = j.at("lambda");
    c.lambda_rec = l.at(0).get<double>();
    c.lambda_fore = l.at(1).get<double>();
    c.lambda_contrast = l.at(2).get<double>();
    c.lambda_bt = l.at(3).get<double>();
  }
  opt("bt_offdiag", c.bt_offdiag);
  opt("temperature", c.temperature);
  opt("context", c.context);
  opt("epochs", c.epochs);
  opt("batch_size", c.batch_size);
  opt("learning_rate", c.learning_rate);
  opt("weight_decay", c.weight_decay);
  opt("clip_norm", c.clip_norm);
  opt("patience", c.patience);
  opt("val_fraction", c.val_fraction);
  opt("epsilon", c.epsilon);
  opt("seed", c.seed);
}

// ---------------------------------------------------------------------------
// Networks

SscdNetworks::SscdNetworks(std::size_t dim, const SscdConfig& cfg) : dim_(dim), context_(cfg.context) {
  const std::size_t h = cfg.hidden_dim;
  const std::size_t l = cfg.latent_dim;
  const auto dense = [&](const std::string& name, std::size_t in, std::size_t out) {
    const std::size_t w = params_.add(name + ".w", in, out);
    params_.add(name + ".b", 1, out);
    return w;
  };
  enc_ = dense("enc.0", dim, h);
  dense("enc.1", h, l);
  dec_ = dense("dec.0", l, h);
  dense("dec.1", h, dim);
  fore_ = dense("fore.0", context_ * dim, h);
  dense("fore.1", h, dim);
}

void SscdNetworks::initialize(Rng& rng) {
  for (std::size_t i = 0; i < params_.size(); i += 2) {
    const std::size_t fan_in = params_[i].value.rows;
    nn::init_uniform_fan_in(params_[i], fan_in, rng);
    nn::init_uniform_fan_in(params_[i + 1], fan_in, rng);
  }
}

Graph::Id SscdNetworks::mlp(Graph& g, Graph::Id x, std::size_t first) {
  const auto h = g.tanh(g.linear(x, params_[first], params_[first + 1]));
  return g.linear(h, params_[first + 2], params_[first + 3]);
}

Graph::Id SscdNetworks::encode(Graph& g, Graph::Id x) { return mlp(g, x, enc_); }
Graph::Id SscdNetworks::decode(Graph& g, Graph::Id z) { return mlp(g, z, dec_); }
Graph::Id SscdNetworks::forecast(Graph& g, Graph::Id context) { return mlp(g, context, fore_); }

// ---------------------------------------------------------------------------
// Losses

SscdLossTerms sscd_batch_loss(Graph& g, SscdNetworks& nets, const SscdBatch& b, const SscdConfig& cfg) {
  const auto masked_input = [](const Matrix& x, const Matrix& mask) {
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= 1.0 - mask.data[i];
    return out;
  };
  SscdLossTerms t{};
  const auto za = nets.encode(g, g.constant(masked_input(b.x, b.mask_a)));
  t.rec = g.masked_mse(nets.decode(g, za), b.x, b.mask_a);
  t.fore = g.mse(nets.forecast(g, g.constant(b.context)), b.x);
  const auto zprev = nets.encode(g, g.constant(b.prev));
  const auto zcur = nets.encode(g, g.constant(b.x));
  t.contrast = g.info_nce(zprev, zcur, cfg.temperature);
  const auto zb = nets.encode(g, g.constant(masked_input(b.x, b.mask_b)));
  t.bt = g.barlow_twins(za, zb, cfg.bt_offdiag);
  t.total = g.weighted_sum({{t.rec, cfg.lambda_rec},
                            {t.fore, cfg.lambda_fore},
                            {t.contrast, cfg.lambda_contrast},
                            {t.bt, cfg.lambda_bt}});
  return t;
}

Matrix forecast_context(const SiteSeries& series, std::size_t context) {
  const std::size_t d = series.dim;
  Matrix ctx(series.length(), context * d);
  for (std::size_t t = 0; t < series.length(); ++t) {
    for (std::size_t slot = 0; slot < context; ++slot) {
      // slot 0 holds the oldest month t - context
      const long u = static_cast<long>(t) - static_cast<long>(context) + static_cast<long>(slot);
      if (u < 0) continue;
      const auto src = series.row(static_cast<std::size_t>(u));
      std::copy(src.begin(), src.end(), ctx.row(t).begin() + static_cast<std::ptrdiff_t>(slot * d));
    }
  }
  return ctx;
}

Matrix random_mask(std::size_t rows, std::size_t dim, double ratio, Rng& rng) {
  Matrix mask(rows, dim);
  const auto hidden = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(ratio * static_cast<double>(dim))), 1, dim);
  std::vector<std::size_t> order(dim);
  for (std::size_t i = 0; i < rows; ++i) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t k = 0; k < hidden; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng.below(dim - k));
      std::swap(order[k], order[j]);
      mask(i, order[k]) = 1.0;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SampleRef {
  std::uint32_t site;
  std::uint32_t t;
};

SscdBatch make_batch(const std::vector<SampleRef>& refs, std::size_t begin, std::size_t end, const Dataset& ds,
                     const std::vector<Matrix>& contexts, const SscdConfig& cfg, Rng& rng) {
  const std::size_t n = end - begin;
  const std::size_t d = ds.dim;
  SscdBatch b;
  b.x = Matrix(n, d);
  b.prev = Matrix(n, d);
  b.context = Matrix(n, contexts.front().cols);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = refs[begin + i];
    const auto& s = ds.series[r.site];
    std::copy(s.row(r.t).begin(), s.row(r.t).end(), b.x.row(i).begin());
    std::copy(s.row(r.t - 1).begin(), s.row(r.t - 1).end(), b.prev.row(i).begin());
    const auto ctx = contexts[r.site].row(r.t);
    std::copy(ctx.begin(), ctx.end(), b.context.row(i).begin());
  }
  b.mask_a = random_mask(n, d, cfg.mask_ratio, rng);
  b.mask_b = random_mask(n, d, cfg.mask_ratio, rng);
  return b;
}

// Batches of `size`, with a trailing remainder of one folded into the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += size) out.emplace_back(b, std::min(n, b + size));
  if (out.size() > 1 && out.back().second - out.back().first < 2) {
    const auto last = out.back();
    out.pop_back();
    out.back().second = last.second;
  }
  return out;
}

void check_finite(const Graph& g, const SscdLossTerms& t, int epoch) {
  for (auto [id, name] : {std::pair{t.rec, "reconstruction"}, {t.fore, "forecast"}, {t.contrast, "contrastive"},
                          {t.bt, "barlow-twins"}}) {
    if (!finite(g.scalar(id))) {
      fail(ErrorCode::kNumerical, std::string("SSCD training diverged: non-finite ") + name + " loss at epoch " +
                                      std::to_string(epoch));
    }
  }
}

Matrix encode_rows(SscdNetworks& nets, const Matrix& x) {
  Graph g;
  return g.value(nets.encode(g, g.constant(x)));
}

Matrix series_matrix(const SiteSeries& s) {
  Matrix m(s.length(), s.dim);
  m.data = s.values;
  return m;
}

}  // namespace

SscdModelBundle train_sscd(const Dataset& ds, const SscdConfig& cfg, std::uint64_t stats_fingerprint,
                           std::vector<SscdEpochLog>* log) {
  cfg.validate();
  if (ds.series.empty()) fail(ErrorCode::kValidation, "SSCD training needs at least one site");
  if (ds.axis.length < 2) fail(ErrorCode::kValidation, "SSCD training needs at least two months");

  Rng rng(cfg.seed);
  SscdModelBundle bundle;
  bundle.config = cfg;
  bundle.stats_fingerprint = stats_fingerprint;
  bundle.nets = SscdNetworks(ds.dim, cfg);
  bundle.nets.initialize(rng);
  SscdNetworks& nets = bundle.nets;

  std::vector<Matrix> contexts;
  contexts.reserve(ds.series.size());
  for (const auto& s : ds.series) contexts.push_back(forecast_context(s, cfg.context));

  std::vector<SampleRef> samples;
  for (std::uint32_t i = 0; i < ds.series.size(); ++i) {
    for (std::uint32_t t = 1; t < static_cast<std::uint32_t>(ds.axis.length); ++t) samples.push_back({i, t});
  }
  rng.shuffle(samples.begin(), samples.end());
  auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(samples.size())));
  if (n_val < 2 || samples.size() - n_val < 2) n_val = 0;
  std::vector<SampleRef> val(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<SampleRef> train(samples.begin() + static_cast<std::ptrdiff_t>(n_val), samples.end());

  // Validation masks are drawn once so validation loss is comparable across epochs.
  std::vector<SscdBatch> val_batches;
  for (auto [b, e] : batch_ranges(val.size(), cfg.batch_size)) {
    val_batches.push_back(make_batch(val, b, e, ds, contexts, cfg, rng));
  }

  nn::Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay, cfg.clip_norm});
  double best = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_values = nets.params().values();
  int waited = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train.begin(), train.end());
    SscdEpochLog row;
    double weight = 0.0;
    for (auto [b, e] : batch_ranges(train.size(), cfg.batch_size)) {
      const SscdBatch batch = make_batch(train, b, e, ds, contexts, cfg, rng);
      Graph g;
      const auto terms = sscd_batch_loss(g, nets, batch, cfg);
      check_finite(g, terms, epoch);
      nets.params().zero_grad();
      g.backward(terms.total);
      opt.step(nets.params());
      const double w = static_cast<double>(e - b);
      row.rec += w * g.scalar(terms.rec);
      row.fore += w * g.scalar(terms.fore);
      row.contrast += w * g.scalar(terms.contrast);
      row.bt += w * g.scalar(terms.bt);
      row.total += w * g.scalar(terms.total);
      weight += w;
    }
    row.rec /= weight;
    row.fore /= weight;
    row.contrast /= weight;
    row.bt /= weight;
    row.total /= weight;
    if (!nets.params().all_finite()) fail(ErrorCode::kNumerical, "SSCD parameters became non-finite");

    double monitored = row.total;
    if (!val_batches.empty()) {
      double vsum = 0.0, vw = 0.0;
      for (const auto& batch : val_batches) {
        Graph g;
        const auto terms = sscd_batch_loss(g, nets, batch, cfg);
        vsum += static_cast<double>(batch.x.rows) * g.scalar(terms.total);
        vw += static_cast<double>(batch.x.rows);
      }
      monitored = vsum / vw;
    }
    row.val_total = monitored;
    if (log != nullptr) log->push_back(row);
    if (monitored < best) {
      best = monitored;
      best_values = nets.params().values();
      waited = 0;
    } else if (++waited >= cfg.patience) {
      break;
    }
  }
  nets.params().set_values(best_values);
  nets.params().round_to_float();

  // Latent bank over every month of every training site.
  const std::size_t t_len = static_cast<std::size_t>(ds.axis.length);
  bundle.bank = Matrix(ds.series.size() * t_len, cfg.latent_dim);
  for (std::uint32_t i = 0; i < ds.series.size(); ++i) {
    const Matrix z = encode_rows(nets, series_matrix(ds.series[i]));
    for (std::size_t t = 0; t < t_len; ++t) {
      auto dst = bundle.bank.row(i * t_len + t);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<double>(static_cast<float>(z(t, j)));
      bundle.bank_site.push_back(i);
      bundle.bank_month.push_back(static_cast<std::uint32_t>(t));
    }
    bundle.bank_sites.push_back(ds.series[i].site_id);
  }

  std::array<std::vector<std::vector<double>>, 3> raw;
  for (const auto& s : ds.series) {
    auto sig = sscd_signals(s, bundle);
    raw[0].push_back(std::move(sig.rec));
    raw[1].push_back(std::move(sig.fore));
    raw[2].push_back(std::move(sig.nov));
  }
  for (int k = 0; k < 3; ++k) bundle.calibration[k] = fit_calendar_locations(raw[k], ds.axis);
  return bundle;
}

// ---------------------------------------------------------------------------
// Inference

SscdSignals sscd_signals(const SiteSeries& series, const SscdModelBundle& bundle) {
  if (series.dim != bundle.nets.dim()) {
    fail(ErrorCode::kValidation, "dimension mismatch: series d=" + std::to_string(series.dim) +
                                     ", model d=" + std::to_string(bundle.nets.dim()));
  }
  auto& nets = const_cast<SscdNetworks&>(bundle.nets);  // graph reads parameters only
  const std::size_t t_len = series.length();
  const std::size_t d = series.dim;
  const Matrix x = series_matrix(series);

  Graph g;
  const auto z = nets.encode(g, g.constant(x));
  const auto recon = nets.decode(g, z);
  const auto pred = nets.forecast(g, g.constant(forecast_context(series, bundle.config.context)));
  const Matrix& zv = g.value(z);
  const Matrix& rv = g.value(recon);
  const Matrix& pv = g.value(pred);

  SscdSignals out;
  out.rec.assign(t_len, 0.0);
  out.fore.assign(t_len, 0.0);
  out.nov.assign(t_len, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    out.rec[t] = kernels::squared_distance(rv.row(t), x.row(t)) / static_cast<double>(d);
    if (t > 0) out.fore[t] = kernels::squared_distance(pv.row(t), x.row(t)) / static_cast<double>(d);
  }

  long self_site = -1;
  for (std::size_t i = 0; i < bundle.bank_sites.size(); ++i) {
    if (bundle.bank_sites[i] == series.site_id) self_site = static_cast<long>(i);
  }
  const auto& k = kernels::active();
  const std::size_t n_bank = bundle.bank.rows;
  const std::size_t latent = bundle.bank.cols;
  std::vector<double> dist;
  dist.reserve(n_bank);
  for (std::size_t t = 0; t < t_len; ++t) {
    dist.clear();
    for (std::size_t b = 0; b < n_bank; ++b) {
      if (static_cast<long>(bundle.bank_site[b]) == self_site && bundle.bank_month[b] == t) continue;
      dist.push_back(k.squared_distance(zv.row(t).data(), bundle.bank.row(b).data(), latent));
    }
    if (dist.empty()) continue;
    const std::size_t kk = std::min(bundle.config.knn_k, dist.size());
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk));
    double s = 0.0;
    for (std::size_t i = 0; i < kk; ++i) s += std::sqrt(dist[i]);
    out.nov[t] = s / static_cast<double>(kk);
  }
  return out;
}

CalendarLocations fit_calendar_locations(const std::vector<std::vector<double>>& signals, const TimeAxis& axis) {
  std::array<std::vector<double>, 12> pooled;
  for (const auto& sig : signals) {
    for (std::size_t t = 0; t < sig.size(); ++t) pooled[axis.calendar_month(static_cast<int>(t)) - 1].push_back(sig[t]);
  }
  CalendarLocations out;
  for (int m = 0; m < 12; ++m) out[m] = robust::location(pooled[m]);
  return out;
}

std::vector<double> calibrate_and_zscore(const std::vector<double>& signal, const TimeAxis& axis,
                                         const CalendarLocations& calib, double epsilon) {
  std::vector<double> stage1(signal.size());
  for (std::size_t t = 0; t < signal.size(); ++t) {
    const auto& loc = calib[axis.calendar_month(static_cast<int>(t)) - 1];
    stage1[t] = (signal[t] - loc.median) / (robust::kMadToSigma * loc.mad + epsilon);
  }
  return robust::robust_z(stage1, epsilon);
}

ScoreSeries sscd_ensemble(const std::vector<double>& z_rec, const std::vector<double>& z_fore,
                          const std::vector<double>& z_nov, const EnsembleWeights& alpha) {
  if (z_rec.size() != z_fore.size() || z_rec.size() != z_nov.size()) {
    fail(ErrorCode::kValidation, "ensemble inputs have different lengths");
  }
  ScoreSeries out;
  out.scorer_tag = "sscd";
  out.raw.resize(z_rec.size());
  for (std::size_t t = 0; t < z_rec.size(); ++t) {
    out.raw[t] = alpha.rec * z_rec[t] + alpha.fore * z_fore[t] + alpha.nov * z_nov[t];
  }
  out.probability = minmax_probability(out.raw);
  return out;
}

ScoreSeries sscd_score(const SiteSeries& series, const SscdModelBundle& bundle) {
  const auto sig = sscd_signals(series, bundle);
  const double eps = bundle.config.epsilon;
  auto out = sscd_ensemble(calibrate_and_zscore(sig.rec, series.axis, bundle.calibration[0], eps),
                           calibrate_and_zscore(sig.fore, series.axis, bundle.calibration[1], eps),
                           calibrate_and_zscore(sig.nov, series.axis, bundle.calibration[2], eps), bundle.config.alpha);
  out.site_id = series.site_id;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_params(binio::Writer& w, const nn::ParameterStore& params) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.string(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.cols));
    w.floats(p.value.data);
  }
}

void read_params(binio::Reader& r, nn::ParameterStore& params, const std::string& context) {
  const auto n = r.get<std::uint32_t>();
  if (n != params.size()) fail(ErrorCode::kIo, context + ": parameter count mismatch");
  for (auto& p : params) {
    const auto name = r.string();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (name != p.name || rows != p.value.rows || cols != p.value.cols) {
      fail(ErrorCode::kIo, context + ": unexpected tensor '" + name + "'");
    }
    r.floats(p.value.data);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const SscdModelBundle& b) {
  binio::Writer w;
  w.magic("WSSC");
  w.put<std::uint16_t>(kBundleVersion);
  w.string(nlohmann::json(b.config).dump());
  w.put<std::uint64_t>(b.config.seed);
  w.put<std::uint64_t>(b.stats_fingerprint);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.nets.dim()));
  write_params(w, b.nets.params());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.bank.rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.bank.cols));
  w.floats(b.bank.data);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.bank_sites.size()));
  for (const auto& s : b.bank_sites) w.string(s);
  for (std::size_t i = 0; i < b.bank.rows; ++i) {
    w.put<std::uint32_t>(b.bank_site[i]);
    w.put<std::uint32_t>(b.bank_month[i]);
  }
  for (const auto& signal : b.calibration) {
    for (const auto& loc : signal) {
      w.put<double>(loc.median);
      w.put<double>(loc.mad);
    }
  }
  return w.bytes();
}

SscdModelBundle decode_bundle(std::span<const std::uint8_t> bytes, const std::string& context) {
  binio::Reader r(bytes, context);
  r.expect_magic("WSSC");
  if (r.get<std::uint16_t>() != kBundleVersion) fail(ErrorCode::kIo, context + ": unsupported bundle version");
  SscdModelBundle b;
  try {
    b.config = nlohmann::json::parse(r.string()).get<SscdConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIo, context + ": bad config snapshot: " + e.what());
  }
  b.config.seed = r.get<std::uint64_t>();
  b.stats_fingerprint = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  b.nets = SscdNetworks(dim, b.config);
  read_params(r, b.nets.params(), context);
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  b.bank = Matrix(rows, cols);
  r.floats(b.bank.data);
  const auto n_sites = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_sites; ++i) b.bank_sites.push_back(r.string());
  b.bank_site.resize(rows);
  b.bank_month.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    b.bank_site[i] = r.get<std::uint32_t>();
    b.bank_month[i] = r.get<std::uint32_t>();
    if (b.bank_site[i] >= n_sites) fail(ErrorCode::kIo, context + ": bank row references unknown site");
  }
  for (auto& signal : b.calibration) {
    for (auto& loc : signal) {
      loc.median = r.get<double>();
      loc.mad = r.get<double>();
    }
  }
  r.expect_end();
  return b;
}

void save_bundle(const std::filesystem::path& path, const SscdModelBundle& bundle) {
  binio::write_file(path, encode_bundle(bundle));
}

SscdModelBundle load_bundle(const std::filesystem::path& path) {
  return decode_bundle(binio::read_file(path), path.string());
}

}  // namespace watch
