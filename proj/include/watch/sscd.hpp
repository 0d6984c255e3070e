#pragma once

// Self-supervised change scorer: masked reconstruction error, next-month
// forecast error and latent k-NN novelty, calendar-calibrated, robust
// z-scored per site, and combined with fixed weights.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "watch/datamodel.hpp"
#include "watch/nn.hpp"
#include "watch/robust.hpp"

namespace watch {

struct EnsembleWeights {
  double rec = 0.6;
  double fore = 0.3;
  double nov = 0.4;
};

struct SscdConfig {
  std::size_t latent_dim = 32;
  std::size_t hidden_dim = 128;
  double mask_ratio = 0.25;
  std::size_t knn_k = 5;
  EnsembleWeights alpha;
  // Loss weights: reconstruction, forecasting, temporal contrastive, Barlow Twins.
  double lambda_rec = 1.0;
  double lambda_fore = 1.0;
  double lambda_contrast = 0.1;
  double lambda_bt = 0.01;
  double bt_offdiag = 5e-3;
  double temperature = 0.1;
  std::size_t context = 3;  // forecaster looks back this many months
  int epochs = 100;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  int patience = 10;
  double val_fraction = 0.1;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SscdConfig& c);
void from_json(const nlohmann::json& j, SscdConfig& c);

// Encoder d -> latent, decoder latent -> d, forecaster (context*d) -> d;
// each is two dense layers with a tanh hidden layer.
class SscdNetworks {
 public:
  SscdNetworks() = default;
  SscdNetworks(std::size_t dim, const SscdConfig& cfg);
  void initialize(Rng& rng);

  nn::Graph::Id encode(nn::Graph& g, nn::Graph::Id x);
  nn::Graph::Id decode(nn::Graph& g, nn::Graph::Id z);
  nn::Graph::Id forecast(nn::Graph& g, nn::Graph::Id context);

  std::size_t dim() const { return dim_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

 private:
  nn::Graph::Id mlp(nn::Graph& g, nn::Graph::Id x, std::size_t first);

  std::size_t dim_ = 0;
  std::size_t context_ = 3;
  nn::ParameterStore params_;
  std::size_t enc_ = 0, dec_ = 0, fore_ = 0;  // index of each net's first weight
};

// One optimization batch: targets, previous months, forecast contexts, and the
// two masks (1 = dimension hidden from the encoder).
struct SscdBatch {
  nn::Matrix x, prev, context, mask_a, mask_b;
};

struct SscdLossTerms {
  nn::Graph::Id rec, fore, contrast, bt, total;
};

SscdLossTerms sscd_batch_loss(nn::Graph& g, SscdNetworks& nets, const SscdBatch& batch, const SscdConfig& cfg);

// Zero-padded context rows [z_{t-c}, ..., z_{t-1}] for every t of a series.
nn::Matrix forecast_context(const SiteSeries& series, std::size_t context);
// Per-row mask with max(1, round(ratio*d)) hidden dimensions.
nn::Matrix random_mask(std::size_t rows, std::size_t dim, double ratio, Rng& rng);

using CalendarLocations = std::array<robust::Location, 12>;

struct SscdModelBundle {
  SscdConfig config;
  std::uint64_t stats_fingerprint = 0;
  SscdNetworks nets;
  nn::Matrix bank;                       // latent bank, one row per training month
  std::vector<std::string> bank_sites;   // site id table
  std::vector<std::uint32_t> bank_site;  // per bank row, index into bank_sites
  std::vector<std::uint32_t> bank_month;
  std::array<CalendarLocations, 3> calibration;  // rec, fore, nov
};

struct SscdEpochLog {
  double rec = 0, fore = 0, contrast = 0, bt = 0, total = 0, val_total = 0;
};

SscdModelBundle train_sscd(const Dataset& normalized, const SscdConfig& cfg, std::uint64_t stats_fingerprint = 0,
                           std::vector<SscdEpochLog>* log = nullptr);

struct SscdSignals {
  std::vector<double> rec, fore, nov;
};

SscdSignals sscd_signals(const SiteSeries& series, const SscdModelBundle& bundle);

// Stage 1: per-calendar-month (x - median) / (1.4826 MAD + eps); stage 2: site-local robust z-score.
std::vector<double> calibrate_and_zscore(const std::vector<double>& signal, const TimeAxis& axis,
                                         const CalendarLocations& calib, double epsilon);
CalendarLocations fit_calendar_locations(const std::vector<std::vector<double>>& signals, const TimeAxis& axis);

ScoreSeries sscd_ensemble(const std::vector<double>& z_rec, const std::vector<double>& z_fore,
                          const std::vector<double>& z_nov, const EnsembleWeights& alpha);

ScoreSeries sscd_score(const SiteSeries& series, const SscdModelBundle& bundle);

std::vector<std::uint8_t> encode_bundle(const SscdModelBundle& bundle);
SscdModelBundle decode_bundle(std::span<const std::uint8_t> bytes, const std::string& context = "bundle");
void save_bundle(const std::filesystem::path& path, const SscdModelBundle& bundle);
SscdModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace watch
