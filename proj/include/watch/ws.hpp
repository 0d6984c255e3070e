#pragma once

// Weakly supervised monthly localizer: per-month MLP encoder, stacked
// unidirectional LSTM, and a per-step logit head trained against
// Gaussian-smoothed event targets.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "watch/datamodel.hpp"
#include "watch/nn.hpp"

namespace watch {

struct WsConfig {
  std::size_t encoder_dim = 128;
  std::size_t hidden_dim = 128;
  std::size_t layers = 2;
  double sigma_w = 2.0;
  int c_end = 47;
  std::optional<double> pos_weight;  // unset: ratio of near-zero to positive targets
  int oversample = 4;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  int patience = 10;
  int max_epochs = 200;
  std::size_t batch_sites = 16;
  std::uint64_t seed = 0;

  void validate() const;
  void validate_for(const TimeAxis& axis) const;
};

void to_json(nlohmann::json& j, const WsConfig& c);
void from_json(const nlohmann::json& j, WsConfig& c);

// c when the site is looted with an event month at or before c_end, otherwise -1.
int known_idx(const SiteLabel& label, int c_end);

// Zeros for preserved sites, a Gaussian bump for known-month looted sites,
// nothing for looted sites whose month is unknown or past the cutoff.
std::optional<std::vector<double>> build_targets(const SiteLabel& label, int length, double sigma_w, int c_end);

struct WsItem {
  const SiteSeries* series = nullptr;
  std::vector<double> target;
};

struct WsTrainingSet {
  std::vector<WsItem> items;
  std::size_t positives = 0;  // distinct known-month sites before oversampling
  std::vector<std::string> warnings;
};

// Training items from sites in `split` (sites without an assigned split count as train).
// Positive sites repeat `oversample` times when `oversample_positives` is set.
WsTrainingSet assemble_training_set(const Dataset& dataset, const WsConfig& cfg, Split split = Split::kTrain,
                                    bool oversample_positives = true);

// count(y < 0.05) / count(y >= 0.05); 1 when there are no positives.
double default_pos_weight(const WsTrainingSet& set);

class WsNetwork {
 public:
  WsNetwork() = default;
  WsNetwork(std::size_t dim, const WsConfig& cfg);
  void initialize(Rng& rng);

  // Logits for a batch of equal-length sequences, one column, rows ordered
  // t-major (row t*B + b).
  nn::Graph::Id forward(nn::Graph& g, const std::vector<const SiteSeries*>& batch);

  std::size_t dim() const { return dim_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

 private:
  std::size_t dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t layers_ = 0;
  nn::ParameterStore params_;
};

struct WsModel {
  WsConfig config;
  std::uint64_t stats_fingerprint = 0;
  double pos_weight = 1.0;
  WsNetwork net;
};

// Weighted BCE over a batch of items, targets arranged to match forward().
nn::Graph::Id ws_batch_loss(nn::Graph& g, WsNetwork& net, const std::vector<const WsItem*>& batch,
                            double pos_weight);

struct WsEpochLog {
  double train_loss = 0, val_loss = 0;
};

// `validation` may be empty, in which case the training loss drives early stopping.
WsModel train_ws(const WsTrainingSet& training, const WsTrainingSet& validation, std::size_t dim,
                 const WsConfig& cfg, std::uint64_t stats_fingerprint = 0, std::vector<WsEpochLog>* log = nullptr);

// raw = logits, probability = sigmoid(logits).
ScoreSeries ws_predict(const WsModel& model, const SiteSeries& series);

std::vector<std::uint8_t> encode_ws_model(const WsModel& model);
WsModel decode_ws_model(std::span<const std::uint8_t> bytes, const std::string& context = "model");
void save_ws_model(const std::filesystem::path& path, const WsModel& model);
WsModel load_ws_model(const std::filesystem::path& path);

// Hard error when a model is used with statistics other than the ones it was trained on.
void require_fingerprint(std::uint64_t model_fp, std::uint64_t stats_fp, const std::string& what);

}  // namespace watch
