#pragma once

// Minimal reverse-mode differentiation over dense row-major matrices, plus
// parameter storage and the Adam optimizer. Enough to train the SSCD
// networks and the recurrent localizer without an external framework.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "watch/random.hpp"

namespace watch::nn {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;
};

// Value-semantic parameter list; copying a store snapshots every tensor.
class ParameterStore {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t count() const;  // total scalar parameters

  std::vector<Parameter>::iterator begin() { return params_.begin(); }
  std::vector<Parameter>::iterator end() { return params_.end(); }
  std::vector<Parameter>::const_iterator begin() const { return params_.begin(); }
  std::vector<Parameter>::const_iterator end() const { return params_.end(); }

  void zero_grad();
  double grad_norm() const;
  // Rescales gradients so their global L2 norm is at most `max_norm`.
  void clip_grad_norm(double max_norm);
  // Snaps every value to the nearest float32 so in-memory and on-disk models agree exactly.
  void round_to_float();
  bool all_finite() const;

  std::vector<Matrix> values() const;
  void set_values(const std::vector<Matrix>& values);

 private:
  std::vector<Parameter> params_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_uniform_fan_in(Parameter& p, std::size_t fan_in, Rng& rng);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;  // L2 term added to the gradient
  double clip_norm = 1.0;      // <= 0 disables clipping
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(ParameterStore& params);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
};

class Graph {
 public:
  using Id = std::size_t;

  Id constant(Matrix m);
  Id param(Parameter& p);
  const Matrix& value(Id id) const { return nodes_[id].value; }
  double scalar(Id id) const { return nodes_[id].value.data[0]; }
  std::size_t node_count() const { return nodes_.size(); }

  Id matmul(Id a, Id b);
  Id add_bias(Id a, Id bias);  // bias is 1 x cols, broadcast over rows
  Id linear(Id x, Parameter& weight, Parameter& bias) { return add_bias(matmul(x, param(weight)), param(bias)); }
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id tanh(Id a);
  Id sigmoid(Id a);
  Id slice_cols(Id a, std::size_t begin, std::size_t end);
  Id slice_rows(Id a, std::size_t begin, std::size_t end);
  Id concat_cols(const std::vector<Id>& parts);
  Id concat_rows(const std::vector<Id>& parts);
  Id layer_norm(Id a, Id gamma, Id beta, double epsilon = 1e-5);

  // Scalar (1 x 1) losses.
  Id mse(Id pred, const Matrix& target);
  Id masked_mse(Id pred, const Matrix& target, const Matrix& mask);
  // Rows of `anchors` and `positives` are L2-normalized; row i of positives is
  // the positive for anchor i and every other row is a negative.
  Id info_nce(Id anchors, Id positives, double temperature);
  // Cross-correlation of the per-column standardized views; on-diagonal pulled
  // to 1, off-diagonal pushed to 0 with weight `offdiag_weight`.
  Id barlow_twins(Id a, Id b, double offdiag_weight);
  // Mean of  pos_weight*y*softplus(-x) + (1-y)*softplus(x).
  Id bce_with_logits(Id logits, const Matrix& targets, double pos_weight);
  Id weighted_sum(const std::vector<std::pair<Id, double>>& terms);

  // Accumulates d(loss)/d(param) into every reachable Parameter::grad.
  void backward(Id loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Graph&, Id)> back;
  };

  Id push(Matrix value, bool needs_grad, std::function<void(Graph&, Id)> back);
  Matrix& grad(Id id);
  bool needs(Id id) const { return nodes_[id].needs_grad; }

  std::vector<Node> nodes_;
};

// Standardized views and cross-correlation used by Graph::barlow_twins; exposed for testing.
Matrix standardize_columns(const Matrix& a, double epsilon);
Matrix cross_correlation(const Matrix& a_std, const Matrix& b_std);

inline constexpr double kBarlowEpsilon = 1e-12;

}  // namespace watch::nn
