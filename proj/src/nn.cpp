#include "watch/nn.hpp"

#include <algorithm>
#include <cmath>

#include "watch/error.hpp"
#include "watch/kernels.hpp"

namespace watch::nn {

namespace {

// C += A * B
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* crow = c.data.data() + i * c.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      if (aip != 0.0) k.axpy(aip, b.data.data() + p * b.cols, crow, b.cols);
    }
  }
}

// dA += dC * B^T
void gemm_acc_bt(const Matrix& dc, const Matrix& b, Matrix& da) {
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < dc.rows; ++i) {
    for (std::size_t p = 0; p < b.rows; ++p) {
      da(i, p) += k.dot(dc.data.data() + i * dc.cols, b.data.data() + p * b.cols, dc.cols);
    }
  }
}

// dB += A^T * dC
void gemm_acc_at(const Matrix& a, const Matrix& dc, Matrix& db) {
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* dcrow = dc.data.data() + i * dc.cols;
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double aip = a(i, p);
      if (aip != 0.0) k.axpy(aip, dcrow, db.data.data() + p * db.cols, dc.cols);
    }
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols) {
    fail(ErrorCode::kValidation, std::string(op) + ": shape mismatch " + std::to_string(a.rows) + "x" +
                                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                                     std::to_string(b.cols));
  }
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix normalize_rows(const Matrix& a, std::vector<double>& norms) {
  Matrix out = a;
  norms.assign(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double n = std::sqrt(kernels::dot(a.row(i), a.row(i)) + 1e-12);
    norms[i] = n;
    for (double& v : out.row(i)) v /= n;
  }
  return out;
}

// Backward through x_hat = x / |x| for each row.
void normalize_rows_backward(const Matrix& x_hat, const std::vector<double>& norms, const Matrix& d_hat, Matrix& dx) {
  for (std::size_t i = 0; i < x_hat.rows; ++i) {
    const double proj = kernels::dot(x_hat.row(i), d_hat.row(i));
    for (std::size_t j = 0; j < x_hat.cols; ++j) dx(i, j) += (d_hat(i, j) - x_hat(i, j) * proj) / norms[i];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters and optimizer

std::size_t ParameterStore::add(std::string name, std::size_t rows, std::size_t cols) {
  Parameter p;
  p.name = std::move(name);
  p.value = Matrix(rows, cols);
  p.grad = Matrix(rows, cols);
  p.adam_m = Matrix(rows, cols);
  p.adam_v = Matrix(rows, cols);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterStore::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

double ParameterStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) s += kernels::dot(p.grad.data, p.grad.data);
  return std::sqrt(s);
}

void ParameterStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (!(norm > max_norm)) return;
  const double f = max_norm / (norm + 1e-12);
  for (auto& p : params_) {
    for (double& g : p.grad.data) g *= f;
  }
}

void ParameterStore::round_to_float() {
  for (auto& p : params_) {
    for (double& v : p.value.data) v = static_cast<double>(static_cast<float>(v));
  }
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    for (double v : p.value.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::vector<Matrix> ParameterStore::values() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParameterStore::set_values(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) fail(ErrorCode::kValidation, "parameter snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require_same_shape(values[i], params_[i].value, "set_values");
    params_[i].value = values[i];
  }
}

void init_uniform_fan_in(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : p.value.data) v = rng.uniform(-bound, bound);
}

void Adam::step(ParameterStore& params) {
  if (cfg_.clip_norm > 0.0) params.clip_grad_norm(cfg_.clip_norm);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i] + cfg_.weight_decay * p.value.data[i];
      double& m = p.adam_m.data[i];
      double& v = p.adam_v.data[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      p.value.data[i] -= cfg_.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Graph

Graph::Id Graph::push(Matrix value, bool needs_grad, std::function<void(Graph&, Id)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Matrix& Graph::grad(Id id) {
  Node& n = nodes_[id];
  if (n.grad.rows != n.value.rows || n.grad.cols != n.value.cols) n.grad = Matrix(n.value.rows, n.value.cols);
  return n.grad;
}

Graph::Id Graph::constant(Matrix m) { return push(std::move(m), false, nullptr); }

Graph::Id Graph::param(Parameter& p) {
  const Id id = push(p.value, true, [](Graph& g, Id self) {
    Node& n = g.nodes_[self];
    Parameter& target = *n.param;
    for (std::size_t i = 0; i < n.grad.size(); ++i) target.grad.data[i] += n.grad.data[i];
  });
  nodes_[id].param = &p;
  return id;
}

Graph::Id Graph::matmul(Id a, Id b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols != bv.rows) fail(ErrorCode::kValidation, "matmul: inner dimensions differ");
  Matrix out(av.rows, bv.cols);
  gemm_acc(av, bv, out);
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    if (g.needs(a)) gemm_acc_bt(up, g.value(b), g.grad(a));
    if (g.needs(b)) gemm_acc_at(g.value(a), up, g.grad(b));
  });
}

Graph::Id Graph::add_bias(Id a, Id bias) {
  const Matrix& av = value(a);
  const Matrix& bv = value(bias);
  if (bv.rows != 1 || bv.cols != av.cols) fail(ErrorCode::kValidation, "add_bias: bias must be 1 x cols");
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += bv.data[j];
  }
  return push(std::move(out), needs(a) || needs(bias), [a, bias](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    if (g.needs(a)) {
      Matrix& ga = g.grad(a);
      for (std::size_t i = 0; i < up.size(); ++i) ga.data[i] += up.data[i];
    }
    if (g.needs(bias)) {
      Matrix& gb = g.grad(bias);
      for (std::size_t i = 0; i < up.rows; ++i) {
        for (std::size_t j = 0; j < up.cols; ++j) gb.data[j] += up(i, j);
      }
    }
  });
}

Graph::Id Graph::add(Id a, Id b) {
  require_same_shape(value(a), value(b), "add");
  Matrix out = value(a);
  const Matrix& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    for (Id x : {a, b}) {
      if (!g.needs(x)) continue;
      Matrix& gx = g.grad(x);
      for (std::size_t i = 0; i < up.size(); ++i) gx.data[i] += up.data[i];
    }
  });
}

Graph::Id Graph::sub(Id a, Id b) {
  require_same_shape(value(a), value(b), "sub");
  Matrix out = value(a);
  const Matrix& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= bv.data[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    if (g.needs(a)) {
      Matrix& ga = g.grad(a);
      for (std::size_t i = 0; i < up.size(); ++i) ga.data[i] += up.data[i];
    }
    if (g.needs(b)) {
      Matrix& gb = g.grad(b);
      for (std::size_t i = 0; i < up.size(); ++i) gb.data[i] -= up.data[i];
    }
  });
}

Graph::Id Graph::mul(Id a, Id b) {
  require_same_shape(value(a), value(b), "mul");
  Matrix out = value(a);
  const Matrix& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    if (g.needs(a)) {
      Matrix& ga = g.grad(a);
      const Matrix& bv = g.value(b);
      for (std::size_t i = 0; i < up.size(); ++i) ga.data[i] += up.data[i] * bv.data[i];
    }
    if (g.needs(b)) {
      Matrix& gb = g.grad(b);
      const Matrix& av = g.value(a);
      for (std::size_t i = 0; i < up.size(); ++i) gb.data[i] += up.data[i] * av.data[i];
    }
  });
}

Graph::Id Graph::scale(Id a, double s) {
  Matrix out = value(a);
  for (double& v : out.data) v *= s;
  return push(std::move(out), needs(a), [a, s](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    Matrix& ga = g.grad(a);
    for (std::size_t i = 0; i < up.size(); ++i) ga.data[i] += s * up.data[i];
  });
}

Graph::Id Graph::tanh(Id a) {
  Matrix out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  return push(std::move(out), needs(a), [a](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    const Matrix& y = g.value(self);
    Matrix& ga = g.grad(a);
    for (std::size_t i = 0; i < up.size(); ++i) ga.data[i] += up.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Graph::Id Graph::sigmoid(Id a) {
  Matrix out = value(a);
  for (double& v : out.data) v = nn::sigmoid(v);
  return push(std::move(out), needs(a), [a](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    const Matrix& y = g.value(self);
    Matrix& ga = g.grad(a);
    for (std::size_t i = 0; i < up.size(); ++i) ga.data[i] += up.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Graph::Id Graph::slice_cols(Id a, std::size_t begin, std::size_t end) {
  const Matrix& av = value(a);
  if (begin > end || end > av.cols) fail(ErrorCode::kValidation, "slice_cols out of range");
  Matrix out(av.rows, end - begin);
  for (std::size_t i = 0; i < av.rows; ++i) {
    std::copy(av.row(i).begin() + static_cast<std::ptrdiff_t>(begin), av.row(i).begin() + static_cast<std::ptrdiff_t>(end),
              out.row(i).begin());
  }
  return push(std::move(out), needs(a), [a, begin](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    Matrix& ga = g.grad(a);
    for (std::size_t i = 0; i < up.rows; ++i) {
      for (std::size_t j = 0; j < up.cols; ++j) ga(i, begin + j) += up(i, j);
    }
  });
}

Graph::Id Graph::slice_rows(Id a, std::size_t begin, std::size_t end) {
  const Matrix& av = value(a);
  if (begin > end || end > av.rows) fail(ErrorCode::kValidation, "slice_rows out of range");
  Matrix out(end - begin, av.cols);
  std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(begin * av.cols),
            av.data.begin() + static_cast<std::ptrdiff_t>(end * av.cols), out.data.begin());
  return push(std::move(out), needs(a), [a, begin](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    Matrix& ga = g.grad(a);
    const std::size_t off = begin * up.cols;
    for (std::size_t i = 0; i < up.size(); ++i) ga.data[off + i] += up.data[i];
  });
}

Graph::Id Graph::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) fail(ErrorCode::kValidation, "concat_cols of nothing");
  const std::size_t rows = value(parts[0]).rows;
  std::size_t cols = 0;
  bool any = false;
  for (Id p : parts) {
    if (value(p).rows != rows) fail(ErrorCode::kValidation, "concat_cols: row mismatch");
    cols += value(p).cols;
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (Id p : parts) {
    const Matrix& pv = value(p);
    for (std::size_t i = 0; i < rows; ++i) std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.cols;
  }
  return push(std::move(out), any, [parts](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    std::size_t off = 0;
    for (Id p : parts) {
      const std::size_t pc = g.value(p).cols;
      if (g.needs(p)) {
        Matrix& gp = g.grad(p);
        for (std::size_t i = 0; i < up.rows; ++i) {
          for (std::size_t j = 0; j < pc; ++j) gp(i, j) += up(i, off + j);
        }
      }
      off += pc;
    }
  });
}

Graph::Id Graph::concat_rows(const std::vector<Id>& parts) {
  if (parts.empty()) fail(ErrorCode::kValidation, "concat_rows of nothing");
  const std::size_t cols = value(parts[0]).cols;
  std::size_t rows = 0;
  bool any = false;
  for (Id p : parts) {
    if (value(p).cols != cols) fail(ErrorCode::kValidation, "concat_rows: column mismatch");
    rows += value(p).rows;
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  auto it = out.data.begin();
  for (Id p : parts) it = std::copy(value(p).data.begin(), value(p).data.end(), it);
  return push(std::move(out), any, [parts](Graph& g, Id self) {
    const Matrix& up = g.nodes_[self].grad;
    std::size_t off = 0;
    for (Id p : parts) {
      const std::size_t n = g.value(p).size();
      if (g.needs(p)) {
        Matrix& gp = g.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp.data[i] += up.data[off + i];
      }
      off += n;
    }
  });
}

Graph::Id Graph::layer_norm(Id a, Id gamma, Id beta, double epsilon) {
  const Matrix& x = value(a);
  const Matrix& gv = value(gamma);
  const Matrix& bv = value(beta);
  if (gv.cols != x.cols || bv.cols != x.cols) fail(ErrorCode::kValidation, "layer_norm: affine size mismatch");
  Matrix xhat(x.rows, x.cols);
  std::vector<double> inv(x.rows);
  Matrix out(x.rows, x.cols);
  const double n = static_cast<double>(x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (double v : x.row(i)) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x.row(i)) var += (v - mean) * (v - mean);
    var /= n;
    inv[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < x.cols; ++j) {
      xhat(i, j) = (x(i, j) - mean) * inv[i];
      out(i, j) = gv.data[j] * xhat(i, j) + bv.data[j];
    }
  }
  return push(std::move(out), needs(a) || needs(gamma) || needs(beta),
              [a, gamma, beta, xhat = std::move(xhat), inv = std::move(inv)](Graph& g, Id self) {
                const Matrix& up = g.nodes_[self].grad;
                const Matrix& gv = g.value(gamma);
                const double n = static_cast<double>(up.cols);
                if (g.needs(gamma) || g.needs(beta)) {
                  Matrix& gg = g.grad(gamma);
                  Matrix& gb = g.grad(beta);
                  for (std::size_t i = 0; i < up.rows; ++i) {
                    for (std::size_t j = 0; j < up.cols; ++j) {
                      gg.data[j] += up(i, j) * xhat(i, j);
                      gb.data[j] += up(i, j);
                    }
                  }
                }
                if (g.needs(a)) {
                  Matrix& ga = g.grad(a);
                  for (std::size_t i = 0; i < up.rows; ++i) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < up.cols; ++j) {
                      const double dxh = up(i, j) * gv.data[j];
                      sum_d += dxh;
                      sum_dx += dxh * xhat(i, j);
                    }
                    for (std::size_t j = 0; j < up.cols; ++j) {
                      const double dxh = up(i, j) * gv.data[j];
                      ga(i, j) += inv[i] / n * (n * dxh - sum_d - xhat(i, j) * sum_dx);
                    }
                  }
                }
              });
}

Graph::Id Graph::mse(Id pred, const Matrix& target) {
  const Matrix& p = value(pred);
  require_same_shape(p, target, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p.data[i] - target.data[i]) * (p.data[i] - target.data[i]);
  const double n = static_cast<double>(std::max<std::size_t>(p.size(), 1));
  return push(Matrix(1, 1, s / n), needs(pred), [pred, target, n](Graph& g, Id self) {
    const double up = g.nodes_[self].grad.data[0];
    const Matrix& p = g.value(pred);
    Matrix& gp = g.grad(pred);
    for (std::size_t i = 0; i < p.size(); ++i) gp.data[i] += up * 2.0 * (p.data[i] - target.data[i]) / n;
  });
}

Graph::Id Graph::masked_mse(Id pred, const Matrix& target, const Matrix& mask) {
  const Matrix& p = value(pred);
  require_same_shape(p, target, "masked_mse");
  require_same_shape(p, mask, "masked_mse");
  double s = 0.0, w = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    s += mask.data[i] * (p.data[i] - target.data[i]) * (p.data[i] - target.data[i]);
    w += mask.data[i];
  }
  if (w <= 0.0) w = 1.0;
  return push(Matrix(1, 1, s / w), needs(pred), [pred, target, mask, w](Graph& g, Id self) {
    const double up = g.nodes_[self].grad.data[0];
    const Matrix& p = g.value(pred);
    Matrix& gp = g.grad(pred);
    for (std::size_t i = 0; i < p.size(); ++i) {
      gp.data[i] += up * 2.0 * mask.data[i] * (p.data[i] - target.data[i]) / w;
    }
  });
}

Graph::Id Graph::info_nce(Id anchors, Id positives, double temperature) {
  const Matrix& u = value(anchors);
  const Matrix& v = value(positives);
  require_same_shape(u, v, "info_nce");
  std::vector<double> nu, nv;
  Matrix uh = normalize_rows(u, nu);
  Matrix vh = normalize_rows(v, nv);
  const std::size_t n = u.rows;
  Matrix soft(n, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      soft(i, j) = kernels::dot(uh.row(i), vh.row(j)) / temperature;
      mx = std::max(mx, soft(i, j));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(soft(i, j) - mx);
    const double lse = mx + std::log(z);
    loss += lse - soft(i, i);
    for (std::size_t j = 0; j < n; ++j) soft(i, j) = std::exp(soft(i, j) - lse);
  }
  loss /= static_cast<double>(n);
  return push(Matrix(1, 1, loss), needs(anchors) || needs(positives),
              [anchors, positives, temperature, uh = std::move(uh), vh = std::move(vh), nu = std::move(nu),
               nv = std::move(nv), soft = std::move(soft)](Graph& g, Id self) {
                const double up = g.nodes_[self].grad.data[0];
                const std::size_t n = soft.rows;
                // dS = (softmax - I) / n, scaled by 1/temperature into the cosine terms.
                Matrix ds = soft;
                for (std::size_t i = 0; i < n; ++i) ds(i, i) -= 1.0;
                const double f = up / (static_cast<double>(n) * temperature);
                for (double& x : ds.data) x *= f;
                if (g.needs(anchors)) {
                  Matrix duh(n, uh.cols);
                  gemm_acc(ds, vh, duh);
                  normalize_rows_backward(uh, nu, duh, g.grad(anchors));
                }
                if (g.needs(positives)) {
                  Matrix dvh(n, vh.cols);
                  gemm_acc_at(ds, uh, dvh);
                  normalize_rows_backward(vh, nv, dvh, g.grad(positives));
                }
              });
}

Matrix standardize_columns(const Matrix& a, double epsilon) {
  Matrix out(a.rows, a.cols);
  const double n = static_cast<double>(a.rows);
  for (std::size_t j = 0; j < a.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) mean += a(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) var += (a(i, j) - mean) * (a(i, j) - mean);
    var /= n;
    const double s = std::sqrt(var + epsilon);
    for (std::size_t i = 0; i < a.rows; ++i) out(i, j) = (a(i, j) - mean) / s;
  }
  return out;
}

Matrix cross_correlation(const Matrix& a_std, const Matrix& b_std) {
  Matrix c(a_std.cols, b_std.cols);
  gemm_acc_at(a_std, b_std, c);
  for (double& v : c.data) v /= static_cast<double>(a_std.rows);
  return c;
}

Graph::Id Graph::barlow_twins(Id a, Id b, double offdiag_weight) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require_same_shape(av, bv, "barlow_twins");
  Matrix as = standardize_columns(av, kBarlowEpsilon);
  Matrix bs = standardize_columns(bv, kBarlowEpsilon);
  Matrix c = cross_correlation(as, bs);
  double loss = 0.0;
  for (std::size_t i = 0; i < c.rows; ++i) {
    for (std::size_t j = 0; j < c.cols; ++j) {
      loss += i == j ? (1.0 - c(i, j)) * (1.0 - c(i, j)) : offdiag_weight * c(i, j) * c(i, j);
    }
  }
  return push(Matrix(1, 1, loss), needs(a) || needs(b),
              [a, b, offdiag_weight, as = std::move(as), bs = std::move(bs), c = std::move(c)](Graph& g, Id self) {
                const double up = g.nodes_[self].grad.data[0];
                const double n = static_cast<double>(as.rows);
                Matrix dc(c.rows, c.cols);
                for (std::size_t i = 0; i < c.rows; ++i) {
                  for (std::size_t j = 0; j < c.cols; ++j) {
                    dc(i, j) = up * (i == j ? -2.0 * (1.0 - c(i, j)) : 2.0 * offdiag_weight * c(i, j)) / n;
                  }
                }
                // Backward through per-column standardization.
                const auto through_std = [&](const Matrix& raw, const Matrix& xs, const Matrix& dxs, Matrix& dx) {
                  for (std::size_t j = 0; j < raw.cols; ++j) {
                    double mean = 0.0;
                    for (std::size_t i = 0; i < raw.rows; ++i) mean += raw(i, j);
                    mean /= n;
                    double var = 0.0;
                    for (std::size_t i = 0; i < raw.rows; ++i) var += (raw(i, j) - mean) * (raw(i, j) - mean);
                    const double s = std::sqrt(var / n + kBarlowEpsilon);
                    double md = 0.0, mdx = 0.0;
                    for (std::size_t i = 0; i < raw.rows; ++i) {
                      md += dxs(i, j);
                      mdx += dxs(i, j) * xs(i, j);
                    }
                    md /= n;
                    mdx /= n;
                    for (std::size_t i = 0; i < raw.rows; ++i) dx(i, j) += (dxs(i, j) - md - xs(i, j) * mdx) / s;
                  }
                };
                if (g.needs(a)) {
                  Matrix das(as.rows, as.cols);
                  gemm_acc_bt(bs, dc, das);  // B_std * dC^T
                  through_std(g.value(a), as, das, g.grad(a));
                }
                if (g.needs(b)) {
                  Matrix dbs(bs.rows, bs.cols);
                  gemm_acc(as, dc, dbs);  // A_std * dC
                  through_std(g.value(b), bs, dbs, g.grad(b));
                }
              });
}

Graph::Id Graph::bce_with_logits(Id logits, const Matrix& targets, double pos_weight) {
  const Matrix& x = value(logits);
  require_same_shape(x, targets, "bce_with_logits");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y = targets.data[i];
    s += pos_weight * y * softplus(-x.data[i]) + (1.0 - y) * softplus(x.data[i]);
  }
  const double n = static_cast<double>(std::max<std::size_t>(x.size(), 1));
  return push(Matrix(1, 1, s / n), needs(logits), [logits, targets, pos_weight, n](Graph& g, Id self) {
    const double up = g.nodes_[self].grad.data[0];
    const Matrix& x = g.value(logits);
    Matrix& gx = g.grad(logits);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double y = targets.data[i];
      const double p = nn::sigmoid(x.data[i]);
      gx.data[i] += up * (-pos_weight * y * (1.0 - p) + (1.0 - y) * p) / n;
    }
  });
}

Graph::Id Graph::weighted_sum(const std::vector<std::pair<Id, double>>& terms) {
  double s = 0.0;
  bool any = false;
  for (const auto& [id, w] : terms) {
    if (value(id).size() != 1) fail(ErrorCode::kValidation, "weighted_sum expects scalars");
    s += w * scalar(id);
    any = any || needs(id);
  }
  return push(Matrix(1, 1, s), any, [terms](Graph& g, Id self) {
    const double up = g.nodes_[self].grad.data[0];
    for (const auto& [id, w] : terms) {
      if (g.needs(id)) g.grad(id).data[0] += w * up;
    }
  });
}

void Graph::backward(Id loss) {
  if (value(loss).size() != 1) fail(ErrorCode::kValidation, "backward needs a scalar loss");
  if (!needs(loss)) return;
  grad(loss).data[0] = 1.0;
  for (Id i = loss + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    n.back(*this, i);
  }
}

}  // namespace watch::nn
