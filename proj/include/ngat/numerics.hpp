#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ngat/errors.hpp"

namespace ngat {

// Dense row-major matrix of doubles. Vectors are stored as n x 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string());
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != m.cols_) throw DimensionError("Matrix::from_rows: ragged rows");
      m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
  }

  static Matrix column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// y = W x for W (rows x cols), x of length cols. Accumulates into y when
// accumulate is set.
inline void gemv(const Matrix& w, std::span<const double> x, std::span<double> y,
                 bool accumulate = false) {
  if (x.size() != w.cols() || y.size() != w.rows()) {
    throw DimensionError("gemv: " + w.shape_string() + " with x[" + std::to_string(x.size()) +
                         "], y[" + std::to_string(y.size()) + "]");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto wr = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < wr.size(); ++c) acc += wr[c] * x[c];
    y[r] = accumulate ? y[r] + acc : acc;
  }
}

// y += W^T g for W (rows x cols), g of length rows, y of length cols.
inline void gemv_t_acc(const Matrix& w, std::span<const double> g, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const auto wr = w.row(r);
    for (std::size_t c = 0; c < wr.size(); ++c) y[c] += wr[c] * gr;
  }
}

// W += g x^T (outer-product accumulation into a gradient).
inline void outer_acc(Matrix& w, std::span<const double> g, std::span<const double> x) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    auto wr = w.row(r);
    for (std::size_t c = 0; c < wr.size(); ++c) wr[c] += gr * x[c];
  }
}

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double leaky_relu_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

inline Matrix leaky_relu(const Matrix& x, double slope) {
  if (slope < 0.0) throw ContractViolation("leaky_relu: slope must be >= 0");
  Matrix out = x;
  for (auto& v : out.data()) v = std::max(v, slope * v);
  return out;
}

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Softmax over the entries where mask is set. Masked-out entries are exactly
// zero. Scores are shifted by the masked-in maximum before exponentiation.
inline std::vector<double> masked_softmax(std::span<const double> scores,
                                          std::span<const std::uint8_t> mask) {
  if (scores.size() != mask.size()) {
    throw DimensionError("masked_softmax: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(mask.size()) + " mask entries");
  }
  double peak = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!mask[j]) continue;
    any = true;
    peak = std::max(peak, scores[j]);
  }
  if (!any) throw ContractViolation("masked_softmax: mask selects no entries");
  std::vector<double> out(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (!mask[j]) continue;
    out[j] = std::exp(scores[j] - peak);
    total += out[j];
  }
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (mask[j]) out[j] /= total;
  return out;
}

// Uniform in [-L, L], L = sqrt(6 / (rows + cols)).
inline Matrix glorot_init(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  if (rows == 0 || cols == 0) throw ContractViolation("glorot_init: rows and cols must be >= 1");
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

inline Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return glorot_init(rows, cols, rng);
}

// Learnable array with its gradient slot and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix gradient;
  Matrix adam_m;
  Matrix adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        gradient(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()) {}

  void zero_grad() { gradient.fill(0.0); }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

// Classic Adam with bias correction. Weight decay enters as an L2 term on the
// gradient before the moment updates. Clears the gradient afterwards.
inline void adam_step(Parameter& p, const AdamConfig& cfg) {
  if (!p.gradient.same_shape(p.value) || !p.adam_m.same_shape(p.value) ||
      !p.adam_v.same_shape(p.value)) {
    throw DimensionError("adam_step: state shapes differ from value for '" + p.name + "'");
  }
  if (!p.gradient.all_finite()) {
    throw NumericError("adam_step: non-finite gradient in parameter '" + p.name + "'");
  }
  ++p.step_count;
  const double t = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto& w = p.value.data();
  auto& g = p.gradient.data();
  auto& m = p.adam_m.data();
  auto& v = p.adam_v.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i] + cfg.weight_decay * w[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    g[i] = 0.0;
  }
}

inline void adam_step(Parameter& p, double lr, double beta1, double beta2, double eps,
                      double weight_decay) {
  adam_step(p, AdamConfig{lr, beta1, beta2, eps, weight_decay});
}

// Central differences, one entry at a time. x is restored before returning.
inline Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f, Matrix x,
                                         double h) {
  if (!(h > 0.0)) throw ContractViolation("finite_difference_gradient: h must be > 0");
  Matrix grad(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries that are zero in
// both from dividing by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace ngat
