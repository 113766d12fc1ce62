#include "fedsim/models.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

std::pair<std::size_t, std::size_t> LocalDataset::block_range(
    std::size_t j) const {
  if (j + 1 >= block_offsets.size()) {
    throw InvalidInput("block index out of range");
  }
  return {block_offsets[j], block_offsets[j + 1]};
}

void LocalDataset::set_blocks(std::size_t m) {
  if (m < 1) throw InvalidInput("set_blocks: need at least one block");
  if (m > size()) {
    throw InvalidInput("set_blocks: more blocks than samples");
  }
  const std::size_t n = size();
  const std::size_t base = n / m;
  const std::size_t extra = n % m;  // first `extra` blocks get one more
  block_offsets.assign(m + 1, 0);
  for (std::size_t j = 0; j < m; ++j) {
    block_offsets[j + 1] = block_offsets[j] + base + (j < extra ? 1 : 0);
  }
}

LossModel::LossModel(double mu_reg) : mu_reg_(mu_reg) {
  if (mu_reg < 0.0) throw InvalidInput("mu_reg must be non-negative");
}

ParamVector LossModel::init_params(Rng&) const {
  return ParamVector(param_size());
}

void LossModel::check_params(const ParamVector& params) const {
  if (params.size() != param_size()) {
    throw InvalidInput("parameter dimension mismatch");
  }
}

void LossModel::check_data(const LocalDataset& data) const {
  if (!data.features.empty() && data.features.front().size() != feature_size()) {
    throw InvalidInput("feature dimension mismatch");
  }
  if (data.features.size() != data.labels.size()) {
    throw InvalidInput("feature/label count mismatch");
  }
}

double LossModel::loss(const ParamVector& params,
                       const LocalDataset& data) const {
  check_params(params);
  check_data(data);
  if (data.size() == 0) throw InvalidInput("loss: empty dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    sum += sample_loss(params, data.features[i], data.labels[i]);
  }
  double value = sum / static_cast<double>(data.size());
  if (mu_reg_ > 0.0) value += 0.5 * mu_reg_ * dot(params, params);
  return value;
}

ParamVector LossModel::block_gradient(const ParamVector& params,
                                      const LocalDataset& data,
                                      std::size_t block) const {
  check_params(params);
  check_data(data);
  const auto [lo, hi] = data.block_range(block);
  ParamVector grad(param_size());
  for (std::size_t i = lo; i < hi; ++i) {
    add_sample_gradient(params, data.features[i], data.labels[i], grad);
  }
  const double inv = 1.0 / static_cast<double>(hi - lo);
  grad *= inv;
  if (mu_reg_ > 0.0) axpy(mu_reg_, params, grad);
  return grad;
}

ParamVector LossModel::full_gradient(const ParamVector& params,
                                     const LocalDataset& data) const {
  const std::size_t m = data.num_blocks();
  if (m == 0) throw InvalidInput("full_gradient: dataset has no blocks");
  ParamVector grad = block_gradient(params, data, 0);
  for (std::size_t j = 1; j < m; ++j) {
    grad += block_gradient(params, data, j);
  }
  grad *= 1.0 / static_cast<double>(m);
  return grad;
}

double LossModel::accuracy(const ParamVector& params,
                           const LocalDataset& data) const {
  if (!is_classifier()) {
    throw Unsupported("accuracy is undefined for regression models");
  }
  check_params(params);
  check_data(data);
  if (data.size() == 0) throw InvalidInput("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pred = predict(params, data.features[i]);
    if (pred == static_cast<std::size_t>(data.labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::size_t LossModel::predict(const ParamVector&,
                               std::span<const double>) const {
  throw Unsupported("predict is undefined for this model");
}

// ---------------------------------------------------------------------------
// BinaryLogistic

BinaryLogistic::BinaryLogistic(std::size_t dim, double mu_reg)
    : LossModel(mu_reg), dim_(dim) {
  if (dim == 0) throw InvalidInput("BinaryLogistic: dim must be positive");
}

namespace {
double dot_span(const ParamVector& w, std::span<const double> x,
                std::size_t offset = 0) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[offset + i] * x[i];
  return s;
}
}  // namespace

double BinaryLogistic::sample_loss(const ParamVector& w,
                                   std::span<const double> x,
                                   double label) const {
  const double z = dot_span(w, x);
  // log(1 + e^z) - y z, evaluated stably for either sign of z
  const double softplus =
      z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - label * z;
}

void BinaryLogistic::add_sample_gradient(const ParamVector& w,
                                         std::span<const double> x,
                                         double label,
                                         ParamVector& grad) const {
  const double z = dot_span(w, x);
  const double p = 1.0 / (1.0 + std::exp(-z));
  const double r = p - label;
  for (std::size_t i = 0; i < dim_; ++i) grad[i] += r * x[i];
}

std::size_t BinaryLogistic::predict(const ParamVector& w,
                                    std::span<const double> x) const {
  return dot_span(w, x) > 0.0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// MultinomialLogistic

MultinomialLogistic::MultinomialLogistic(std::size_t dim, std::size_t classes,
                                         double mu_reg)
    : LossModel(mu_reg), dim_(dim), classes_(classes) {
  if (dim == 0) throw InvalidInput("MultinomialLogistic: dim must be positive");
  if (classes < 2) throw InvalidInput("MultinomialLogistic: need >= 2 classes");
}

void MultinomialLogistic::logits(const ParamVector& p, std::span<const double> x,
                                 std::vector<double>& z) const {
  z.assign(classes_, 0.0);
  const std::size_t bias = classes_ * dim_;
  for (std::size_t c = 0; c < classes_; ++c) {
    z[c] = dot_span(p, x, c * dim_) + p[bias + c];
  }
}

namespace {
// max-subtracted softmax in place; returns log(sum exp(z - max))
double softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return std::log(sum) + mx;
}
}  // namespace

double MultinomialLogistic::sample_loss(const ParamVector& p,
                                        std::span<const double> x,
                                        double label) const {
  std::vector<double> z;
  logits(p, x, z);
  const std::size_t y = static_cast<std::size_t>(label);
  if (y >= classes_) throw InvalidInput("label out of range");
  const double zy = z[y];
  const double lse = softmax_inplace(z);
  return lse - zy;
}

void MultinomialLogistic::add_sample_gradient(const ParamVector& p,
                                              std::span<const double> x,
                                              double label,
                                              ParamVector& grad) const {
  std::vector<double> z;
  logits(p, x, z);
  softmax_inplace(z);
  const std::size_t y = static_cast<std::size_t>(label);
  if (y >= classes_) throw InvalidInput("label out of range");
  const std::size_t bias = classes_ * dim_;
  for (std::size_t c = 0; c < classes_; ++c) {
    const double r = z[c] - (c == y ? 1.0 : 0.0);
    const std::size_t row = c * dim_;
    for (std::size_t i = 0; i < dim_; ++i) grad[row + i] += r * x[i];
    grad[bias + c] += r;
  }
}

std::size_t MultinomialLogistic::predict(const ParamVector& p,
                                         std::span<const double> x) const {
  std::vector<double> z;
  logits(p, x, z);
  return static_cast<std::size_t>(
      std::max_element(z.begin(), z.end()) - z.begin());
}

// ---------------------------------------------------------------------------
// TwoLayerMlp

TwoLayerMlp::TwoLayerMlp(std::size_t dim, std::size_t classes,
                         std::size_t hidden, double mu_reg)
    : LossModel(mu_reg), dim_(dim), classes_(classes), hidden_(hidden) {
  if (dim == 0 || hidden == 0) throw InvalidInput("TwoLayerMlp: zero width");
  if (classes < 2) throw InvalidInput("TwoLayerMlp: need >= 2 classes");
  w1_ = 0;
  b1_ = w1_ + hidden_ * dim_;
  w2_ = b1_ + hidden_;
  b2_ = w2_ + hidden_ * hidden_;
  w3_ = b2_ + hidden_;
  b3_ = w3_ + classes_ * hidden_;
}

std::size_t TwoLayerMlp::param_size() const { return b3_ + classes_; }

ParamVector TwoLayerMlp::init_params(Rng& rng) const {
  ParamVector p(param_size());
  const auto glorot = [&](std::size_t offset, std::size_t rows,
                          std::size_t cols) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < rows * cols; ++i) {
      p[offset + i] = rng.uniform(-bound, bound);
    }
  };
  glorot(w1_, hidden_, dim_);
  glorot(w2_, hidden_, hidden_);
  glorot(w3_, classes_, hidden_);
  return p;
}

struct TwoLayerMlp::Forward {
  std::vector<double> a1, a2, probs;
  double log_sum = 0.0;
};

void TwoLayerMlp::forward(const ParamVector& p, std::span<const double> x,
                          Forward& f) const {
  f.a1.assign(hidden_, 0.0);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double z = p[b1_ + h];
    const std::size_t row = w1_ + h * dim_;
    for (std::size_t i = 0; i < dim_; ++i) z += p[row + i] * x[i];
    f.a1[h] = z > 0.0 ? z : 0.0;
  }
  f.a2.assign(hidden_, 0.0);
  for (std::size_t h = 0; h < hidden_; ++h) {
    double z = p[b2_ + h];
    const std::size_t row = w2_ + h * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) z += p[row + i] * f.a1[i];
    f.a2[h] = z > 0.0 ? z : 0.0;
  }
  f.probs.assign(classes_, 0.0);
  for (std::size_t c = 0; c < classes_; ++c) {
    double z = p[b3_ + c];
    const std::size_t row = w3_ + c * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) z += p[row + i] * f.a2[i];
    f.probs[c] = z;
  }
  f.log_sum = softmax_inplace(f.probs);
}

double TwoLayerMlp::sample_loss(const ParamVector& p, std::span<const double> x,
                                double label) const {
  const std::size_t y = static_cast<std::size_t>(label);
  if (y >= classes_) throw InvalidInput("label out of range");
  Forward f;
  // recompute the logit for y from the softmax output to avoid keeping z
  forward(p, x, f);
  return -std::log(std::max(f.probs[y], 1e-300));
}

void TwoLayerMlp::add_sample_gradient(const ParamVector& p,
                                      std::span<const double> x, double label,
                                      ParamVector& grad) const {
  const std::size_t y = static_cast<std::size_t>(label);
  if (y >= classes_) throw InvalidInput("label out of range");
  Forward f;
  forward(p, x, f);

  // output layer: delta3 = probs - onehot(y)
  std::vector<double> delta3(f.probs);
  delta3[y] -= 1.0;
  std::vector<double> delta2(hidden_, 0.0);
  for (std::size_t c = 0; c < classes_; ++c) {
    const double d = delta3[c];
    const std::size_t row = w3_ + c * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      grad[row + i] += d * f.a2[i];
      delta2[i] += d * p[row + i];
    }
    grad[b3_ + c] += d;
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    if (f.a2[h] <= 0.0) delta2[h] = 0.0;  // ReLU gate
  }
  std::vector<double> delta1(hidden_, 0.0);
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double d = delta2[h];
    if (d == 0.0) continue;
    const std::size_t row = w2_ + h * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      grad[row + i] += d * f.a1[i];
      delta1[i] += d * p[row + i];
    }
    grad[b2_ + h] += d;
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    if (f.a1[h] <= 0.0) delta1[h] = 0.0;
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double d = delta1[h];
    if (d == 0.0) continue;
    const std::size_t row = w1_ + h * dim_;
    for (std::size_t i = 0; i < dim_; ++i) grad[row + i] += d * x[i];
    grad[b1_ + h] += d;
  }
}

std::size_t TwoLayerMlp::predict(const ParamVector& p,
                                 std::span<const double> x) const {
  Forward f;
  forward(p, x, f);
  return static_cast<std::size_t>(
      std::max_element(f.probs.begin(), f.probs.end()) - f.probs.begin());
}

// ---------------------------------------------------------------------------
// LeastSquares

LeastSquares::LeastSquares(std::size_t dim, double mu_reg)
    : LossModel(mu_reg), dim_(dim) {
  if (dim == 0) throw InvalidInput("LeastSquares: dim must be positive");
}

double LeastSquares::sample_loss(const ParamVector& w, std::span<const double> x,
                                 double label) const {
  const double r = dot_span(w, x) - label;
  return 0.5 * r * r;
}

void LeastSquares::add_sample_gradient(const ParamVector& w,
                                       std::span<const double> x, double label,
                                       ParamVector& grad) const {
  const double r = dot_span(w, x) - label;
  for (std::size_t i = 0; i < dim_; ++i) grad[i] += r * x[i];
}

// ---------------------------------------------------------------------------
// TraceRegression

TraceRegression::TraceRegression(std::size_t side, double mu_reg)
    : LossModel(mu_reg), side_(side) {
  if (side == 0) throw InvalidInput("TraceRegression: side must be positive");
}

double TraceRegression::sample_loss(const ParamVector& x_mat,
                                    std::span<const double> d, double y) const {
  const double r = dot_span(x_mat, d) - y;
  return r * r;
}

void TraceRegression::add_sample_gradient(const ParamVector& x_mat,
                                          std::span<const double> d, double y,
                                          ParamVector& grad) const {
  const double r = 2.0 * (dot_span(x_mat, d) - y);
  for (std::size_t i = 0; i < d.size(); ++i) grad[i] += r * d[i];
}

}  // namespace fedsim
