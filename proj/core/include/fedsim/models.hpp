#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

class Rng;

/// One client's data: samples plus a partition of the sample indices into
/// M contiguous blocks (the unit a stochastic gradient is evaluated on).
struct LocalDataset {
  std::vector<std::vector<double>> features;
  std::vector<double> labels;  // class index or real observation
  std::vector<std::size_t> block_offsets{0};  // length M+1, ascending

  std::size_t size() const { return features.size(); }
  std::size_t num_blocks() const {
    return block_offsets.empty() ? 0 : block_offsets.size() - 1;
  }
  std::pair<std::size_t, std::size_t> block_range(std::size_t j) const;

  /// Re-partition into m contiguous blocks whose sizes differ by at most one
  /// (earlier blocks take the remainder).
  void set_blocks(std::size_t m);
};

/// Evaluation contract shared by every training model: loss value, per-block
/// stochastic gradient, full local gradient, and classification metrics.
/// Gradients are mean-normalized: block_gradient is the gradient of the
/// block-mean loss, and full_gradient is exactly the M-block mean of block
/// gradients. An optional L2 term mu_reg/2*||params||^2 is added to every
/// loss and gradient.
class LossModel {
 public:
  enum class ProxKind { Elementwise, Nuclear };

  virtual ~LossModel() = default;

  virtual std::size_t param_size() const = 0;
  virtual std::size_t feature_size() const = 0;
  virtual bool is_classifier() const = 0;
  virtual ProxKind prox_kind() const { return ProxKind::Elementwise; }
  /// Side length when parameters are a square matrix, otherwise 0.
  virtual std::size_t matrix_side() const { return 0; }
  virtual ParamVector init_params(Rng& rng) const;

  double loss(const ParamVector& params, const LocalDataset& data) const;
  ParamVector block_gradient(const ParamVector& params, const LocalDataset& data,
                             std::size_t block) const;
  ParamVector full_gradient(const ParamVector& params,
                            const LocalDataset& data) const;
  /// Fraction of argmax-correct predictions; Unsupported for regression models.
  double accuracy(const ParamVector& params, const LocalDataset& data) const;

  double mu_reg() const { return mu_reg_; }

 protected:
  explicit LossModel(double mu_reg);

  virtual double sample_loss(const ParamVector& params,
                             std::span<const double> x, double label) const = 0;
  /// Accumulate the per-sample gradient into `grad` (+=).
  virtual void add_sample_gradient(const ParamVector& params,
                                   std::span<const double> x, double label,
                                   ParamVector& grad) const = 0;
  virtual std::size_t predict(const ParamVector& params,
                              std::span<const double> x) const;

  void check_params(const ParamVector& params) const;
  void check_data(const LocalDataset& data) const;

  double mu_reg_ = 0.0;
};

/// Cross-entropy on labels {0,1} with a linear score w.x (no bias term, so
/// the transmitted gradient matches the closed form (sigmoid(w.x)-y)*x).
class BinaryLogistic final : public LossModel {
 public:
  explicit BinaryLogistic(std::size_t dim, double mu_reg = 0.0);
  std::size_t param_size() const override { return dim_; }
  std::size_t feature_size() const override { return dim_; }
  bool is_classifier() const override { return true; }

 protected:
  double sample_loss(const ParamVector&, std::span<const double>,
                     double) const override;
  void add_sample_gradient(const ParamVector&, std::span<const double>, double,
                           ParamVector&) const override;
  std::size_t predict(const ParamVector&, std::span<const double>) const override;

 private:
  std::size_t dim_;
};

/// Softmax cross-entropy with C classes; parameters are W (C x d) then bias.
class MultinomialLogistic final : public LossModel {
 public:
  MultinomialLogistic(std::size_t dim, std::size_t classes, double mu_reg = 0.0);
  std::size_t param_size() const override { return classes_ * dim_ + classes_; }
  std::size_t feature_size() const override { return dim_; }
  bool is_classifier() const override { return true; }
  std::size_t classes() const { return classes_; }

 protected:
  double sample_loss(const ParamVector&, std::span<const double>,
                     double) const override;
  void add_sample_gradient(const ParamVector&, std::span<const double>, double,
                           ParamVector&) const override;
  std::size_t predict(const ParamVector&, std::span<const double>) const override;

 private:
  void logits(const ParamVector& p, std::span<const double> x,
              std::vector<double>& z) const;
  std::size_t dim_;
  std::size_t classes_;
};

/// Fully connected net with two ReLU hidden layers and a softmax output.
class TwoLayerMlp final : public LossModel {
 public:
  TwoLayerMlp(std::size_t dim, std::size_t classes, std::size_t hidden = 200,
              double mu_reg = 0.0);
  std::size_t param_size() const override;
  std::size_t feature_size() const override { return dim_; }
  bool is_classifier() const override { return true; }
  std::size_t hidden() const { return hidden_; }
  /// Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights, zero biases.
  ParamVector init_params(Rng& rng) const override;

 protected:
  double sample_loss(const ParamVector&, std::span<const double>,
                     double) const override;
  void add_sample_gradient(const ParamVector&, std::span<const double>, double,
                           ParamVector&) const override;
  std::size_t predict(const ParamVector&, std::span<const double>) const override;

 private:
  struct Forward;
  void forward(const ParamVector& p, std::span<const double> x, Forward& f) const;
  std::size_t dim_;
  std::size_t classes_;
  std::size_t hidden_;
  // parameter layout offsets: [W1 | b1 | W2 | b2 | W3 | b3]
  std::size_t w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Scalar least squares 1/2 (w.x - y)^2.
class LeastSquares final : public LossModel {
 public:
  explicit LeastSquares(std::size_t dim, double mu_reg = 0.0);
  std::size_t param_size() const override { return dim_; }
  std::size_t feature_size() const override { return dim_; }
  bool is_classifier() const override { return false; }

 protected:
  double sample_loss(const ParamVector&, std::span<const double>,
                     double) const override;
  void add_sample_gradient(const ParamVector&, std::span<const double>, double,
                           ParamVector&) const override;

 private:
  std::size_t dim_;
};

/// Trace regression for low-rank matrix recovery: per-sample loss
/// (<X, D> - y)^2 with X and D both d x d (stored flat, row-major).
class TraceRegression final : public LossModel {
 public:
  explicit TraceRegression(std::size_t side, double mu_reg = 0.0);
  std::size_t param_size() const override { return side_ * side_; }
  std::size_t feature_size() const override { return side_ * side_; }
  bool is_classifier() const override { return false; }
  ProxKind prox_kind() const override { return ProxKind::Nuclear; }
  std::size_t matrix_side() const override { return side_; }

 protected:
  double sample_loss(const ParamVector&, std::span<const double>,
                     double) const override;
  void add_sample_gradient(const ParamVector&, std::span<const double>, double,
                           ParamVector&) const override;

 private:
  std::size_t side_;
};

}  // namespace fedsim
