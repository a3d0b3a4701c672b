#pragma once

#include <Eigen/Dense>
#include <vector>

#include "thermctl/rng.hpp"

namespace thermctl {

/// Fully connected network with ReLU hidden layers and a linear output
/// layer, double precision throughout. Parameters live in one flat vector
/// (per layer: column-major W, then b) so optimizer steps, checkpointing and
/// finite-difference checks all address the same storage.
///
/// Batched convention: rows are samples, y = x * W^T + b per layer.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> layer_sizes);

  /// U(-k, k) with k = 1/sqrt(fan_in) for both weights and biases.
  void init_uniform(Rng& rng);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }

  Eigen::Index param_count() const { return theta_.size(); }
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }
  Eigen::VectorXd& grads() { return grad_; }
  const Eigen::VectorXd& grads() const { return grad_; }
  void zero_grad() { grad_.setZero(); }

  /// Loss-only evaluation; no intermediate state kept.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Post-activation of every layer, kept for the backward pass.
  struct Cache {
    std::vector<Eigen::MatrixXd> acts;  ///< acts[0] = input, acts.back() = output
  };

  Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& x, Cache& cache) const;

  /// Accumulates parameter gradients (unless skipped) and returns dL/dinput.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dl_dy,
                           bool accumulate_param_grads = true);

  /// Gradient wrt the input only; parameter gradients untouched.
  Eigen::MatrixXd input_gradient(const Cache& cache, const Eigen::MatrixXd& dl_dy) const;

 private:
  struct Layer {
    Eigen::Index w_off = 0, b_off = 0;
    int in = 0, out = 0;
  };

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd grad_;
};

/// Plain Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double lr);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grads);
  double learning_rate() const { return lr_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

}  // namespace thermctl
