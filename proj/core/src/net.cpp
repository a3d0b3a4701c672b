#include "thermctl/net.hpp"

#include <cmath>
#include <stdexcept>

namespace thermctl {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("mlp needs at least two layer sizes");
  for (int s : sizes_)
    if (s <= 0) throw std::invalid_argument("mlp layer sizes must be positive");

  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    Layer lay;
    lay.in = sizes_[l];
    lay.out = sizes_[l + 1];
    lay.w_off = off;
    off += static_cast<Eigen::Index>(lay.in) * lay.out;
    lay.b_off = off;
    off += lay.out;
    layers_.push_back(lay);
  }
  theta_ = Eigen::VectorXd::Zero(off);
  grad_ = Eigen::VectorXd::Zero(off);
}

void Mlp::init_uniform(Rng& rng) {
  for (const Layer& lay : layers_) {
    const double k = 1.0 / std::sqrt(static_cast<double>(lay.in));
    const Eigen::Index n = static_cast<Eigen::Index>(lay.in) * lay.out + lay.out;
    for (Eigen::Index i = 0; i < n; ++i) theta_[lay.w_off + i] = rng.uniform(-k, k);
  }
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  const Layer& lay = layers_[l];
  return {theta_.data() + lay.w_off, lay.out, lay.in};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  const Layer& lay = layers_[l];
  return {theta_.data() + lay.b_off, lay.out};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = h * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward_cached(const Eigen::MatrixXd& x, Cache& cache) const {
  cache.acts.clear();
  cache.acts.reserve(layers_.size() + 1);
  cache.acts.push_back(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = cache.acts.back() * weight(l).transpose();
    z.rowwise() += bias(l).transpose();
    if (l + 1 < layers_.size()) z = z.cwiseMax(0.0);
    cache.acts.push_back(std::move(z));
  }
  return cache.acts.back();
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dl_dy,
                              bool accumulate_param_grads) {
  Eigen::MatrixXd delta = dl_dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    // ReLU derivative recovered from the stored post-activation; output
    // layer is linear so the incoming delta passes through unchanged.
    if (l + 1 < layers_.size())
      delta = delta.cwiseProduct((cache.acts[l + 1].array() > 0.0).cast<double>().matrix());

    if (accumulate_param_grads) {
      const Layer& lay = layers_[l];
      Eigen::Map<Eigen::MatrixXd> dw(grad_.data() + lay.w_off, lay.out, lay.in);
      Eigen::Map<Eigen::VectorXd> db(grad_.data() + lay.b_off, lay.out);
      dw.noalias() += delta.transpose() * cache.acts[l];
      db.noalias() += delta.colwise().sum().transpose();
    }
    delta = delta * weight(l);
  }
  return delta;
}

Eigen::MatrixXd Mlp::input_gradient(const Cache& cache, const Eigen::MatrixXd& dl_dy) const {
  return const_cast<Mlp*>(this)->backward(cache, dl_dy, false);
}

Adam::Adam(Eigen::Index n, double lr)
    : lr_(lr), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grads;
  v_ = beta2_ * v_.array() + (1.0 - beta2_) * grads.array().square();
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= lr_ * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
}

}  // namespace thermctl
