#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "thermctl/net.hpp"
#include "thermctl/rng.hpp"

using namespace thermctl;

TEST_CASE("forward matches a hand-computed two-layer case") {
  // 2 -> 2 -> 1, ReLU hidden. Parameters laid out per layer: column-major W,
  // then b.
  Mlp net({2, 2, 1});
  REQUIRE(net.param_count() == 2 * 2 + 2 + 2 * 1 + 1);
  Eigen::VectorXd theta(net.param_count());
  // W1 = [[1, -1], [0.5, 2]] (out x in), b1 = [0, -1]
  // column-major: w(0,0), w(1,0), w(0,1), w(1,1)
  theta << 1.0, 0.5, -1.0, 2.0, 0.0, -1.0,
      // W2 = [[2, -3]], b2 = [0.25]
      2.0, -3.0, 0.25;
  net.params() = theta;

  Eigen::MatrixXd x(1, 2);
  x << 1.0, 2.0;
  // h_pre = [1*1 - 1*2, 0.5*1 + 2*2] + b = [-1, 3.5]; relu -> [0, 3.5]
  // y = 2*0 - 3*3.5 + 0.25 = -10.25
  const Eigen::MatrixXd y = net.forward(x);
  REQUIRE(y.rows() == 1);
  REQUIRE(y.cols() == 1);
  CHECK(y(0, 0) == doctest::Approx(-10.25));

  // Batched rows evaluate independently.
  Eigen::MatrixXd xb(2, 2);
  xb << 1.0, 2.0, 0.0, 0.0;
  const Eigen::MatrixXd yb = net.forward(xb);
  CHECK(yb(0, 0) == doctest::Approx(-10.25));
  // row2: h_pre = [0, 0] + [0,-1] = [0,-1]; relu -> [0,0]; y = 0.25
  CHECK(yb(1, 0) == doctest::Approx(0.25));
}

TEST_CASE("backward parameter gradients match central finite differences") {
  Rng rng(7);
  Mlp net({3, 4, 2});
  net.init_uniform(rng);

  Eigen::MatrixXd x(5, 3);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd w(5, 2);
  for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);

  // Scalar loss L = sum(w .* y).
  auto loss = [&](const Mlp& m) { return (w.array() * m.forward(x).array()).sum(); };

  Mlp::Cache cache;
  net.forward_cached(x, cache);
  net.zero_grad();
  const Eigen::MatrixXd dx = net.backward(cache, w);

  const double h = 1e-6;
  Mlp probe = net;
  for (Eigen::Index k = 0; k < net.param_count(); ++k) {
    const double orig = net.params()(k);
    probe.params() = net.params();
    probe.params()(k) = orig + h;
    const double up = loss(probe);
    probe.params()(k) = orig - h;
    const double dn = loss(probe);
    const double fd = (up - dn) / (2.0 * h);
    CHECK(net.grads()(k) == doctest::Approx(fd).epsilon(1e-5));
  }

  // Input gradient against finite differences too.
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      Eigen::MatrixXd xp = x;
      xp(r, c) += h;
      const double up = (w.array() * net.forward(xp).array()).sum();
      xp(r, c) -= 2.0 * h;
      const double dn = (w.array() * net.forward(xp).array()).sum();
      CHECK(dx(r, c) == doctest::Approx((up - dn) / (2.0 * h)).epsilon(1e-5));
    }
}

TEST_CASE("input_gradient leaves parameter gradients untouched") {
  Rng rng(9);
  Mlp net({2, 3, 1});
  net.init_uniform(rng);
  Eigen::MatrixXd x(1, 2);
  x << 0.3, -0.7;
  Mlp::Cache cache;
  net.forward_cached(x, cache);
  net.zero_grad();
  Eigen::MatrixXd dy(1, 1);
  dy << 1.0;
  const Eigen::MatrixXd dx = net.input_gradient(cache, dy);
  CHECK(net.grads().cwiseAbs().maxCoeff() == 0.0);
  CHECK(dx.rows() == 1);
  CHECK(dx.cols() == 2);
}

TEST_CASE("init_uniform stays inside the fan-in bound and is seed-deterministic") {
  Rng a(11), b(11);
  Mlp na({4, 8, 8, 2}), nb({4, 8, 8, 2});
  na.init_uniform(a);
  nb.init_uniform(b);
  CHECK((na.params() - nb.params()).cwiseAbs().maxCoeff() == 0.0);
  // First layer has fan_in 4, so |w| <= 0.5; global bound is 1/sqrt(2).
  CHECK(na.params().cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2.0));
}

TEST_CASE("adam follows the reference update on a known sequence") {
  // One parameter, constant gradient 1: after bias correction the first step
  // moves by exactly -lr.
  Adam opt(1, 0.1);
  Eigen::VectorXd p(1), g(1);
  p << 0.0;
  g << 1.0;
  opt.step(p, g);
  const double first = -0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(p(0) == doctest::Approx(first).epsilon(1e-12));

  // Reference second step computed from the algorithm definition.
  const double m2 = 0.9 * 0.1 + 0.1 * 1.0;  // m after two unit gradients
  const double v2 = 0.999 * 0.001 + 0.001 * 1.0;
  const double mhat = m2 / (1.0 - 0.9 * 0.9);
  const double vhat = v2 / (1.0 - 0.999 * 0.999);
  const double expected = first - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  opt.step(p, g);
  CHECK(p(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adam converges on a quadratic") {
  Adam opt(2, 0.05);
  Eigen::VectorXd p(2);
  p << 3.0, -2.0;
  for (int i = 0; i < 2000; ++i) {
    const Eigen::VectorXd g = 2.0 * p;  // d/dp ||p||^2
    opt.step(p, g);
  }
  CHECK(p.norm() < 1e-3);
}
